// Copyright 2026 The sparsedist Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Localization via non-adaptive group testing.
//
// A T x d binary measurement matrix is built from a Reed-Solomon outer code
// over a prime field concatenated with a one-hot inner code (Kautz-Singleton).
// Localization clients are spread over the rows; each reports whether its
// sample participates in its row (1 bit) or, with b bits, which row of its
// slice of the sample's column is set. The server ORs reports per row and
// keeps every column whose support lies inside the positive rows.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "sparsedist/core.hpp"

namespace sparsedist {

inline bool is_prime(std::uint64_t q) {
  if (q < 2) return false;
  for (std::uint64_t f = 2; f * f <= q; ++f)
    if (q % f == 0) return false;
  return true;
}

/// Arithmetic in GF(q) for prime q. Elements are integers in [0, q).
class PrimeField {
 public:
  using Element = std::uint32_t;

  explicit PrimeField(std::uint32_t q) : q_(q) {
    detail::require(is_prime(q), std::to_string(q) + " is not prime");
  }

  std::uint32_t modulus() const noexcept { return q_; }
  Element add(Element a, Element b) const noexcept { return static_cast<Element>((std::uint64_t{a} + b) % q_); }
  Element sub(Element a, Element b) const noexcept { return static_cast<Element>((std::uint64_t{a} + q_ - b) % q_); }
  Element neg(Element a) const noexcept { return sub(0, a); }
  Element mul(Element a, Element b) const noexcept { return static_cast<Element>((std::uint64_t{a} * b) % q_); }

  Element pow(Element a, std::uint64_t e) const noexcept {
    Element acc = 1 % q_;
    while (e > 0) {
      if (e & 1u) acc = mul(acc, a);
      a = mul(a, a);
      e >>= 1;
    }
    return acc;
  }

  Element inv(Element a) const {
    if (a % q_ == 0) throw InvalidArgument("zero has no inverse");
    return pow(a, q_ - 2);
  }

 private:
  std::uint32_t q_;
};

/// Evaluations at 0, 1, ..., q-1 of the polynomial whose coefficients (lowest
/// degree first) are `message`.
inline std::vector<std::uint32_t> rs_codeword(std::span<const std::uint32_t> message,
                                              std::uint32_t q) {
  const PrimeField field(q);
  detail::require(!message.empty(), "message must have at least one symbol");
  detail::require(message.size() <= q, "message length k exceeds q");
  for (auto c : message) detail::require(c < q, "message symbol outside the field");
  std::vector<std::uint32_t> out(q);
  for (std::uint32_t a = 0; a < q; ++a) {
    std::uint32_t acc = 0;
    for (std::size_t k = message.size(); k-- > 0;) acc = field.add(field.mul(acc, a), message[k]);
    out[a] = acc;
  }
  return out;
}

/// Base-q digits of (j - 1), least significant first, padded to k digits.
inline std::vector<std::uint32_t> column_message(Symbol j, std::uint32_t q, unsigned k) {
  std::vector<std::uint32_t> digits(k, 0);
  std::uint64_t v = j - 1;
  for (unsigned t = 0; t < k; ++t) {
    digits[t] = static_cast<std::uint32_t>(v % q);
    v /= q;
  }
  detail::require(v == 0, "column index does not fit in k base-q digits");
  return digits;
}

struct KsParams {
  std::uint32_t q = 0;
  unsigned k = 0;

  friend bool operator==(const KsParams&, const KsParams&) = default;
};

/// T x d binary matrix stored as sorted 1-based row supports per column.
class MeasurementMatrix {
 public:
  MeasurementMatrix(std::uint32_t rows, std::vector<std::vector<std::uint32_t>> columns,
                    std::optional<KsParams> ks = std::nullopt)
      : rows_(rows), columns_(std::move(columns)), ks_(ks) {
    detail::require(rows_ >= 1, "matrix needs at least one row");
    detail::require(!columns_.empty(), "matrix needs at least one column");
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& col = columns_[j];
      for (std::size_t r = 0; r < col.size(); ++r) {
        detail::require(col[r] >= 1 && col[r] <= rows_,
                        "column " + std::to_string(j + 1) + ": row " + std::to_string(col[r]) +
                            " outside [1.." + std::to_string(rows_) + "]");
        if (r > 0) {
          detail::require(col[r] != col[r - 1], "column " + std::to_string(j + 1) +
                                                    ": duplicate row " + std::to_string(col[r]));
          detail::require(col[r] > col[r - 1],
                          "column " + std::to_string(j + 1) + ": rows not sorted");
        }
      }
    }
    if (ks_) {
      const std::uint32_t q = ks_->q;
      detail::require(rows_ == q * q, "Kautz-Singleton matrix must have q^2 rows");
      for (const auto& col : columns_) {
        detail::require(col.size() == q, "Kautz-Singleton column must have exactly q ones");
        for (std::uint32_t a = 0; a < q; ++a)
          detail::require((col[a] - 1) / q == a, "Kautz-Singleton column needs one 1 per block");
      }
    }
  }

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return static_cast<std::uint32_t>(columns_.size()); }
  std::span<const std::uint32_t> column(Symbol j) const {
    detail::require(j >= 1 && j <= cols(), "column index out of range");
    return columns_[j - 1];
  }
  bool entry(std::uint32_t row, Symbol j) const {
    const auto col = column(j);
    return std::binary_search(col.begin(), col.end(), row);
  }
  const std::optional<KsParams>& ks_params() const noexcept { return ks_; }

  friend bool operator==(const MeasurementMatrix&, const MeasurementMatrix&) = default;

 private:
  std::uint32_t rows_;
  std::vector<std::vector<std::uint32_t>> columns_;
  std::optional<KsParams> ks_;
};

inline constexpr std::uint64_t kDefaultMatrixColumnCap = 1u << 20;

/// Kautz-Singleton matrix for GF(q) and message length k: T = q^2 rows and
/// q^k columns, truncated to the first `columns` when given. Column j places
/// its codeword value v at position a in row a q + v + 1.
inline MeasurementMatrix build_ks_matrix(std::uint32_t q, unsigned k,
                                         std::optional<std::uint32_t> columns = std::nullopt,
                                         std::uint64_t column_cap = kDefaultMatrixColumnCap) {
  detail::require(is_prime(q), std::to_string(q) + " is not prime");
  detail::require(k >= 1 && k <= q, "need 1 <= k <= q");
  std::uint64_t full = 1;
  for (unsigned t = 0; t < k; ++t) {
    full *= q;
    if (full > column_cap)
      throw CapExceeded("q^k exceeds the column cap of " + std::to_string(column_cap));
  }
  const std::uint64_t d = columns.value_or(static_cast<std::uint32_t>(full));
  detail::require(d >= 1 && d <= full, "requested column count exceeds q^k");
  std::vector<std::vector<std::uint32_t>> cols(d);
  for (std::uint64_t j = 1; j <= d; ++j) {
    const auto code = rs_codeword(column_message(static_cast<Symbol>(j), q, k), q);
    auto& col = cols[j - 1];
    col.resize(q);
    for (std::uint32_t a = 0; a < q; ++a) col[a] = a * q + code[a] + 1;
  }
  return MeasurementMatrix(q * q, std::move(cols), KsParams{q, k});
}

inline constexpr std::uint64_t kDefaultDisjunctNodeCap = 50'000'000;

namespace detail {

// Searches for at most `depth` columns other than j that jointly cover supp(j).
// Branches on the first uncovered row, so every explored set is minimal-ish.
class CoverSearch {
 public:
  CoverSearch(const MeasurementMatrix& m, std::uint64_t node_cap) : m_(m), cap_(node_cap) {
    by_row_.resize(m.rows() + 1);
    for (Symbol j = 1; j <= m.cols(); ++j)
      for (auto r : m.column(j)) by_row_[r].push_back(j);
  }

  bool coverable(Symbol j, unsigned depth) {
    const auto target = m_.column(j);
    target_.assign(target.begin(), target.end());
    hits_.assign(target_.size(), 0);
    // Largest overlap any single other column has with supp(j), for pruning.
    max_overlap_ = 0;
    std::vector<std::uint32_t> overlap(m_.cols() + 1, 0);
    for (auto r : target_)
      for (Symbol c : by_row_[r])
        if (c != j) max_overlap_ = std::max(max_overlap_, ++overlap[c]);
    j_ = j;
    return dfs(depth, target_.size());
  }

 private:
  bool dfs(unsigned depth, std::size_t uncovered) {
    if (++nodes_ > cap_)
      throw CapExceeded("disjunctness search exceeded " + std::to_string(cap_) + " nodes");
    if (uncovered == 0) return true;
    if (depth == 0 || uncovered > std::size_t{depth} * max_overlap_) return false;
    std::size_t pos = 0;
    while (hits_[pos] > 0) ++pos;
    for (Symbol c : by_row_[target_[pos]]) {
      if (c == j_) continue;
      std::size_t newly = 0;
      apply(c, +1, newly);
      const bool found = dfs(depth - 1, uncovered - newly);
      std::size_t ignored = 0;
      apply(c, -1, ignored);
      if (found) return true;
    }
    return false;
  }

  void apply(Symbol c, int delta, std::size_t& newly) {
    const auto col = m_.column(c);
    std::size_t a = 0, b = 0;
    while (a < target_.size() && b < col.size()) {
      if (target_[a] < col[b]) {
        ++a;
      } else if (col[b] < target_[a]) {
        ++b;
      } else {
        if (delta > 0 && hits_[a]++ == 0) ++newly;
        if (delta < 0) --hits_[a];
        ++a;
        ++b;
      }
    }
  }

  const MeasurementMatrix& m_;
  std::uint64_t cap_;
  std::uint64_t nodes_ = 0;
  std::vector<std::vector<Symbol>> by_row_;
  std::vector<std::uint32_t> target_;
  std::vector<std::uint32_t> hits_;
  std::uint32_t max_overlap_ = 0;
  Symbol j_ = 0;
};

}  // namespace detail

/// Brute-force check that no column's support is covered by the union of s
/// other columns. Sets of fewer than s columns are included, so the answer
/// for s >= d is the answer for s = d - 1.
inline bool is_s_disjunct(const MeasurementMatrix& m, unsigned s,
                          std::uint64_t node_cap = kDefaultDisjunctNodeCap) {
  const unsigned depth = static_cast<unsigned>(std::min<std::uint64_t>(s, m.cols() - 1));
  detail::CoverSearch search(m, node_cap);
  for (Symbol j = 1; j <= m.cols(); ++j)
    if (search.coverable(j, depth)) return false;
  return true;
}

/// Largest s in [0, d-1] for which `m` is s-disjunct.
inline unsigned disjunct_level(const MeasurementMatrix& m,
                               std::uint64_t node_cap = kDefaultDisjunctNodeCap) {
  unsigned s = 0;
  while (s + 1 <= m.cols() - 1 && is_s_disjunct(m, s + 1, node_cap)) ++s;
  return s;
}

/// Smallest prime q (with minimal k, q^k >= d) satisfying s* (k - 1) < q.
inline KsParams choose_ks_params(std::uint64_t d, unsigned target) {
  detail::require(d >= 2, "need d >= 2");
  detail::require(target >= 1, "disjunct target must be positive");
  for (std::uint32_t q = 2;; ++q) {
    if (!is_prime(q)) continue;
    unsigned k = 1;
    std::uint64_t span = q;
    while (span < d) {
      span *= q;
      ++k;
    }
    if (std::uint64_t{target} * (k - 1) < q && k <= q) return {q, k};
  }
}

/// Disjunctness guaranteed by the code distance: floor((q-1)/(k-1)), or
/// d - 1 when k = 1.
inline unsigned ks_guaranteed_disjunctness(KsParams p, std::uint32_t d) {
  if (p.k == 1) return d - 1;
  return std::min<unsigned>((p.q - 1) / (p.k - 1), d - 1);
}

/// Row slices read by b-bit clients. For Kautz-Singleton matrices the slices
/// are cut inside each q-row block so a column has at most one 1 per slice;
/// otherwise the rows are cut into consecutive slices of width 2^b - 1.
class BinLayout {
 public:
  BinLayout(const MeasurementMatrix& m, unsigned b) : rows_(m.rows()), bits_(b) {
    detail::require(b >= 1 && b <= 31, "bit budget must be in [1, 31]");
    const std::uint64_t w = (1ull << b) - 1;
    if (m.ks_params()) {
      const std::uint32_t q = m.ks_params()->q;
      const auto width = static_cast<std::uint32_t>(std::min<std::uint64_t>(w, q));
      for (std::uint32_t a = 0; a < q; ++a)
        for (std::uint32_t off = 0; off < q; off += width)
          slices_.push_back({a * q + off + 1, a * q + std::min(off + width, q)});
    } else {
      for (std::uint64_t first = 1; first <= rows_; first += w)
        slices_.push_back({static_cast<std::uint32_t>(first),
                           static_cast<std::uint32_t>(std::min<std::uint64_t>(first + w - 1, rows_))});
    }
  }

  std::uint32_t num_bins() const noexcept { return static_cast<std::uint32_t>(slices_.size()); }
  unsigned bits() const noexcept { return bits_; }
  std::uint32_t rows() const noexcept { return rows_; }

  /// First and last row of bin t (1-based, inclusive).
  std::pair<std::uint32_t, std::uint32_t> slice(std::uint32_t t) const {
    detail::require(t >= 1 && t <= num_bins(), "bin index out of range");
    return slices_[t - 1];
  }

  std::uint32_t bin_of(ClientIndex i) const {
    return static_cast<std::uint32_t>((i - 1) % num_bins()) + 1;
  }

 private:
  std::uint32_t rows_;
  unsigned bits_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> slices_;
};

/// Client i reads row ((i - 1) mod T) + 1 of column x.
inline std::uint32_t encode_gt_1bit(Symbol x, ClientIndex i, const MeasurementMatrix& m) {
  const auto t = static_cast<std::uint32_t>((i - 1) % m.rows()) + 1;
  return m.entry(t, x) ? 1u : 0u;
}

/// Position (1-based) of the single 1 of column x inside bin `bin`, or 0.
inline std::uint32_t encode_gt_bbit(Symbol x, std::uint32_t bin, const MeasurementMatrix& m,
                                    const BinLayout& layout) {
  const auto [first, last] = layout.slice(bin);
  const auto col = m.column(x);
  auto lo = std::lower_bound(col.begin(), col.end(), first);
  auto hi = std::upper_bound(col.begin(), col.end(), last);
  if (lo == hi) return 0;
  if (hi - lo > 1)
    throw InvalidArgument("column " + std::to_string(x) + " has more than one 1 in rows " +
                          std::to_string(first) + ".." + std::to_string(last));
  return *lo - first + 1;
}

inline std::uint32_t encode_gt_bbit_client(Symbol x, ClientIndex i, const MeasurementMatrix& m,
                                           const BinLayout& layout) {
  return encode_gt_bbit(x, layout.bin_of(i), m, layout);
}

struct TestOutcomes {
  std::vector<std::uint8_t> bits;  // index r - 1 for row r

  std::size_t size() const noexcept { return bits.size(); }
  bool positive(std::uint32_t row) const { return bits.at(row - 1) != 0; }
  friend bool operator==(const TestOutcomes&, const TestOutcomes&) = default;
};

/// OR of every message into its bin's slice: a message y > 0 sets row
/// first + y - 1.
inline TestOutcomes aggregate_or(const MessageLog& messages, std::span<const std::uint32_t> bins,
                                 const BinLayout& layout) {
  detail::require(bins.size() == messages.size(), "bins and messages misaligned");
  TestOutcomes out{std::vector<std::uint8_t>(layout.rows(), 0)};
  for (std::size_t k = 0; k < messages.size(); ++k) {
    const std::uint32_t y = messages[k];
    if (y == 0) continue;
    const auto [first, last] = layout.slice(bins[k]);
    if (y > last - first + 1)
      throw InvalidArgument("message " + std::to_string(y) + " exceeds its slice width");
    out.bits[first + y - 2] = 1;
  }
  return out;
}

/// Exact test vector: OR of the columns in `defectives`.
inline TestOutcomes exact_outcomes(const MeasurementMatrix& m, std::span<const Symbol> defectives) {
  TestOutcomes out{std::vector<std::uint8_t>(m.rows(), 0)};
  for (Symbol j : defectives)
    for (auto r : m.column(j)) out.bits[r - 1] = 1;
  return out;
}

/// Every column whose support lies inside the positive tests.
inline SupportEstimate cover_decode(const TestOutcomes& outcomes, const MeasurementMatrix& m) {
  detail::require(outcomes.size() == m.rows(), "outcome length differs from T");
  SupportEstimate est;
  for (Symbol j = 1; j <= m.cols(); ++j) {
    const auto col = m.column(j);
    if (std::all_of(col.begin(), col.end(), [&](std::uint32_t r) { return outcomes.positive(r); }))
      est.symbols.push_back(j);
  }
  return est;
}

/// exp(-n1 (2^b - 1) alpha / T + log s + log T).
inline double gt_failure_bound(double n1, double alpha, double T, double s, unsigned b) {
  const double width = static_cast<double>((1ull << b) - 1);
  return std::exp(-n1 * width * alpha / T + std::log(s) + std::log(T));
}

// Text format: "T d [q k]" then one line per column with its sorted 1-based
// rows separated by spaces.

inline void write_matrix(std::ostream& os, const MeasurementMatrix& m) {
  os << m.rows() << ' ' << m.cols();
  if (m.ks_params()) os << ' ' << m.ks_params()->q << ' ' << m.ks_params()->k;
  os << '\n';
  for (Symbol j = 1; j <= m.cols(); ++j) {
    const auto col = m.column(j);
    for (std::size_t r = 0; r < col.size(); ++r) os << (r ? " " : "") << col[r];
    os << '\n';
  }
}

inline MeasurementMatrix read_matrix(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("matrix file is empty");
  std::istringstream header(line);
  std::uint64_t T = 0, d = 0;
  if (!(header >> T >> d)) throw InvalidArgument("matrix header must start with 'T d'");
  std::optional<KsParams> ks;
  std::uint64_t q = 0, k = 0;
  if (header >> q) {
    if (!(header >> k)) throw InvalidArgument("matrix header has q without k");
    ks = KsParams{static_cast<std::uint32_t>(q), static_cast<unsigned>(k)};
  }
  std::string extra;
  if (header >> extra) throw InvalidArgument("unexpected token in matrix header: " + extra);
  detail::require(T >= 1 && T <= std::numeric_limits<std::uint32_t>::max(), "bad row count");
  detail::require(d >= 1 && d <= kDefaultMatrixColumnCap, "bad column count");
  std::vector<std::vector<std::uint32_t>> cols(d);
  for (std::uint64_t j = 0; j < d; ++j) {
    if (!std::getline(is, line))
      throw InvalidArgument("matrix file ends after " + std::to_string(j) + " of " +
                            std::to_string(d) + " columns");
    std::istringstream row(line);
    std::int64_t r = 0;
    while (row >> r) {
      detail::require(r >= 1 && static_cast<std::uint64_t>(r) <= T,
                      "column " + std::to_string(j + 1) + ": row " + std::to_string(r) +
                          " outside [1.." + std::to_string(T) + "]");
      cols[j].push_back(static_cast<std::uint32_t>(r));
    }
    if (!row.eof()) throw InvalidArgument("column " + std::to_string(j + 1) + ": non-integer token");
  }
  while (std::getline(is, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      throw InvalidArgument("trailing data after the last column");
  return MeasurementMatrix(static_cast<std::uint32_t>(T), std::move(cols), ks);
}

}  // namespace sparsedist
