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

// Domain types shared by every scheme: sparse ground truth, client samples,
// b-bit message logs, support estimates, and the error metrics.
//
// Symbols are 1-indexed in [1..d] everywhere, including file formats. Client
// indices are 1-indexed as well; index 0 is reserved for server-side streams.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sparsedist/random.hpp"

namespace sparsedist {

using Symbol = std::uint32_t;
using ClientIndex = std::uint64_t;

/// Thrown on violated preconditions. Carries a human-readable reason.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a configured compute cap would be exceeded.
class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace detail

/// A d-dimensional distribution storing only its nonzero entries.
class SparseDistribution {
 public:
  struct Entry {
    Symbol symbol;
    double prob;
  };

  SparseDistribution() = default;

  std::uint32_t dimension() const noexcept { return d_; }
  /// ||p||_0, the number of stored entries.
  std::size_t sparsity() const noexcept { return entries_.size(); }
  /// Entries sorted by symbol.
  std::span<const Entry> entries() const noexcept { return entries_; }

  double prob(Symbol j) const noexcept {
    auto it = std::lower_bound(
        entries_.begin(), entries_.end(), j,
        [](const Entry& e, Symbol s) { return e.symbol < s; });
    return (it != entries_.end() && it->symbol == j) ? it->prob : 0.0;
  }

  std::vector<Symbol> support() const {
    std::vector<Symbol> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.symbol);
    return out;
  }

  /// Dense length-d vector; index j-1 holds p_j.
  std::vector<double> dense() const {
    std::vector<double> out(d_, 0.0);
    for (const auto& e : entries_) out[e.symbol - 1] = e.prob;
    return out;
  }

  /// Symbols ordered by decreasing probability, ties by increasing symbol.
  std::vector<Symbol> ranked_symbols() const {
    std::vector<Entry> sorted(entries_.begin(), entries_.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Entry& a, const Entry& b) { return a.prob > b.prob; });
    std::vector<Symbol> out;
    out.reserve(sorted.size());
    for (const auto& e : sorted) out.push_back(e.symbol);
    return out;
  }

  /// Mass of the s largest entries.
  double head_mass(std::size_t s) const {
    std::vector<double> probs;
    probs.reserve(entries_.size());
    for (const auto& e : entries_) probs.push_back(e.prob);
    std::sort(probs.begin(), probs.end(), std::greater<>());
    double mass = 0.0;
    for (std::size_t k = 0; k < std::min(s, probs.size()); ++k) mass += probs[k];
    return mass;
  }

  /// {j : p_j >= alpha}, sorted.
  std::vector<Symbol> heavy_set(double alpha) const {
    std::vector<Symbol> out;
    for (const auto& e : entries_)
      if (e.prob >= alpha) out.push_back(e.symbol);
    return out;
  }

  Symbol sample(RandomStream& stream) const {
    const double u = stream.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return entries_[static_cast<std::size_t>(it - cumulative_.begin())].symbol;
  }

  friend SparseDistribution make_sparse_distribution(std::uint32_t d,
                                                     std::span<const Symbol> support,
                                                     std::span<const double> probs);

 private:
  std::uint32_t d_ = 0;
  std::vector<Entry> entries_;
  std::vector<double> cumulative_;
};

inline constexpr double kProbabilitySumTolerance = 1e-9;

/// Validates and builds a distribution. Probabilities are renormalized so the
/// stored values sum to 1 in double precision.
inline SparseDistribution make_sparse_distribution(std::uint32_t d,
                                                   std::span<const Symbol> support,
                                                   std::span<const double> probs) {
  using detail::require;
  require(d >= 1, "dimension must be positive");
  require(support.size() == probs.size(), "support and probability lengths differ");
  require(support.size() <= d, "more entries than the dimension");
  SparseDistribution p;
  p.d_ = d;
  double total = 0.0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    require(support[k] >= 1 && support[k] <= d,
            "symbol " + std::to_string(support[k]) + " outside [1.." +
                std::to_string(d) + "]");
    require(std::isfinite(probs[k]) && probs[k] > 0.0,
            "probabilities must be positive");
    p.entries_.push_back({support[k], probs[k]});
    total += probs[k];
  }
  require(!p.entries_.empty(), "distribution needs at least one entry");
  require(std::abs(total - 1.0) <= kProbabilitySumTolerance,
          "probabilities sum to " + std::to_string(total));
  std::sort(p.entries_.begin(), p.entries_.end(),
            [](const auto& a, const auto& b) { return a.symbol < b.symbol; });
  for (std::size_t k = 1; k < p.entries_.size(); ++k)
    require(p.entries_[k].symbol != p.entries_[k - 1].symbol, "duplicate symbol");
  for (auto& e : p.entries_) {
    e.prob /= total;
    require(e.prob <= 1.0, "probability above one");
  }
  p.cumulative_.reserve(p.entries_.size());
  double acc = 0.0;
  for (const auto& e : p.entries_) {
    acc += e.prob;
    p.cumulative_.push_back(acc);
  }
  p.cumulative_.back() = 1.0;
  return p;
}

inline SparseDistribution make_sparse_distribution(
    std::uint32_t d, std::initializer_list<Symbol> support,
    std::initializer_list<double> probs) {
  return make_sparse_distribution(d, std::span(support.begin(), support.size()),
                                  std::span(probs.begin(), probs.size()));
}

struct ClientSamples {
  std::vector<Symbol> values;

  std::size_t size() const noexcept { return values.size(); }
};

/// n i.i.d. draws from p; deterministic given the stream state.
inline ClientSamples sample_clients(const SparseDistribution& p, std::size_t n,
                                    RandomStream& stream) {
  detail::require(n >= 1, "need at least one client");
  ClientSamples out;
  out.values.resize(n);
  for (auto& v : out.values) v = p.sample(stream);
  return out;
}

/// Wire messages of one stage, each an integer in [0, 2^b).
class MessageLog {
 public:
  explicit MessageLog(unsigned bits) : bits_(bits) {
    detail::require(bits >= 1 && bits <= 31, "bit budget must be in [1, 31]");
  }

  void append(std::uint32_t value) {
    if (value >= alphabet_size())
      throw InvalidArgument("message " + std::to_string(value) + " exceeds " +
                            std::to_string(bits_) + " bits");
    values_.push_back(value);
  }

  unsigned bits() const noexcept { return bits_; }
  std::uint32_t alphabet_size() const noexcept { return 1u << bits_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::uint32_t operator[](std::size_t k) const { return values_[k]; }
  std::span<const std::uint32_t> values() const noexcept { return values_; }
  std::uint64_t total_bits() const noexcept { return values_.size() * bits_; }

 private:
  unsigned bits_;
  std::vector<std::uint32_t> values_;
};

/// Output of a localization scheme.
struct SupportEstimate {
  std::vector<Symbol> symbols;  // sorted, unique
  // Set when a decoder had to fall back to a non-consistent answer.
  bool fallback_used = false;
  std::size_t consistent_candidates = 0;

  bool contains(Symbol j) const {
    return std::binary_search(symbols.begin(), symbols.end(), j);
  }
  std::size_t size() const noexcept { return symbols.size(); }

  /// True iff every element of `required` is in the estimate.
  bool covers(std::span<const Symbol> required) const {
    return std::all_of(required.begin(), required.end(),
                       [&](Symbol j) { return contains(j); });
  }

  static SupportEstimate from_unsorted(std::vector<Symbol> symbols) {
    std::sort(symbols.begin(), symbols.end());
    symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
    SupportEstimate out;
    out.symbols = std::move(symbols);
    return out;
  }
};

// Error metrics. `truth` and `estimate` are dense with index j-1 for symbol j.

inline double l2_sq_error(std::span<const double> truth, std::span<const double> estimate) {
  detail::require(truth.size() == estimate.size(), "length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double diff = truth[k] - estimate[k];
    acc += diff * diff;
  }
  return acc;
}

inline double l1_error(std::span<const double> truth, std::span<const double> estimate) {
  detail::require(truth.size() == estimate.size(), "length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) acc += std::abs(truth[k] - estimate[k]);
  return acc;
}

inline double tv_error(std::span<const double> truth, std::span<const double> estimate) {
  return 0.5 * l1_error(truth, estimate);
}

inline double l2_sq_error(const SparseDistribution& p, std::span<const double> q) {
  detail::require(q.size() == p.dimension(), "estimate length differs from d");
  return l2_sq_error(p.dense(), q);
}

inline double l1_error(const SparseDistribution& p, std::span<const double> q) {
  detail::require(q.size() == p.dimension(), "estimate length differs from d");
  return l1_error(p.dense(), q);
}

inline double tv_error(const SparseDistribution& p, std::span<const double> q) {
  return 0.5 * l1_error(p, q);
}

/// Empirical frequency vector of samples over [1..d].
inline std::vector<double> empirical_distribution(std::span<const Symbol> samples,
                                                  std::uint32_t d) {
  std::vector<double> pi(d, 0.0);
  for (Symbol x : samples) {
    detail::require(x >= 1 && x <= d, "sample outside [1..d]");
    pi[x - 1] += 1.0;
  }
  for (auto& v : pi) v /= static_cast<double>(samples.size());
  return pi;
}

}  // namespace sparsedist
