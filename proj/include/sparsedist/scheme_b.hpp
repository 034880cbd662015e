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

// Localization via non-uniform random hashing.
//
// Every localization client draws, for each symbol x, a label L_{i,x} in
// [1..2^b] with Pr{L = y} = 1/s for y < 2^b and Pr{L = 2^b} = 1 - (2^b-1)/s,
// and sends L_{i,X_i}. The server enumerates all s-subsets of [d] in
// lexicographic order, keeps those consistent with every message (each
// message equals the label of at least one candidate symbol), and picks one
// uniformly at random with its own stream.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "sparsedist/core.hpp"
#include "sparsedist/estimation.hpp"
#include "sparsedist/random.hpp"

namespace sparsedist {

class NonUniformHashChannel {
 public:
  NonUniformHashChannel(RandomnessRoot root, ClientIndex client, std::uint32_t d,
                        std::uint32_t s, unsigned b)
      : stream_(derive_stream(root, client)), d_(d), s_(s), b_(b) {
    if (root.tag != StageTag::Localization)
      throw InvalidArgument("localization channels must be derived from the Localization tag");
    validate(s, b);
    detail::require(d >= 1, "dimension must be positive");
  }

  static void validate(std::uint32_t s, unsigned b) {
    detail::require(b >= 1 && b <= 31, "bit budget must be in [1, 31]");
    detail::require(s >= 1, "sparsity must be positive");
    if ((1ull << b) - 1 > s)
      throw InvalidArgument("non-uniform hashing needs 2^b - 1 <= s (b=" + std::to_string(b) +
                            ", s=" + std::to_string(s) + ")");
  }

  Label hash(Symbol x) const {
    if (x < 1 || x > d_) throw InvalidArgument("symbol outside [1..d]");
    const double u = RandomStream::to_unit(stream_.at(x));
    const auto bucket = static_cast<std::uint64_t>(u * s_);
    const std::uint64_t top = 1ull << b_;
    return static_cast<Label>(bucket + 1 < top ? bucket + 1 : top);
  }

  std::uint32_t dimension() const noexcept { return d_; }
  std::uint32_t sparsity() const noexcept { return s_; }
  unsigned bits() const noexcept { return b_; }

 private:
  RandomStream stream_;
  std::uint32_t d_;
  std::uint32_t s_;
  unsigned b_;
};

/// Pr{L = y} for the non-uniform label distribution.
inline double label_probability(Label y, std::uint32_t s, unsigned b) {
  const std::uint64_t top = 1ull << b;
  if (y < 1 || y > top) return 0.0;
  if (y < top) return 1.0 / s;
  return 1.0 - static_cast<double>(top - 1) / s;
}

inline Label encode_nonuniform(Symbol x, const NonUniformHashChannel& channel) {
  return channel.hash(x);
}

inline std::vector<NonUniformHashChannel> make_localization_channels(
    std::uint64_t master_seed, std::size_t n1, std::uint32_t d, std::uint32_t s, unsigned b) {
  std::vector<NonUniformHashChannel> out;
  out.reserve(n1);
  const RandomnessRoot root{master_seed, StageTag::Localization};
  for (std::size_t k = 0; k < n1; ++k) out.emplace_back(root, k + 1, d, s, b);
  return out;
}

/// A candidate explains the data iff every client's message equals the label
/// of at least one candidate symbol under that client's channel.
template <HashChannel Channel>
bool is_consistent(std::span<const Symbol> candidate, std::span<const Channel> channels,
                   const MessageLog& messages) {
  detail::require(channels.size() == messages.size(), "channels and messages misaligned");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Label y = wire_to_label(messages[i]);
    const bool explained = std::any_of(candidate.begin(), candidate.end(),
                                       [&](Symbol j) { return channels[i].hash(j) == y; });
    if (!explained) return false;
  }
  return true;
}

/// binom(n, k), saturating at UINT64_MAX.
inline std::uint64_t binomial_saturating(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t t = 1; t <= k; ++t) {
    acc = acc * (n - k + t) / t;
    if (acc > std::numeric_limits<std::uint64_t>::max())
      return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(acc);
}

struct ExhaustiveOptions {
  std::uint64_t enumeration_cap = 2'000'000;
};

namespace detail {

/// Per-client bitset of symbols whose label matches the client's message.
class MatchTable {
 public:
  template <HashChannel Channel>
  MatchTable(std::span<const Channel> channels, const MessageLog& messages, std::uint32_t d)
      : words_((d + 64) / 64), clients_(messages.size()), bits_(clients_ * words_, 0) {
    require(channels.size() == messages.size(), "channels and messages misaligned");
    for (std::size_t i = 0; i < clients_; ++i) {
      const Label y = wire_to_label(messages[i]);
      std::uint64_t* row = &bits_[i * words_];
      for (Symbol x = 1; x <= d; ++x)
        if (channels[i].hash(x) == y) row[x / 64] |= 1ull << (x % 64);
    }
  }

  bool matches(std::size_t client, Symbol x) const {
    return (bits_[client * words_ + x / 64] >> (x % 64)) & 1u;
  }
  std::size_t clients() const noexcept { return clients_; }

 private:
  std::size_t words_;
  std::size_t clients_;
  std::vector<std::uint64_t> bits_;
};

/// Advances `idx` (sorted, values in [1..d]) to the next s-subset in
/// lexicographic order. Returns false after the last subset.
inline bool next_combination(std::vector<Symbol>& idx, std::uint32_t d) {
  const std::size_t s = idx.size();
  for (std::size_t pos = s; pos-- > 0;) {
    if (idx[pos] < d - (s - 1 - pos)) {
      ++idx[pos];
      for (std::size_t k = pos + 1; k < s; ++k) idx[k] = idx[k - 1] + 1;
      return true;
    }
  }
  return false;
}

struct ExhaustiveScan {
  std::vector<std::vector<Symbol>> consistent;
  std::vector<Symbol> min_violation;  // lexicographically first minimizer
  std::size_t min_violations = std::numeric_limits<std::size_t>::max();
};

inline ExhaustiveScan scan_candidates(const MatchTable& table, std::uint32_t d, std::uint32_t s,
                                      bool track_violations) {
  ExhaustiveScan scan;
  std::vector<Symbol> cand(s);
  for (std::uint32_t k = 0; k < s; ++k) cand[k] = k + 1;
  std::size_t last_refuter = 0;
  const std::size_t n = table.clients();
  auto explains = [&](std::size_t i) {
    for (Symbol j : cand)
      if (table.matches(i, j)) return true;
    return false;
  };
  do {
    // The client that refuted the previous candidate usually refutes its
    // lexicographic neighbour too; try it first.
    bool consistent = n == 0 || explains(last_refuter);
    if (consistent) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!explains(i)) {
          consistent = false;
          last_refuter = i;
          break;
        }
      }
    }
    if (consistent) {
      scan.consistent.push_back(cand);
    } else if (track_violations && scan.consistent.empty()) {
      std::size_t violations = 0;
      for (std::size_t i = 0; i < n; ++i) violations += explains(i) ? 0 : 1;
      if (violations < scan.min_violations) {
        scan.min_violations = violations;
        scan.min_violation = cand;
      }
    }
  } while (next_combination(cand, d));
  return scan;
}

template <HashChannel Channel>
SupportEstimate decode_by_consistency(std::span<const Channel> channels,
                                      const MessageLog& messages, std::uint32_t d,
                                      std::uint32_t s, RandomStream& decoder,
                                      ExhaustiveOptions options, bool allow_fallback) {
  require(s >= 1 && s <= d, "need 1 <= s <= d");
  const std::uint64_t candidates = binomial_saturating(d, s);
  if (candidates > options.enumeration_cap)
    throw CapExceeded("binom(" + std::to_string(d) + ", " + std::to_string(s) + ") = " +
                      std::to_string(candidates) + " candidates exceeds the cap of " +
                      std::to_string(options.enumeration_cap));
  const MatchTable table(channels, messages, d);
  ExhaustiveScan scan = scan_candidates(table, d, s, allow_fallback);

  SupportEstimate out;
  out.consistent_candidates = scan.consistent.size();
  if (!scan.consistent.empty()) {
    out.symbols = scan.consistent[decoder.below(scan.consistent.size())];
    return out;
  }
  if (!allow_fallback)
    throw std::logic_error("no candidate support is consistent with the messages");
  out.symbols = std::move(scan.min_violation);
  out.fallback_used = true;
  return out;
}

}  // namespace detail

/// Uniformly random consistent s-subset. Throws std::logic_error when no
/// candidate is consistent, which cannot happen for honestly generated
/// messages from an s-sparse distribution.
template <HashChannel Channel>
SupportEstimate decode_exhaustive(std::span<const Channel> channels, const MessageLog& messages,
                                  std::uint32_t d, std::uint32_t s, RandomStream& decoder,
                                  ExhaustiveOptions options = {}) {
  return detail::decode_by_consistency(channels, messages, d, s, decoder, options, false);
}

/// Same decision rule as decode_exhaustive; when nothing is consistent it
/// returns the lexicographically first candidate violating the fewest clients.
template <HashChannel Channel>
SupportEstimate decode_almost_sparse(std::span<const Channel> channels,
                                     const MessageLog& messages, std::uint32_t d,
                                     std::uint32_t s, RandomStream& decoder,
                                     ExhaustiveOptions options = {}) {
  return detail::decode_by_consistency(channels, messages, d, s, decoder, options, true);
}

/// Exact Pr{a fresh channel separates j from all s candidate symbols}:
/// sum_y Pr{L = y} (1 - Pr{L = y})^s.
inline double distinguish_probability_exact(std::uint32_t s, unsigned b) {
  NonUniformHashChannel::validate(s, b);
  double total = 0.0;
  for (Label y = 1; y <= (1u << b); ++y) {
    const double py = label_probability(y, s, b);
    total += py * std::pow(1.0 - py, static_cast<double>(s));
  }
  return total;
}

/// (2^b - 1) / (4 s); valid lower bound on the separation probability for s >= 2.
inline double distinguish_lower_bound(std::uint32_t s, unsigned b) {
  return static_cast<double>((1ull << b) - 1) / (4.0 * s);
}

/// Monte Carlo estimate over `trials` fresh channels of the probability that
/// the label of j differs from the labels of every candidate symbol.
inline double distinguish_probability_check(std::uint32_t s, unsigned b,
                                            std::span<const Symbol> candidate, Symbol j,
                                            std::size_t trials, std::uint64_t seed) {
  detail::require(candidate.size() == s, "candidate must have exactly s symbols");
  detail::require(std::find(candidate.begin(), candidate.end(), j) == candidate.end(),
                  "j must not belong to the candidate");
  detail::require(trials >= 1, "need at least one trial");
  const Symbol max_symbol = std::max(j, *std::max_element(candidate.begin(), candidate.end()));
  std::vector<Symbol> sorted(candidate.begin(), candidate.end());
  std::sort(sorted.begin(), sorted.end());
  detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                  "candidate symbols must be distinct");
  const RandomnessRoot root{seed, StageTag::Localization};
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const NonUniformHashChannel channel(root, t + 1, max_symbol, s, b);
    const Label lj = channel.hash(j);
    const bool separated = std::none_of(candidate.begin(), candidate.end(),
                                        [&](Symbol c) { return channel.hash(c) == lj; });
    hits += separated ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

/// Shape of the failure bound exp(-n1 alpha (2^b-1)/(4s) + C0 s log(d/s)),
/// with the union-bound term calibrated from binom(d, s) <= (e d / s)^s, i.e.
/// C0 s log(d/s) := s (1 + log(d/s)).
inline double hashing_failure_bound(double n1, double alpha, unsigned b, double s, double d) {
  const double width = static_cast<double>((1ull << b) - 1);
  const double union_term = s * (1.0 + std::log(d / s));
  return std::exp(-n1 * alpha * width / (4.0 * s) + union_term);
}

}  // namespace sparsedist
