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

// Interactive tree localization. Symbol j is identified with the L = log2 d
// bit string of j - 1 (most significant bit first). Round t learns the set of
// length-t prefixes: the surviving length-(t-1) prefixes are extended by one
// bit, the candidates are cut into blocks of 2^b - 1, and each client of the
// round reports the index of its own prefix inside its block (0 if absent).

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsedist/core.hpp"
#include "sparsedist/random.hpp"

namespace sparsedist {

/// Length-t prefixes stored as integers in [0, 2^t).
struct PrefixSet {
  unsigned t = 0;
  std::vector<std::uint64_t> prefixes;  // sorted, unique

  bool empty() const noexcept { return prefixes.empty(); }
  std::size_t size() const noexcept { return prefixes.size(); }
  bool contains(std::uint64_t v) const {
    return std::binary_search(prefixes.begin(), prefixes.end(), v);
  }
  static PrefixSet root() { return {0, {0}}; }
};

/// Number of bits per symbol; d must be a power of two, d >= 2.
inline unsigned tree_depth(std::uint32_t d) {
  detail::require(d >= 2 && std::has_single_bit(d),
                  "tree localization needs d to be a power of two >= 2 (got " +
                      std::to_string(d) + ")");
  return static_cast<unsigned>(std::countr_zero(d));
}

/// Smallest power of two >= d (and >= 2).
inline std::uint32_t padded_dimension(std::uint32_t d) {
  return std::max<std::uint32_t>(2, std::bit_ceil(d));
}

inline std::uint64_t symbol_prefix(Symbol j, unsigned t, unsigned depth) {
  return static_cast<std::uint64_t>(j - 1) >> (depth - t);
}

/// Both one-bit extensions of every prefix, sorted.
inline std::vector<std::uint64_t> expand_candidates(const PrefixSet& prev) {
  std::vector<std::uint64_t> out;
  out.reserve(2 * prev.size());
  for (auto v : prev.prefixes) {
    out.push_back(2 * v);
    out.push_back(2 * v + 1);
  }
  return out;
}

/// Candidate prefixes of round t cut into consecutive blocks of 2^b - 1.
class RoundLayout {
 public:
  RoundLayout(unsigned t, std::vector<std::uint64_t> candidates, unsigned b)
      : t_(t), candidates_(std::move(candidates)) {
    detail::require(b >= 1 && b <= 31, "bit budget must be in [1, 31]");
    width_ = static_cast<std::uint32_t>((1ull << b) - 1);
    blocks_ = static_cast<std::uint32_t>((candidates_.size() + width_ - 1) / width_);
  }

  unsigned round() const noexcept { return t_; }
  std::span<const std::uint64_t> candidates() const noexcept { return candidates_; }
  std::uint32_t block_width() const noexcept { return width_; }
  /// M; zero when the candidate set is empty.
  std::uint32_t num_blocks() const noexcept { return blocks_; }

  /// Candidate positions [begin, end) of block m.
  std::pair<std::size_t, std::size_t> block(std::uint32_t m) const {
    detail::require(m >= 1 && m <= blocks_, "block index out of range");
    const std::size_t begin = std::size_t{m - 1} * width_;
    return {begin, std::min(begin + width_, candidates_.size())};
  }

 private:
  unsigned t_;
  std::vector<std::uint64_t> candidates_;
  std::uint32_t width_ = 1;
  std::uint32_t blocks_ = 0;
};

/// 1-based index of `prefix` inside block m, or 0.
inline std::uint32_t encode_tree_round(std::uint64_t prefix, std::uint32_t m,
                                       const RoundLayout& layout) {
  if (layout.num_blocks() == 0) return 0;
  const auto [begin, end] = layout.block(m);
  const auto cands = layout.candidates();
  for (std::size_t k = begin; k < end; ++k)
    if (cands[k] == prefix) return static_cast<std::uint32_t>(k - begin + 1);
  return 0;
}

/// Prefixes named by the nonzero messages of one round, keeping at most `cap`
/// of them (highest multiplicity first, ties by smaller prefix).
inline PrefixSet decode_tree_round(const MessageLog& messages,
                                   std::span<const std::uint32_t> blocks,
                                   const RoundLayout& layout, std::size_t cap) {
  detail::require(blocks.size() == messages.size(), "blocks and messages misaligned");
  std::map<std::uint64_t, std::size_t> counts;
  const auto cands = layout.candidates();
  for (std::size_t k = 0; k < messages.size(); ++k) {
    const std::uint32_t y = messages[k];
    if (y == 0) continue;
    const std::size_t index = y + std::size_t{blocks[k] - 1} * layout.block_width();
    if (blocks[k] < 1 || blocks[k] > layout.num_blocks() || index > cands.size())
      throw InvalidArgument("message " + std::to_string(y) + " in block " +
                            std::to_string(blocks[k]) + " points past the candidate list");
    ++counts[cands[index - 1]];
  }
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);
  PrefixSet out{layout.round(), {}};
  for (const auto& [v, c] : ranked) out.prefixes.push_back(v);
  std::sort(out.prefixes.begin(), out.prefixes.end());
  return out;
}

/// How localization clients are spread over rounds and blocks.
struct TreeAssignment {
  // Unset: round-robin over rounds, then over blocks within a round.
  // Set: each client draws its round and block uniformly from the
  // GroupAssignment stream of this seed.
  std::optional<std::uint64_t> random_seed;
};

struct TreeRoundTrace {
  PrefixSet decoded;
  std::size_t num_candidates = 0;
  std::size_t num_clients = 0;
};

struct TreeLocalization {
  SupportEstimate estimate;
  std::vector<TreeRoundTrace> rounds;
  std::uint64_t total_bits = 0;
};

/// Runs all log2 d rounds over the localization clients' samples.
inline TreeLocalization run_tree_localization(std::span<const Symbol> samples, std::uint32_t d,
                                              std::uint32_t s, unsigned b,
                                              TreeAssignment assignment = {}) {
  const unsigned depth = tree_depth(d);
  detail::require(s >= 1, "sparsity must be positive");
  detail::require(b >= 1 && b <= 31, "bit budget must be in [1, 31]");
  detail::require(samples.size() >= depth,
                  "tree localization needs n1 >= log2 d = " + std::to_string(depth));
  detail::require((1ull << b) - 1 <= 2ull * s, "tree localization needs 2^b - 1 <= 2s");
  for (Symbol x : samples) detail::require(x >= 1 && x <= d, "sample outside [1..d]");

  // Round membership and the client's uniform word for its block choice.
  std::vector<std::vector<std::size_t>> members(depth + 1);
  std::vector<std::uint64_t> block_word(samples.size(), 0);
  if (assignment.random_seed) {
    const RandomnessRoot root{*assignment.random_seed, StageTag::GroupAssignment};
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const RandomStream stream = derive_stream(root, k + 1);
      members[scale_to(stream.at(0), depth) + 1].push_back(k);
      block_word[k] = stream.at(1);
    }
  } else {
    for (std::size_t k = 0; k < samples.size(); ++k) members[k % depth + 1].push_back(k);
  }

  TreeLocalization result;
  PrefixSet current = PrefixSet::root();
  for (unsigned t = 1; t <= depth; ++t) {
    const RoundLayout layout(t, expand_candidates(current), b);
    const std::uint32_t M = layout.num_blocks();
    MessageLog messages(b);
    std::vector<std::uint32_t> blocks;
    blocks.reserve(members[t].size());
    for (std::size_t r = 0; r < members[t].size(); ++r) {
      const std::size_t k = members[t][r];
      std::uint32_t m = 1;
      if (M > 0)
        m = assignment.random_seed ? static_cast<std::uint32_t>(scale_to(block_word[k], M)) + 1
                                   : static_cast<std::uint32_t>(r % M) + 1;
      blocks.push_back(m);
      messages.append(encode_tree_round(symbol_prefix(samples[k], t, depth), m, layout));
    }
    result.total_bits += messages.total_bits();
    current = M > 0 ? decode_tree_round(messages, blocks, layout, s) : PrefixSet{t, {}};
    result.rounds.push_back({current, layout.candidates().size(), members[t].size()});
  }
  std::vector<Symbol> symbols;
  for (auto v : current.prefixes) symbols.push_back(static_cast<Symbol>(v + 1));
  result.estimate = SupportEstimate::from_unsorted(std::move(symbols));
  return result;
}

/// L (2s / (2^b - 1)) exp(-n1 (2^b - 1) alpha / (2 s L)) with L = log2 d.
inline double tree_failure_bound(double n1, unsigned b, double d, double alpha, double s) {
  const double width = static_cast<double>((1ull << b) - 1);
  const double L = std::log2(d);
  return std::exp(-n1 * width * alpha / (2.0 * s * L) + std::log(L) + std::log(2.0 * s / width));
}

}  // namespace sparsedist
