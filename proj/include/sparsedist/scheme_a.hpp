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

// Localization by uniform grouping. Symbols are cut into M blocks of 2^b - 1
// consecutive symbols (the last block may be shorter); each localization
// client is assigned to one block and reports the 1-based offset of its
// sample inside that block, or 0 when the sample falls elsewhere.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparsedist/core.hpp"
#include "sparsedist/random.hpp"

namespace sparsedist {

class GroupingLayout {
 public:
  GroupingLayout(std::uint32_t d, unsigned b) : d_(d), b_(b) {
    detail::require(d >= 1, "dimension must be positive");
    detail::require(b >= 1 && b <= 31, "bit budget must be in [1, 31]");
    const std::uint64_t width = (1ull << b) - 1;
    block_size_ = static_cast<std::uint32_t>(std::min<std::uint64_t>(width, d));
    num_blocks_ = (d + block_size_ - 1) / block_size_;
  }

  std::uint32_t dimension() const noexcept { return d_; }
  unsigned bits() const noexcept { return b_; }
  std::uint32_t block_size() const noexcept { return block_size_; }
  std::uint32_t num_blocks() const noexcept { return num_blocks_; }

  /// First and last symbol of block m (1-based, inclusive).
  std::pair<Symbol, Symbol> block(std::uint32_t m) const {
    detail::require(m >= 1 && m <= num_blocks_, "block index out of range");
    const Symbol first = (m - 1) * block_size_ + 1;
    return {first, std::min<Symbol>(first + block_size_ - 1, d_)};
  }

  std::uint32_t block_of(Symbol x) const { return (x - 1) / block_size_ + 1; }

  /// Round-robin assignment of client i (1-based) to a block.
  std::uint32_t group_of(ClientIndex i) const {
    return static_cast<std::uint32_t>((i - 1) % num_blocks_) + 1;
  }

 private:
  std::uint32_t d_;
  unsigned b_;
  std::uint32_t block_size_ = 0;
  std::uint32_t num_blocks_ = 0;
};

/// Message of a client assigned to block `group` holding sample x.
inline std::uint32_t encode_grouping(Symbol x, std::uint32_t group, const GroupingLayout& layout) {
  detail::require(x >= 1 && x <= layout.dimension(), "symbol outside [1..d]");
  const auto [first, last] = layout.block(group);
  return (x >= first && x <= last) ? (x - first + 1) : 0;
}

inline std::uint32_t encode_grouping_client(Symbol x, ClientIndex i, const GroupingLayout& layout) {
  return encode_grouping(x, layout.group_of(i), layout);
}

/// Block index for each of clients 1..n1 under round-robin assignment.
inline std::vector<std::uint32_t> round_robin_groups(std::size_t n1, const GroupingLayout& layout) {
  std::vector<std::uint32_t> groups(n1);
  for (std::size_t k = 0; k < n1; ++k) groups[k] = layout.group_of(k + 1);
  return groups;
}

/// Independent uniform block per client from the GroupAssignment stream.
inline std::vector<std::uint32_t> random_groups(std::size_t n1, const GroupingLayout& layout,
                                                std::uint64_t master_seed) {
  const RandomnessRoot root{master_seed, StageTag::GroupAssignment};
  std::vector<std::uint32_t> groups(n1);
  for (std::size_t k = 0; k < n1; ++k)
    groups[k] = static_cast<std::uint32_t>(
                    scale_to(derive_stream(root, k + 1).at(0), layout.num_blocks())) + 1;
  return groups;
}

/// Reconstructs (m - 1)(2^b - 1) + Y_i for every nonzero message.
inline SupportEstimate decode_grouping(const MessageLog& messages,
                                       std::span<const std::uint32_t> groups,
                                       const GroupingLayout& layout) {
  detail::require(groups.size() == messages.size(), "groups and messages misaligned");
  std::vector<Symbol> found;
  for (std::size_t k = 0; k < messages.size(); ++k) {
    const std::uint32_t y = messages[k];
    if (y == 0) continue;
    const auto [first, last] = layout.block(groups[k]);
    if (y > last - first + 1)
      throw InvalidArgument("message " + std::to_string(y) + " exceeds block size");
    found.push_back((groups[k] - 1) * layout.block_size() + y);
  }
  return SupportEstimate::from_unsorted(std::move(found));
}

/// s * exp(-n1 (2^b - 1) alpha / d): upper bound on Pr{J_alpha not in J_hat}.
inline double grouping_failure_bound(double n1, unsigned b, double d, double alpha, double s) {
  const double width = static_cast<double>((1ull << b) - 1);
  return s * std::exp(-n1 * width * alpha / d);
}

}  // namespace sparsedist
