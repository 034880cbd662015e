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

// Second-stage frequency estimation. Each estimation client hashes its sample
// with an independent uniform hash h_i : [d] -> [1..2^b] drawn from shared
// randomness; the server counts, for each localized symbol j, how many
// clients' messages agree with h_i(j) and inverts the match probability.
//
// For a client holding X ~ p, Pr{h(j) = h(X)} = (p_j (2^b - 1) + 1) / 2^b.
// The inversion of that affine map is
//
//   p_hat_j = (N_j / n2) * 2^b / (2^b - 1) - 1 / (2^b - 1),
//
// which is unbiased for every j in the supplied support.

#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "sparsedist/core.hpp"
#include "sparsedist/random.hpp"

namespace sparsedist {

/// Hash labels live in [1..2^b]; the wire value is label - 1.
using Label = std::uint32_t;

inline constexpr std::uint32_t label_to_wire(Label label) noexcept { return label - 1; }
inline constexpr Label wire_to_label(std::uint32_t wire) noexcept { return wire + 1; }

/// Uniform random hash channel for one estimation client. The table is never
/// materialized: h(x) is the top b bits of the x-th word of the client's
/// stream, so memory is O(1) and the table is a pure function of (root, i).
class UniformHashChannel {
 public:
  UniformHashChannel(RandomnessRoot root, ClientIndex client, std::uint32_t d, unsigned b)
      : stream_(derive_stream(root, client)), d_(d), b_(b) {
    if (root.tag != StageTag::Estimation)
      throw InvalidArgument("estimation channels must be derived from the Estimation tag");
    detail::require(b >= 1 && b <= 31, "bit budget must be in [1, 31]");
    detail::require(d >= 1, "dimension must be positive");
  }

  Label hash(Symbol x) const {
    if (x < 1 || x > d_) throw InvalidArgument("symbol outside [1..d]");
    return static_cast<Label>(stream_.at(x) >> (64 - b_)) + 1;
  }

  std::uint32_t dimension() const noexcept { return d_; }
  unsigned bits() const noexcept { return b_; }

 private:
  RandomStream stream_;
  std::uint32_t d_;
  unsigned b_;
};

/// Explicit-table channel, used where a test needs a hand-built h.
class TableHashChannel {
 public:
  TableHashChannel(std::vector<Label> table, unsigned b) : table_(std::move(table)), b_(b) {
    for (Label v : table_)
      detail::require(v >= 1 && v <= (1u << b), "table value outside [1..2^b]");
  }

  Label hash(Symbol x) const {
    if (x < 1 || x > table_.size()) throw InvalidArgument("symbol outside [1..d]");
    return table_[x - 1];
  }

  std::uint32_t dimension() const noexcept { return static_cast<std::uint32_t>(table_.size()); }
  unsigned bits() const noexcept { return b_; }

 private:
  std::vector<Label> table_;
  unsigned b_;
};

template <typename Channel>
concept HashChannel = requires(const Channel& c, Symbol x) {
  { c.hash(x) } -> std::convertible_to<Label>;
  { c.bits() } -> std::convertible_to<unsigned>;
};

template <HashChannel Channel>
Label encode_estimation(Symbol x, const Channel& channel) {
  return channel.hash(x);
}

/// b_j = Pr{h_i(j) = Y_i} for a client with X ~ p.
inline double collision_probability(double p_j, unsigned b) {
  const double k = static_cast<double>(1ull << b);
  return (p_j * (k - 1.0) + 1.0) / k;
}

/// Inverts a match count into a frequency estimate.
inline double invert_match_count(std::uint64_t matches, std::uint64_t n2, unsigned b) {
  const double k = static_cast<double>(1ull << b);
  return static_cast<double>(matches) / static_cast<double>(n2) * k / (k - 1.0) -
         1.0 / (k - 1.0);
}

struct EstimationOptions {
  // Clip every coordinate to [0, 1] after inversion. Off by default so the
  // estimator stays unbiased.
  bool project_to_unit_interval = false;
};

/// Frequency estimate over [1..d] from estimation-stage messages. `channels`
/// and `messages` are aligned by client. Coordinates outside `support` are 0.
template <HashChannel Channel>
std::vector<double> estimate_frequencies(const MessageLog& messages,
                                         std::span<const Channel> channels,
                                         const SupportEstimate& support, std::uint32_t d,
                                         EstimationOptions options = {}) {
  if (messages.empty()) throw InvalidArgument("no estimation messages");
  detail::require(channels.size() == messages.size(), "channels and messages misaligned");
  for (Symbol j : support.symbols)
    detail::require(j >= 1 && j <= d, "support symbol outside [1..d]");

  std::vector<std::uint64_t> matches(support.symbols.size(), 0);
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Label y = wire_to_label(messages[i]);
    const auto& channel = channels[i];
    for (std::size_t k = 0; k < support.symbols.size(); ++k)
      if (channel.hash(support.symbols[k]) == y) ++matches[k];
  }

  std::vector<double> estimate(d, 0.0);
  const unsigned b = messages.bits();
  for (std::size_t k = 0; k < support.symbols.size(); ++k) {
    double v = invert_match_count(matches[k], messages.size(), b);
    if (options.project_to_unit_interval) v = std::clamp(v, 0.0, 1.0);
    estimate[support.symbols[k] - 1] = v;
  }
  return estimate;
}

/// Channels for clients [first, first + count) of the Estimation stage.
inline std::vector<UniformHashChannel> make_estimation_channels(std::uint64_t master_seed,
                                                                ClientIndex first,
                                                                std::size_t count,
                                                                std::uint32_t d, unsigned b) {
  std::vector<UniformHashChannel> out;
  out.reserve(count);
  const RandomnessRoot root{master_seed, StageTag::Estimation};
  for (std::size_t k = 0; k < count; ++k) out.emplace_back(root, first + k, d, b);
  return out;
}

}  // namespace sparsedist
