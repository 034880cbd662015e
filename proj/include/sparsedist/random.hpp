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

#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace sparsedist {

/// Finalizer of SplitMix64. A bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// Which protocol stage a stream serves. Streams with different tags never
/// share state, so stage-2 channels cannot accidentally replay stage-1 coins.
enum class StageTag : std::uint8_t {
  Localization = 0,
  Estimation = 1,
  Permutation = 2,
  GroupAssignment = 3,
  // Simulation-side draws (ground truth and client samples). Never visible to
  // encoders or decoders.
  Data = 4,
};

constexpr std::string_view to_string(StageTag tag) noexcept {
  switch (tag) {
    case StageTag::Localization: return "localization";
    case StageTag::Estimation: return "estimation";
    case StageTag::Permutation: return "permutation";
    case StageTag::GroupAssignment: return "group_assignment";
    case StageTag::Data: return "data";
  }
  return "unknown";
}

/// Counter-based SplitMix64 stream. `at(k)` is the k-th output and does not
/// advance the stream, which lets hash channels be evaluated lazily per
/// symbol. Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr RandomStream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept { return at(counter_++); }

  constexpr result_type at(std::uint64_t k) const noexcept {
    return mix64(key_ + (k + 1) * kGoldenGamma);
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return to_unit((*this)()); }

  /// Unbiased integer in [0, bound) via Lemire's multiply-and-reject.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t position() const noexcept { return counter_; }

  static constexpr double to_unit(std::uint64_t word) noexcept {
    return static_cast<double>(word >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Root of all shared randomness for one protocol run.
struct RandomnessRoot {
  std::uint64_t master_seed = 0;
  StageTag tag = StageTag::Localization;

  constexpr RandomnessRoot with_tag(StageTag other) const noexcept {
    return {master_seed, other};
  }
};

/// Keyed derivation of the stream for (seed, tag, client index). Each step
/// feeds a distinct value through a bijection, so two derivations that differ
/// in tag or index with the same seed can never share a key.
constexpr RandomStream derive_stream(RandomnessRoot root,
                                     std::uint64_t client_index) noexcept {
  std::uint64_t h = mix64(root.master_seed + kGoldenGamma);
  h = mix64(h ^ ((static_cast<std::uint64_t>(root.tag) + 1) * 0xD6E8FEB86659FD93ULL));
  h = mix64(h ^ mix64(client_index + 0x632BE59BD9B4E019ULL));
  return RandomStream(h);
}

/// Sub-seed for an indexed child (sweep cell, trial). Same construction as
/// derive_stream but returns a seed rather than a stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t h = mix64(seed ^ 0xA0761D6478BD642FULL);
  h = mix64(h + mix64(a + 0xE7037ED1A0B428DBULL));
  return mix64(h + mix64(b + 0x8EBC6AF09C88C6E3ULL));
}

/// Maps a 64-bit word to [0, n) by multiply-shift. Bias is at most n / 2^64;
/// used where a single lazily evaluated word must become a bounded index.
constexpr std::uint64_t scale_to(std::uint64_t word, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(word) * n) >> 64);
}

}  // namespace sparsedist
