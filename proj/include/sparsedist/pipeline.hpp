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

// Two-stage protocol: clients 1..n1 run a localization scheme, clients
// n1+1..n run hashed frequency estimation restricted to the localized set.
//
// Three execution modes:
//   Distributional    samples are i.i.d. from an s-sparse p.
//   DistributionFree  fixed data X^n, shared random permutation of clients,
//                     error measured against the empirical distribution.
//   AlmostSparse      Scheme B on a p that is not exactly s-sparse, with a
//                     larger localization budget.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sparsedist/core.hpp"
#include "sparsedist/estimation.hpp"
#include "sparsedist/group_testing.hpp"
#include "sparsedist/random.hpp"
#include "sparsedist/scheme_a.hpp"
#include "sparsedist/scheme_b.hpp"
#include "sparsedist/scheme_d.hpp"

namespace sparsedist {

enum class Scheme { A, B, C, D };
enum class Mode { Distributional, DistributionFree, AlmostSparse };

constexpr std::string_view to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::A: return "A";
    case Scheme::B: return "B";
    case Scheme::C: return "C";
    case Scheme::D: return "D";
  }
  return "?";
}

constexpr std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::Distributional: return "distributional";
    case Mode::DistributionFree: return "distribution_free";
    case Mode::AlmostSparse: return "almost_sparse";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view text) {
  if (text == "A" || text == "a") return Scheme::A;
  if (text == "B" || text == "b") return Scheme::B;
  if (text == "C" || text == "c") return Scheme::C;
  if (text == "D" || text == "d") return Scheme::D;
  throw InvalidArgument("unknown scheme '" + std::string(text) + "' (expected A, B, C or D)");
}

inline Mode parse_mode(std::string_view text) {
  if (text == "distributional") return Mode::Distributional;
  if (text == "distribution_free") return Mode::DistributionFree;
  if (text == "almost_sparse") return Mode::AlmostSparse;
  throw InvalidArgument("unknown mode '" + std::string(text) +
                        "' (expected distributional, distribution_free or almost_sparse)");
}

struct SchemeConfig {
  Scheme scheme = Scheme::A;
  std::uint32_t d = 0;
  std::uint32_t s = 0;
  unsigned b = 1;
  std::uint64_t n = 0;
  double split = 0.5;                 // n1 = floor(split * n) unless n1 is set
  std::optional<std::uint64_t> n1;
  std::optional<double> alpha;        // default 1 / sqrt(n 2^b)
  Mode mode = Mode::Distributional;
  std::uint64_t master_seed = 0;

  std::optional<KsParams> ks;         // Scheme C matrix; chosen from d otherwise
  std::optional<unsigned> ks_budget;  // disjunctness target; default s
  std::uint64_t enum_cap = ExhaustiveOptions{}.enumeration_cap;
  double c1 = 1.0;                    // almost-sparse localization budget constant
  bool project = false;
  bool permute = true;                // distribution-free only; off is for diagnostics
  bool record_timing = false;

  std::uint64_t n1_value() const {
    if (mode == Mode::DistributionFree) return n / 2;
    if (mode == Mode::AlmostSparse) return almost_sparse_n1();
    if (n1) return *n1;
    return static_cast<std::uint64_t>(std::floor(split * static_cast<double>(n)));
  }
  std::uint64_t n2_value() const { return n - n1_value(); }

  double alpha_value() const {
    if (alpha) return *alpha;
    return 1.0 / std::sqrt(static_cast<double>(n) * static_cast<double>(1ull << b));
  }

  /// C1 sqrt(n ln n) s ln(d/s), clamped to [1, n/2].
  std::uint64_t almost_sparse_n1() const {
    const double nn = static_cast<double>(n);
    const double raw = c1 * std::sqrt(nn * std::log(nn)) * s * std::log(static_cast<double>(d) / s);
    const double clamped = std::clamp(std::floor(raw), 1.0, std::floor(nn / 2));
    return static_cast<std::uint64_t>(clamped);
  }
  bool almost_sparse_clamped() const {
    const double nn = static_cast<double>(n);
    return c1 * std::sqrt(nn * std::log(nn)) * s * std::log(static_cast<double>(d) / s) >
           std::floor(nn / 2);
  }

  void validate() const {
    using detail::require;
    require(d >= 1, "d must be positive");
    require(s >= 1 && s <= d, "need 1 <= s <= d");
    require(b >= 1 && b <= 20, "b must be in [1, 20]");
    require(n >= 2, "need n >= 2");
    require(n1 || (split > 0.0 && split < 1.0), "split must be in (0, 1)");
    const std::uint64_t a = n1_value();
    require(a >= 1 && a < n, "need 1 <= n1 < n (n1=" + std::to_string(a) + ", n=" +
                                 std::to_string(n) + ")");
    const double al = alpha_value();
    require(al > 0.0 && al < 1.0, "alpha must be in (0, 1)");
    if (mode == Mode::DistributionFree) require(n % 2 == 0, "distribution-free mode needs even n");
    if (mode == Mode::AlmostSparse) require(scheme == Scheme::B, "almost-sparse mode is Scheme B only");
    switch (scheme) {
      case Scheme::A: break;
      case Scheme::B: {
        NonUniformHashChannel::validate(s, b);
        const auto count = binomial_saturating(d, s);
        if (count > enum_cap)
          throw CapExceeded("binom(d, s) = " + std::to_string(count) +
                            " exceeds the enumeration cap " + std::to_string(enum_cap));
        break;
      }
      case Scheme::C:
        if (ks) {
          std::uint64_t cols = 1;
          for (unsigned t = 0; t < ks->k; ++t) cols *= ks->q;
          require(cols >= d, "q^k must be at least d");
        }
        break;
      case Scheme::D: {
        const unsigned depth = tree_depth(padded_dimension(d));
        require((1ull << b) - 1 <= 2ull * s, "Scheme D needs 2^b - 1 <= 2s");
        require(a >= depth, "Scheme D needs n1 >= log2 d");
        break;
      }
    }
  }
};

/// One Monte Carlo trial. Column order matches the per-trial CSV.
struct TrialRecord {
  Scheme scheme = Scheme::A;
  Mode mode = Mode::Distributional;
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  std::uint32_t s = 0;
  unsigned b = 0;
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
  double l2_sq = 0.0;
  double l1 = 0.0;
  double tv = 0.0;
  bool loc_success = false;
  std::size_t est_support_size = 0;
  double wall_ms = 0.0;

  std::uint64_t n1 = 0;
  std::uint64_t bits_sent = 0;
  bool fallback_used = false;
};

struct TrialResult {
  TrialRecord record;
  std::vector<double> estimate;  // dense, length d
  SupportEstimate support;
};

/// Fisher-Yates shuffle of positions [0, n) from the Permutation stream.
inline std::vector<std::size_t> shared_permutation(std::size_t n, std::uint64_t seed) {
  RandomStream stream = derive_stream({seed, StageTag::Permutation}, 0);
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[k] = k;
  for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[stream.below(k)]);
  return perm;
}

/// Symbols of p at or above alpha that are also among its s largest entries.
inline std::vector<Symbol> top_s_heavy_set(const SparseDistribution& p, std::size_t s,
                                           double alpha) {
  auto ranked = p.ranked_symbols();
  if (ranked.size() > s) ranked.resize(s);
  std::vector<Symbol> out;
  for (Symbol j : ranked)
    if (p.prob(j) >= alpha) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

/// Validated configuration plus any per-configuration precomputation
/// (the Scheme C matrix). Safe to share across threads.
class Protocol {
 public:
  explicit Protocol(SchemeConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.scheme == Scheme::C) {
      const KsParams ks = config_.ks ? *config_.ks
                                     : choose_ks_params(std::max<std::uint32_t>(config_.d, 2),
                                                        config_.ks_budget.value_or(config_.s));
      matrix_.emplace(build_ks_matrix(ks.q, ks.k, config_.d));
      bins_.emplace(*matrix_, config_.b);
    }
  }

  const SchemeConfig& config() const noexcept { return config_; }
  const MeasurementMatrix* matrix() const noexcept { return matrix_ ? &*matrix_ : nullptr; }

  /// Stage 1 over the localization clients' samples. `random_groups` selects
  /// the randomized group assignment used in distribution-free mode.
  SupportEstimate localize(std::span<const Symbol> samples, std::uint64_t seed,
                           bool random_groups = false, std::uint64_t* bits = nullptr) const {
    const auto& c = config_;
    const std::size_t n1 = samples.size();
    MessageLog messages(c.b);
    SupportEstimate est;
    switch (c.scheme) {
      case Scheme::A: {
        const GroupingLayout layout(c.d, c.b);
        const auto groups = random_groups ? random_groups_for(n1, layout, seed)
                                          : round_robin_groups(n1, layout);
        for (std::size_t k = 0; k < n1; ++k)
          messages.append(encode_grouping(samples[k], groups[k], layout));
        est = decode_grouping(messages, groups, layout);
        break;
      }
      case Scheme::B: {
        const auto channels = make_localization_channels(seed, n1, c.d, c.s, c.b);
        for (std::size_t k = 0; k < n1; ++k)
          messages.append(label_to_wire(encode_nonuniform(samples[k], channels[k])));
        RandomStream decoder = derive_stream({seed, StageTag::Localization}, 0);
        const ExhaustiveOptions opts{c.enum_cap};
        const std::span<const NonUniformHashChannel> view(channels);
        est = c.mode == Mode::AlmostSparse
                  ? decode_almost_sparse(view, messages, c.d, c.s, decoder, opts)
                  : decode_exhaustive(view, messages, c.d, c.s, decoder, opts);
        break;
      }
      case Scheme::C: {
        std::vector<std::uint32_t> bins(n1);
        for (std::size_t k = 0; k < n1; ++k) {
          bins[k] = bins_->bin_of(k + 1);
          messages.append(encode_gt_bbit(samples[k], bins[k], *matrix_, *bins_));
        }
        est = cover_decode(aggregate_or(messages, bins, *bins_), *matrix_);
        break;
      }
      case Scheme::D: {
        TreeAssignment assignment;
        if (random_groups) assignment.random_seed = seed;
        const auto tree = run_tree_localization(samples, padded_dimension(c.d), c.s, c.b, assignment);
        if (bits) *bits += tree.total_bits;
        return tree.estimate;
      }
    }
    if (bits) *bits += messages.total_bits();
    return est;
  }

  /// Stage 2 over the estimation clients' samples; client indices start at n1 + 1.
  std::vector<double> estimate(std::span<const Symbol> samples, std::uint64_t first_client,
                               const SupportEstimate& support, std::uint64_t seed,
                               std::uint64_t* bits = nullptr) const {
    const auto& c = config_;
    const auto channels = make_estimation_channels(seed, first_client, samples.size(), c.d, c.b);
    MessageLog messages(c.b);
    for (std::size_t k = 0; k < samples.size(); ++k)
      messages.append(label_to_wire(encode_estimation(samples[k], channels[k])));
    if (bits) *bits += messages.total_bits();
    return estimate_frequencies(messages, std::span<const UniformHashChannel>(channels), support,
                                c.d, EstimationOptions{c.project});
  }

  /// Distributional two-stage trial on i.i.d. samples from an s-sparse p.
  TrialResult run_two_stage(const SparseDistribution& p, std::uint64_t seed) const {
    check_truth(p, true);
    const Timer timer(config_.record_timing);
    const auto samples = draw_samples(p, seed);
    return finish(run_on_samples(samples.values, seed, false), p.dense(),
                  p.heavy_set(config_.alpha_value()), seed, timer);
  }

  /// Estimation only, with J_alpha handed to the server; same n2 as the
  /// two-stage trial.
  TrialResult run_known_support(const SparseDistribution& p, std::uint64_t seed) const {
    check_truth(p, true);
    const Timer timer(config_.record_timing);
    const auto samples = draw_samples(p, seed);
    const std::uint64_t n1 = config_.n1_value();
    Stages st;
    st.support = SupportEstimate::from_unsorted(p.heavy_set(config_.alpha_value()));
    const std::span<const Symbol> all(samples.values);
    st.estimate = estimate(all.subspan(n1), n1 + 1, st.support, seed, &st.bits);
    st.bits += n1 * config_.b;  // stage-1 clients still spend their budget
    return finish(std::move(st), p.dense(), p.heavy_set(config_.alpha_value()), seed, timer);
  }

  /// Fixed data X^n; the target is its empirical distribution.
  TrialResult run_distribution_free(std::span<const Symbol> data, std::uint64_t seed) const {
    const auto& c = config_;
    detail::require(data.size() == c.n, "data length differs from n");
    detail::require(c.n % 2 == 0, "distribution-free mode needs even n");
    const auto pi = empirical_distribution(data, c.d);
    const auto distinct = std::count_if(pi.begin(), pi.end(), [](double v) { return v > 0; });
    detail::require(static_cast<std::size_t>(distinct) <= c.s, "data has more than s distinct symbols");
    const Timer timer(c.record_timing);
    std::vector<Symbol> ordered(data.begin(), data.end());
    if (c.permute) {
      const auto perm = shared_permutation(c.n, seed);
      for (std::size_t k = 0; k < c.n; ++k) ordered[k] = data[perm[k]];
    }
    std::vector<Symbol> heavy;
    for (Symbol j = 1; j <= c.d; ++j)
      if (pi[j - 1] >= c.alpha_value()) heavy.push_back(j);
    return finish(run_on_samples(ordered, seed, true), pi, heavy, seed, timer);
  }

  /// Scheme B on a p that need not be s-sparse.
  TrialResult run_almost_sparse(const SparseDistribution& p, std::uint64_t seed) const {
    check_truth(p, false);
    const Timer timer(config_.record_timing);
    const auto samples = draw_samples(p, seed);
    return finish(run_on_samples(samples.values, seed, false), p.dense(),
                  top_s_heavy_set(p, config_.s, config_.alpha_value()), seed, timer);
  }

  /// Dispatch on the configured mode. In distribution-free mode the fixed
  /// data are n draws from p.
  TrialResult run_trial(const SparseDistribution& p, std::uint64_t seed) const {
    switch (config_.mode) {
      case Mode::Distributional: return run_two_stage(p, seed);
      case Mode::AlmostSparse: return run_almost_sparse(p, seed);
      case Mode::DistributionFree: {
        check_truth(p, true);
        const auto samples = draw_samples(p, seed);
        return run_distribution_free(samples.values, seed);
      }
    }
    throw std::logic_error("unreachable");
  }

  /// Client samples of a trial come from the Data stream, index 0.
  ClientSamples draw_samples(const SparseDistribution& p, std::uint64_t seed) const {
    RandomStream stream = derive_stream({seed, StageTag::Data}, 0);
    return sample_clients(p, config_.n, stream);
  }

 private:
  struct Stages {
    SupportEstimate support;
    std::vector<double> estimate;
    std::uint64_t bits = 0;
    std::uint64_t n1 = 0;
  };

  class Timer {
   public:
    explicit Timer(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
    double elapsed_ms() const {
      if (!on_) return 0.0;
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
          .count();
    }

   private:
    bool on_;
    std::chrono::steady_clock::time_point start_;
  };

  static std::vector<std::uint32_t> random_groups_for(std::size_t n1, const GroupingLayout& layout,
                                                      std::uint64_t seed) {
    return random_groups(n1, layout, seed);
  }

  void check_truth(const SparseDistribution& p, bool sparse) const {
    detail::require(p.dimension() == config_.d, "distribution dimension differs from d");
    if (sparse)
      detail::require(p.sparsity() <= config_.s,
                      "distribution has " + std::to_string(p.sparsity()) +
                          " nonzero entries, more than s = " + std::to_string(config_.s));
  }

  Stages run_on_samples(std::span<const Symbol> samples, std::uint64_t seed,
                        bool random_groups) const {
    Stages st;
    st.n1 = config_.n1_value();
    st.support = localize(samples.first(st.n1), seed, random_groups, &st.bits);
    st.estimate = estimate(samples.subspan(st.n1), st.n1 + 1, st.support, seed, &st.bits);
    return st;
  }

  TrialResult finish(Stages st, std::span<const double> truth, std::span<const Symbol> heavy,
                     std::uint64_t seed, const Timer& timer) const {
    const auto& c = config_;
    if (st.bits != c.n * c.b)
      throw std::logic_error("communication accounting: sent " + std::to_string(st.bits) +
                             " bits, expected n b = " + std::to_string(c.n * c.b));
    TrialResult out;
    auto& r = out.record;
    r.scheme = c.scheme;
    r.mode = c.mode;
    r.n = c.n;
    r.d = c.d;
    r.s = c.s;
    r.b = c.b;
    r.seed = seed;
    r.l2_sq = l2_sq_error(truth, st.estimate);
    r.l1 = l1_error(truth, st.estimate);
    r.tv = 0.5 * r.l1;
    r.loc_success = st.support.covers(heavy);
    r.est_support_size = st.support.size();
    r.n1 = c.n1_value();
    r.bits_sent = st.bits;
    r.fallback_used = st.support.fallback_used;
    r.wall_ms = timer.elapsed_ms();
    out.estimate = std::move(st.estimate);
    out.support = std::move(st.support);
    return out;
  }

  SchemeConfig config_;
  std::optional<MeasurementMatrix> matrix_;
  std::optional<BinLayout> bins_;
};

inline TrialResult run_two_stage(const SchemeConfig& config, const SparseDistribution& p) {
  return Protocol(config).run_two_stage(p, config.master_seed);
}

inline TrialResult run_known_support(const SchemeConfig& config, const SparseDistribution& p) {
  return Protocol(config).run_known_support(p, config.master_seed);
}

inline TrialResult run_distribution_free(const SchemeConfig& config, std::span<const Symbol> data) {
  return Protocol(config).run_distribution_free(data, config.master_seed);
}

inline TrialResult run_almost_sparse(const SchemeConfig& config, const SparseDistribution& p) {
  return Protocol(config).run_almost_sparse(p, config.master_seed);
}

}  // namespace sparsedist
