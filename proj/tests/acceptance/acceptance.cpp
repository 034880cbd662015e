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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Run a subset with: acceptance 2 5 11

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "estimation_oracle.hpp"
#include "sparsedist/sparsedist.hpp"
#include "stats.hpp"

namespace {

using namespace sparsedist;
using testing::Rational;
using testing::summarize;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

SchemeConfig config(Scheme scheme, std::uint32_t d, std::uint32_t s, unsigned b, std::uint64_t n) {
  SchemeConfig c;
  c.scheme = scheme;
  c.d = d;
  c.s = s;
  c.b = b;
  c.n = n;
  return c;
}

SparseDistribution uniform_on(std::uint32_t d, std::vector<Symbol> support) {
  std::vector<double> probs(support.size(), 1.0 / static_cast<double>(support.size()));
  return make_sparse_distribution(d, support, probs);
}

// Mean l2^2 over `trials`, plus the empirical localization failure rate.
struct CellStats {
  testing::Summary l2;
  double failure_rate = 0.0;
};

CellStats run_cell(const Protocol& proto, const SparseDistribution& p, std::size_t trials,
                   std::uint64_t salt, bool known_support) {
  std::vector<double> v;
  std::size_t failures = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto seed = derive_seed(salt, t);
    const auto r = known_support ? proto.run_known_support(p, seed) : proto.run_trial(p, seed);
    v.push_back(r.record.l2_sq);
    failures += !r.record.loc_success;
  }
  return {summarize(v), static_cast<double>(failures) / static_cast<double>(trials)};
}

// Mean l2^2 <= 2 fail + 1.5 (s alpha^2 + s / (n2 2^b) + 1 / n2).
bool decomposition_holds(const SchemeConfig& c, const CellStats& st) {
  const double n2 = static_cast<double>(c.n2_value());
  const double a = c.alpha_value();
  const double rhs = 2 * st.failure_rate +
                     1.5 * (c.s * a * a + c.s / (n2 * std::ldexp(1.0, static_cast<int>(c.b))) + 1 / n2);
  return st.l2.mean <= rhs;
}

// 1. Exact unbiasedness of the estimator constants.
Outcome c1_oracle() {
  const std::vector<Rational> p = {Rational(1, 2), Rational(1, 3), Rational(1, 6), Rational(0)};
  for (unsigned n2 = 1; n2 <= 6; ++n2) {
    const auto e = testing::exact_expectation(p, n2, 1, testing::unbiased_inversion);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (e[j] != p[j]) return {false, "n2=" + std::to_string(n2) + " j=" + std::to_string(j + 1) + " biased"};
  }
  // Joint enumeration over all clients agrees for the smallest cases.
  for (unsigned n2 = 1; n2 <= 2; ++n2) {
    const auto e = testing::exact_expectation_joint(p, n2, 1, testing::unbiased_inversion);
    if (e != p) return {false, "joint enumeration disagrees at n2=" + std::to_string(n2)};
  }
  return {true, "E[p_hat] = p exactly for d=4, b=1, n2=1..6"};
}

struct RateSweep {
  std::vector<double> n, mean;
  bool decomposition = true;
};

RateSweep known_support_sweep(std::uint32_t s, unsigned b, std::size_t trials, std::uint64_t salt) {
  RateSweep out;
  std::vector<Symbol> support;
  for (std::uint32_t k = 0; k < s; ++k) support.push_back(1 + 8 * k);
  const auto p = uniform_on(64, support);
  for (int e = 12; e <= 17; ++e) {
    const auto c = config(Scheme::A, 64, s, b, std::uint64_t{1} << e);
    const auto st = run_cell(Protocol(c), p, trials, derive_seed(salt, e), true);
    out.n.push_back(static_cast<double>(c.n));
    out.mean.push_back(st.l2.mean);
    out.decomposition = out.decomposition && decomposition_holds(c, st);
  }
  return out;
}

// 2. log-log slope of the known-support error against n.
Outcome c2_slope() {
  const auto sw = known_support_sweep(4, 2, 400, 2);
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < sw.n.size(); ++k) {
    lx.push_back(std::log(sw.n[k]));
    ly.push_back(std::log(sw.mean[k]));
  }
  const double slope = testing::ols_slope(lx, ly);
  const bool ok = slope >= -1.15 && slope <= -0.85 && sw.decomposition;
  return {ok, "slope=" + fmt(slope) + " decomposition=" + (sw.decomposition ? "ok" : "violated")};
}

// 3. Error ratio between b = 1 and b = 3 at s = 8.
Outcome c3_bits() {
  const auto one = known_support_sweep(8, 1, 400, 31);
  const auto three = known_support_sweep(8, 3, 400, 33);
  double lo = 1e9, hi = 0;
  for (std::size_t k = 0; k < one.n.size(); ++k) {
    const double r = one.mean[k] / three.mean[k];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const bool ok = lo >= 2.5 && hi <= 6.5 && one.decomposition && three.decomposition;
  return {ok, "ratio in [" + fmt(lo) + ", " + fmt(hi) + "] over n=2^12..2^17"};
}

// 4. Scheme C error does not depend on d.
Outcome c4_dimension() {
  const std::uint64_t n = 100000;
  const std::size_t trials = 300;
  std::vector<double> means;
  std::string detail;
  bool ok = true;
  for (std::uint32_t q : {3u, 7u, 11u}) {
    const std::uint32_t d = q * q;
    const auto p = make_sparse_distribution(d, {1, d}, {0.6, 0.4});
    auto c = config(Scheme::C, d, 2, 1, n);
    c.ks = KsParams{q, 2};
    const Protocol proto(c);
    const auto two = run_cell(proto, p, trials, derive_seed(4, q), false);
    const auto known = run_cell(proto, p, trials, derive_seed(4, q), true);
    const double ratio = two.l2.mean / known.l2.mean;
    ok = ok && ratio <= 2.0 && ratio >= 0.5 && decomposition_holds(c, two);
    means.push_back(two.l2.mean);
    detail += "d=" + std::to_string(d) + ":" + fmt(two.l2.mean) + "(x" + fmt(ratio, 3) + " baseline) ";
  }
  const double spread = *std::max_element(means.begin(), means.end()) /
                        *std::min_element(means.begin(), means.end());
  ok = ok && spread <= 2.0;
  return {ok, detail + "spread=" + fmt(spread, 3)};
}

// 5. Empirical localization failure below each scheme's bound.
Outcome c5_failure_bounds() {
  struct Point {
    Scheme scheme;
    std::uint32_t d;
    std::vector<Symbol> support;
    std::uint64_t n1;
    double bound;
  };
  const double a = 0.5;
  std::vector<Point> points;
  for (std::uint64_t n1 : {64u, 96u, 128u})
    points.push_back({Scheme::A, 16, {2, 11}, n1, grouping_failure_bound(double(n1), 1, 16, a, 2)});
  for (std::uint64_t n1 : {100u, 120u, 150u})
    points.push_back({Scheme::B, 10, {3, 8}, n1, hashing_failure_bound(double(n1), a, 1, 2, 10)});
  for (std::uint64_t n1 : {72u, 99u, 126u})
    points.push_back({Scheme::C, 9, {2, 7}, n1, gt_failure_bound(double(n1), a, 9, 2, 1)});
  for (std::uint64_t n1 : {84u, 120u, 156u})
    points.push_back({Scheme::D, 8, {1, 6}, n1, tree_failure_bound(double(n1), 1, 8, a, 2)});

  const std::size_t trials = 2000;
  bool ok = true;
  std::string detail;
  for (const auto& pt : points) {
    if (pt.bound < 0.01 || pt.bound > 0.5) return {false, "bound outside [0.01, 0.5] for scheme " + std::string(to_string(pt.scheme))};
    auto c = config(pt.scheme, pt.d, 2, 1, 2 * pt.n1);
    c.n1 = pt.n1;
    c.alpha = a;
    const Protocol proto(c);
    const auto p = uniform_on(pt.d, pt.support);
    const auto heavy = p.heavy_set(a);
    std::size_t failures = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      const auto seed = derive_seed(5, pt.n1, t);
      const auto xs = proto.draw_samples(p, seed);
      const auto est = proto.localize(std::span<const Symbol>(xs.values).first(pt.n1), seed);
      failures += !est.covers(heavy);
    }
    const double rate = static_cast<double>(failures) / trials;
    ok = ok && rate <= pt.bound;
    detail += std::string(to_string(pt.scheme)) + "(n1=" + std::to_string(pt.n1) + "):" + fmt(rate, 3) +
              "<=" + fmt(pt.bound, 3) + " ";
  }
  detail.pop_back();
  return {ok, detail};
}

// 6. Zero-error group testing.
Outcome c6_group_testing() {
  const auto k32 = build_ks_matrix(3, 2);
  if (!is_s_disjunct(k32, 2)) return {false, "KS(3,2) not 2-disjunct"};
  std::vector<std::vector<Symbol>> sets{{}};
  for (Symbol a = 1; a <= 9; ++a) {
    sets.push_back({a});
    for (Symbol b = a + 1; b <= 9; ++b) sets.push_back({a, b});
  }
  for (const auto& k : sets)
    if (cover_decode(exact_outcomes(k32, k), k32).symbols != k) return {false, "KS(3,2) cover decode mismatch"};
  const auto k72 = build_ks_matrix(7, 2);
  if (!is_s_disjunct(k72, 6)) return {false, "KS(7,2) not 6-disjunct"};

  // End to end with every bin seeing every defective symbol at least once.
  RandomStream rng(6);
  std::size_t failures = 0;
  const std::size_t trials = 10000;
  for (std::size_t t = 0; t < trials; ++t) {
    const unsigned b = 1 + static_cast<unsigned>(rng.below(2));
    const BinLayout layout(k72, b);
    std::set<Symbol> pick;
    const std::size_t size = 1 + rng.below(6);
    while (pick.size() < size) pick.insert(static_cast<Symbol>(1 + rng.below(49)));
    const std::vector<Symbol> defect(pick.begin(), pick.end());
    MessageLog log(b);
    std::vector<std::uint32_t> bins;
    for (std::uint32_t bin = 1; bin <= layout.num_bins(); ++bin) {
      for (Symbol x : defect) {
        bins.push_back(bin);
        log.append(encode_gt_bbit(x, bin, k72, layout));
      }
      for (std::size_t extra = rng.below(3); extra > 0; --extra) {
        const Symbol x = defect[rng.below(defect.size())];
        bins.push_back(bin);
        log.append(encode_gt_bbit(x, bin, k72, layout));
      }
    }
    failures += cover_decode(aggregate_or(log, bins, layout), k72).symbols != defect;
  }
  return {failures == 0, "KS(3,2) 2-disjunct, 46 sets exact, KS(7,2) 6-disjunct, " +
                             std::to_string(failures) + "/" + std::to_string(trials) + " end-to-end failures"};
}

// 7. Two-bit clients reproduce the one-bit outcome vector.
Outcome c7_bbit_consistency() {
  const auto m = build_ks_matrix(3, 2);
  const BinLayout wide(m, 2), narrow(m, 1);
  for (std::uint64_t t = 0; t < 100; ++t) {
    RandomStream data = derive_stream({derive_seed(7, t), StageTag::Data}, 0);
    RandomStream assign = derive_stream({derive_seed(7, t), StageTag::GroupAssignment}, 0);
    const auto first = static_cast<Symbol>(1 + data.below(9));
    const auto second = static_cast<Symbol>(1 + (first + data.below(8)) % 9);
    const auto p = uniform_on(9, {std::min(first, second), std::max(first, second)});
    const auto xs = sample_clients(p, 40, data).values;
    MessageLog two(2), one(1);
    std::vector<std::uint32_t> bins2, bins1;
    for (Symbol x : xs) {
      const auto bin = static_cast<std::uint32_t>(1 + assign.below(wide.num_bins()));
      bins2.push_back(bin);
      two.append(encode_gt_bbit(x, bin, m, wide));
      // The same client seen as one 1-bit report per row of its slice.
      const auto [first, last] = wide.slice(bin);
      for (std::uint32_t r = first; r <= last; ++r) {
        bins1.push_back(narrow.bin_of(r));
        one.append(encode_gt_bbit(x, bins1.back(), m, narrow));
      }
    }
    if (aggregate_or(two, bins2, wide) != aggregate_or(one, bins1, narrow))
      return {false, "outcome vectors differ in trial " + std::to_string(t)};
  }
  return {true, "100/100 trials bit-identical"};
}

// 8. Unbiasedness against the empirical distribution of fixed data.
Outcome c8_distribution_free() {
  std::vector<Symbol> sorted(2000, 4);
  std::fill(sorted.begin() + 1200, sorted.end(), 11);
  auto c = config(Scheme::A, 16, 2, 1, 2000);
  c.mode = Mode::DistributionFree;
  auto raw = c;
  raw.permute = false;
  const Protocol with(c), without(raw);
  std::vector<double> a, b;
  for (std::uint64_t t = 0; t < 500; ++t) {
    a.push_back(with.run_distribution_free(sorted, derive_seed(8, t)).estimate[3]);
    b.push_back(without.run_distribution_free(sorted, derive_seed(8, t)).estimate[3]);
  }
  const auto sa = summarize(a), sb = summarize(b);
  const double za = std::abs(sa.mean - 0.6) / sa.stderr_mean();
  const double zb = std::abs(sb.mean - 0.6) / sb.stderr_mean();
  return {za <= 4 && zb > 5, "permuted mean=" + fmt(sa.mean) + " (" + fmt(za, 3) + " se), unpermuted mean=" +
                                 fmt(sb.mean) + " (" + fmt(zb, 3) + " se)"};
}

// 9. Almost-sparse error grows as head mass shrinks.
Outcome c9_almost_sparse() {
  auto c = config(Scheme::B, 12, 2, 1, 4000);
  c.mode = Mode::AlmostSparse;
  const Protocol proto(c);
  std::vector<testing::Summary> cells;
  std::string detail;
  for (double ps : {1.0, 0.99, 0.9, 0.5}) {
    std::vector<double> v;
    for (std::uint64_t t = 0; t < 300; ++t) {
      const auto seed = derive_seed(9, t);
      RandomStream stream = derive_stream({seed, StageTag::Data}, 1);
      const auto p = make_family_distribution(Family::Uniform, 12, 2, ps, stream);
      v.push_back(proto.run_almost_sparse(p, seed).record.l2_sq);
    }
    cells.push_back(summarize(v));
    detail += (detail.empty() ? "" : " ") + ("P_S=" + fmt(ps, 3) + ":" + fmt(cells.back().mean));
  }
  bool ok = true;
  for (std::size_t k = 1; k < cells.size(); ++k) {
    const double se = std::hypot(cells[k].stderr_mean(), cells[k - 1].stderr_mean());
    ok = ok && cells[k].mean >= cells[k - 1].mean - 2.33 * se;
  }
  return {ok, detail};
}

// 10. Sample-size threshold satisfies its inequality.
Outcome c10_threshold() {
  RandomStream rng(10);
  for (int k = 0; k < 20; ++k) {
    const double f1 = 300 + 5000 * rng.uniform();
    const double f2 = 1000 * rng.uniform();
    const auto r = compute_sample_threshold({f1, f2});
    const double nn = static_cast<double>(r.n);
    if (!r.guaranteed || std::exp(-std::sqrt(nn) / f1 + f2) > 1 / nn)
      return {false, "fails at f1=" + fmt(f1) + " f2=" + fmt(f2)};
  }
  return {true, "20/20 random (f1, f2) pairs"};
}

// 11. Identical CSV across repeats and worker counts.
Outcome c11_determinism() {
  SweepSpec spec;
  spec.schemes = {Scheme::A, Scheme::B, Scheme::C, Scheme::D};
  spec.n = {1000, 4000};
  spec.d = {16};
  spec.s = {2};
  spec.b = {1};
  spec.trials = 25;
  spec.master_seed = 11;
  auto csv = [](const SweepSpec& sp, unsigned workers) {
    const auto out = run_sweep(sp, workers);
    std::ostringstream os;
    write_trial_csv(os, out.records);
    write_aggregate_csv(os, out.aggregates);
    return os.str();
  };
  bool ok = true;
  for (Mode mode : {Mode::Distributional, Mode::DistributionFree}) {
    spec.mode = mode;
    const auto once = csv(spec, 1);
    ok = ok && once == csv(spec, 1) && once == csv(spec, 4);
  }
  spec.schemes = {Scheme::B};
  spec.mode = Mode::AlmostSparse;
  spec.head_mass = 0.9;
  const auto first = csv(spec, 1);
  ok = ok && first == csv(spec, 4);
  return {ok, ok ? "byte-identical for 1 and 4 workers" : "CSV differs"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "estimator oracle", 10, c1_oracle},
      {2, "known-support rate slope", 300, c2_slope},
      {3, "bit-budget scaling", 300, c3_bits},
      {4, "dimension-freeness", 600, c4_dimension},
      {5, "localization failure bounds", 600, c5_failure_bounds},
      {6, "group-testing zero error", 180, c6_group_testing},
      {7, "b-bit/1-bit consistency", 60, c7_bbit_consistency},
      {8, "distribution-free unbiasedness", 120, c8_distribution_free},
      {9, "almost-sparse trend", 300, c9_almost_sparse},
      {10, "threshold calculator", 1, c10_threshold},
      {11, "determinism", 600, c11_determinism},
  };
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      out.pass = false;
      out.detail += " [over time budget]";
    }
    failed += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " C" << c.id << " " << c.name << ": " << out.detail
              << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
