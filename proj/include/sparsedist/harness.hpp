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

// Sweep execution, CSV emission, the sample-size threshold calculator and
// measurement-matrix reports. Everything here sits on top of the pipeline;
// nothing in the protocol modules depends on it.

#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "sparsedist/core.hpp"
#include "sparsedist/group_testing.hpp"
#include "sparsedist/pipeline.hpp"
#include "sparsedist/random.hpp"

namespace sparsedist {

// ---------------------------------------------------------------------------
// Worker pool

/// Worker count from SPARSEDIST_WORKERS, else the hardware concurrency.
inline unsigned worker_count_from_env() {
  if (const char* env = std::getenv("SPARSEDIST_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<unsigned>(v);
    throw InvalidArgument("SPARSEDIST_WORKERS must be an integer in [1, 1024]");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(k) for k in [0, count) on `workers` threads. The first exception
/// thrown by any call is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= count) return;
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  for (unsigned w = 0; w < spawn; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Ground-truth families

enum class Family { Uniform, Geometric };

inline Family parse_family(std::string_view text) {
  if (text == "uniform") return Family::Uniform;
  if (text == "geometric") return Family::Geometric;
  throw InvalidArgument("unknown family '" + std::string(text) + "' (expected uniform or geometric)");
}

inline std::string_view to_string(Family f) noexcept {
  return f == Family::Uniform ? "uniform" : "geometric";
}

/// s head symbols drawn uniformly from [1..d]; head weights are equal
/// (Uniform) or halve from one rank to the next (Geometric) and carry total
/// mass `head_mass`. The remaining mass is spread evenly over the other d - s
/// symbols, which requires s < d whenever head_mass < 1.
inline SparseDistribution make_family_distribution(Family family, std::uint32_t d,
                                                   std::uint32_t s, double head_mass,
                                                   RandomStream& stream) {
  detail::require(s >= 1 && s <= d, "need 1 <= s <= d");
  detail::require(head_mass > 0.0 && head_mass <= 1.0, "head mass must be in (0, 1]");
  detail::require(head_mass == 1.0 || s < d, "a tail needs s < d");
  std::vector<Symbol> symbols(d);
  for (Symbol j = 0; j < d; ++j) symbols[j] = j + 1;
  for (std::uint32_t k = 0; k < s; ++k)
    std::swap(symbols[k], symbols[k + stream.below(d - k)]);

  std::vector<double> weights(s);
  double total = 0.0;
  for (std::uint32_t k = 0; k < s; ++k) {
    weights[k] = family == Family::Uniform ? 1.0 : std::ldexp(1.0, -static_cast<int>(k));
    total += weights[k];
  }
  std::vector<Symbol> support(symbols.begin(), symbols.begin() + s);
  std::vector<double> probs;
  for (double w : weights) probs.push_back(head_mass * w / total);
  if (head_mass < 1.0) {
    const double tail = (1.0 - head_mass) / (d - s);
    for (std::uint32_t k = s; k < d; ++k) {
      support.push_back(symbols[k]);
      probs.push_back(tail);
    }
  }
  return make_sparse_distribution(d, support, probs);
}

// ---------------------------------------------------------------------------
// Sweep specification

struct SweepSpec {
  std::vector<Scheme> schemes;
  std::vector<std::uint64_t> n;
  std::vector<std::uint32_t> d;
  std::vector<std::uint32_t> s;
  std::vector<unsigned> b;
  std::uint64_t trials = 1;
  Mode mode = Mode::Distributional;
  std::uint64_t master_seed = 0;
  std::string output;  // per-trial CSV path; aggregate goes to <output stem>.agg.csv

  Family family = Family::Uniform;
  double head_mass = 1.0;
  double split = 0.5;
  std::optional<std::uint64_t> n1;
  std::optional<double> alpha;
  double c1 = 1.0;
  std::optional<KsParams> ks;
  std::optional<unsigned> ks_budget;
  std::uint64_t enum_cap = ExhaustiveOptions{}.enumeration_cap;
  bool project = false;
  bool record_timing = false;

  void validate() const {
    using detail::require;
    require(!schemes.empty() && !n.empty() && !d.empty() && !s.empty() && !b.empty(),
            "sweep lists must be non-empty");
    require(trials >= 1, "trials must be at least 1");
    require(head_mass > 0.0 && head_mass <= 1.0, "head_mass must be in (0, 1]");
  }
};

inline constexpr int kSweepSchemaVersion = 1;

/// Parses a JSON sweep specification. Unknown keys are errors.
inline SweepSpec parse_sweep_spec(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "schema_version", "schemes", "n", "d", "s", "b", "trials", "mode", "master_seed",
      "output", "family", "head_mass", "split", "n1", "alpha", "c1", "ks_q", "ks_k", "ks_budget",
      "enum_cap", "project", "record_timing"};
  if (!j.is_object()) throw InvalidArgument("sweep spec must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw InvalidArgument("unknown key '" + key + "' in sweep spec");
  if (!j.contains("schema_version") || j.at("schema_version") != kSweepSchemaVersion)
    throw InvalidArgument("sweep spec needs \"schema_version\": " + std::to_string(kSweepSchemaVersion));
  for (const char* key : {"schemes", "n", "d", "s", "b", "trials"})
    if (!j.contains(key)) throw InvalidArgument(std::string("sweep spec is missing '") + key + "'");

  SweepSpec spec;
  try {
    for (const auto& name : j.at("schemes").get<std::vector<std::string>>())
      spec.schemes.push_back(parse_scheme(name));
    spec.n = j.at("n").get<std::vector<std::uint64_t>>();
    spec.d = j.at("d").get<std::vector<std::uint32_t>>();
    spec.s = j.at("s").get<std::vector<std::uint32_t>>();
    spec.b = j.at("b").get<std::vector<unsigned>>();
    spec.trials = j.at("trials").get<std::uint64_t>();
    if (j.contains("mode")) spec.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("master_seed")) spec.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("output")) spec.output = j.at("output").get<std::string>();
    if (j.contains("family")) spec.family = parse_family(j.at("family").get<std::string>());
    if (j.contains("head_mass")) spec.head_mass = j.at("head_mass").get<double>();
    if (j.contains("split")) spec.split = j.at("split").get<double>();
    if (j.contains("n1")) spec.n1 = j.at("n1").get<std::uint64_t>();
    if (j.contains("alpha")) spec.alpha = j.at("alpha").get<double>();
    if (j.contains("c1")) spec.c1 = j.at("c1").get<double>();
    if (j.contains("ks_q") != j.contains("ks_k"))
      throw InvalidArgument("ks_q and ks_k must be given together");
    if (j.contains("ks_q"))
      spec.ks = KsParams{j.at("ks_q").get<std::uint32_t>(), j.at("ks_k").get<unsigned>()};
    if (j.contains("ks_budget")) spec.ks_budget = j.at("ks_budget").get<unsigned>();
    if (j.contains("enum_cap")) spec.enum_cap = j.at("enum_cap").get<std::uint64_t>();
    if (j.contains("project")) spec.project = j.at("project").get<bool>();
    if (j.contains("record_timing")) spec.record_timing = j.at("record_timing").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("sweep spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

inline SweepSpec load_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep spec " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
  return parse_sweep_spec(j);
}

// ---------------------------------------------------------------------------
// Sweep execution

struct CellAggregate {
  SchemeConfig config;
  std::uint64_t trials = 0;
  double mean_l2_sq = 0.0, stderr_l2_sq = 0.0;
  double mean_l1 = 0.0, stderr_l1 = 0.0;
  double failure_rate = 0.0;
  double mean_support_size = 0.0;
};

struct SweepOutcome {
  std::vector<TrialRecord> records;      // (cell, trial) order
  std::vector<CellAggregate> aggregates;  // cells that ran, in cell order
  std::vector<std::string> problems;     // skipped cells and failed assertions

  bool ok() const noexcept { return problems.empty(); }
};

/// Cells in row-major order over (scheme, n, d, s, b).
inline std::vector<SchemeConfig> expand_cells(const SweepSpec& spec) {
  std::vector<SchemeConfig> cells;
  for (Scheme scheme : spec.schemes)
    for (auto n : spec.n)
      for (auto d : spec.d)
        for (auto s : spec.s)
          for (auto b : spec.b) {
            SchemeConfig c;
            c.scheme = scheme;
            c.n = n;
            c.d = d;
            c.s = s;
            c.b = b;
            c.mode = spec.mode;
            c.split = spec.split;
            c.n1 = spec.n1;
            c.alpha = spec.alpha;
            c.c1 = spec.c1;
            c.ks = spec.ks;
            c.ks_budget = spec.ks_budget;
            c.enum_cap = spec.enum_cap;
            c.project = spec.project;
            c.record_timing = spec.record_timing;
            c.master_seed = derive_seed(spec.master_seed, cells.size());
            cells.push_back(c);
          }
  return cells;
}

inline std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t cell, std::uint64_t trial) {
  return derive_seed(master_seed, cell, trial + 1);
}

/// Ground truth of a trial: Data stream index 1 of the trial seed.
inline SparseDistribution trial_distribution(const SweepSpec& spec, const SchemeConfig& c,
                                             std::uint64_t seed) {
  RandomStream stream = derive_stream({seed, StageTag::Data}, 1);
  const double head = spec.mode == Mode::AlmostSparse ? spec.head_mass : 1.0;
  return make_family_distribution(spec.family, c.d, c.s, head, stream);
}

inline std::optional<std::string> check_record(const TrialRecord& r) {
  auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
  if (bad(r.l2_sq) || bad(r.l1) || bad(r.tv)) return "non-finite or negative error metric";
  if (r.bits_sent != r.n * r.b) return "bits sent differ from n b";
  if (r.scheme == Scheme::B && r.est_support_size != r.s) return "Scheme B estimate size differs from s";
  return std::nullopt;
}

inline SweepOutcome run_sweep(const SweepSpec& spec, unsigned workers) {
  spec.validate();
  const auto cells = expand_cells(spec);
  SweepOutcome out;

  struct Job {
    std::size_t cell;
    std::uint64_t trial;
  };
  std::vector<std::optional<Protocol>> protocols(cells.size());
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    try {
      protocols[c].emplace(cells[c]);
    } catch (const std::exception& e) {
      out.problems.push_back("cell " + std::to_string(c) + " (scheme " +
                             std::string(to_string(cells[c].scheme)) + ", n=" +
                             std::to_string(cells[c].n) + ", d=" + std::to_string(cells[c].d) +
                             ", s=" + std::to_string(cells[c].s) + ", b=" +
                             std::to_string(cells[c].b) + ") skipped: " + e.what());
      continue;
    }
    for (std::uint64_t t = 0; t < spec.trials; ++t) jobs.push_back({c, t});
  }

  std::vector<TrialRecord> records(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t k) {
    const auto& job = jobs[k];
    const Protocol& protocol = *protocols[job.cell];
    const std::uint64_t seed = trial_seed(spec.master_seed, job.cell, job.trial);
    const auto p = trial_distribution(spec, protocol.config(), seed);
    auto result = protocol.run_trial(p, seed);
    result.record.trial = job.trial;
    records[k] = result.record;
  });

  std::size_t k = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!protocols[c]) continue;
    CellAggregate agg;
    agg.config = cells[c];
    agg.trials = spec.trials;
    double s1 = 0, s2 = 0, a1 = 0, a2 = 0, fail = 0, size = 0;
    for (std::uint64_t t = 0; t < spec.trials; ++t, ++k) {
      const auto& r = records[k];
      if (auto problem = check_record(r))
        out.problems.push_back("cell " + std::to_string(c) + " trial " + std::to_string(t) + ": " + *problem);
      s1 += r.l2_sq;
      s2 += r.l2_sq * r.l2_sq;
      a1 += r.l1;
      a2 += r.l1 * r.l1;
      fail += r.loc_success ? 0.0 : 1.0;
      size += static_cast<double>(r.est_support_size);
    }
    const double m = static_cast<double>(spec.trials);
    auto stderr_of = [m](double sum, double sq) {
      if (m < 2) return 0.0;
      const double var = std::max(0.0, (sq - sum * sum / m) / (m - 1));
      return std::sqrt(var / m);
    };
    agg.mean_l2_sq = s1 / m;
    agg.stderr_l2_sq = stderr_of(s1, s2);
    agg.mean_l1 = a1 / m;
    agg.stderr_l1 = stderr_of(a1, a2);
    agg.failure_rate = fail / m;
    agg.mean_support_size = size / m;
    out.aggregates.push_back(agg);
  }
  out.records = std::move(records);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kTrialCsvHeader =
    "scheme,mode,n,d,s,b,trial,seed,l2_sq,l1,tv,loc_success,est_support_size,wall_ms";

inline void write_trial_csv(std::ostream& os, std::span<const TrialRecord> records) {
  os << kTrialCsvHeader << '\n';
  for (const auto& r : records)
    os << to_string(r.scheme) << ',' << to_string(r.mode) << ',' << r.n << ',' << r.d << ','
       << r.s << ',' << r.b << ',' << r.trial << ',' << r.seed << ',' << format_double(r.l2_sq)
       << ',' << format_double(r.l1) << ',' << format_double(r.tv) << ','
       << (r.loc_success ? 1 : 0) << ',' << r.est_support_size << ','
       << format_double(r.wall_ms) << '\n';
}

inline constexpr const char* kAggregateCsvHeader =
    "scheme,mode,n,d,s,b,trials,mean_l2_sq,stderr_l2_sq,mean_l1,stderr_l1,failure_rate,"
    "mean_support_size";

inline void write_aggregate_csv(std::ostream& os, std::span<const CellAggregate> aggregates) {
  os << kAggregateCsvHeader << '\n';
  for (const auto& a : aggregates)
    os << to_string(a.config.scheme) << ',' << to_string(a.config.mode) << ',' << a.config.n
       << ',' << a.config.d << ',' << a.config.s << ',' << a.config.b << ',' << a.trials << ','
       << format_double(a.mean_l2_sq) << ',' << format_double(a.stderr_l2_sq) << ','
       << format_double(a.mean_l1) << ',' << format_double(a.stderr_l1) << ','
       << format_double(a.failure_rate) << ',' << format_double(a.mean_support_size) << '\n';
}

/// "out/run.csv" -> "out/run.agg.csv".
inline std::string aggregate_path(const std::string& trial_path) {
  const auto slash = trial_path.find_last_of('/');
  const auto dot = trial_path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return trial_path + ".agg.csv";
  return trial_path.substr(0, dot) + ".agg" + trial_path.substr(dot);
}

// ---------------------------------------------------------------------------
// Sample-size threshold

struct ThresholdQuery {
  double f1 = 0.0;
  double f2 = 0.0;
};

struct ThresholdResult {
  std::uint64_t n = 0;
  bool guaranteed = false;  // f1 >= 300
};

inline constexpr double kThresholdMinF1 = 300.0;

/// ceil(4 f1^2 max(f2^2, 16 ln^2 f1)).
inline ThresholdResult compute_sample_threshold(ThresholdQuery q) {
  detail::require(std::isfinite(q.f1) && q.f1 > 0.0, "f1 must be positive");
  detail::require(std::isfinite(q.f2) && q.f2 >= 0.0, "f2 must be non-negative");
  const double lg = std::log(q.f1);
  const double value = 4.0 * q.f1 * q.f1 * std::max(q.f2 * q.f2, 16.0 * lg * lg);
  if (!(value < 9.0e18)) throw CapExceeded("threshold exceeds the 64-bit range");
  return {static_cast<std::uint64_t>(std::ceil(value)), q.f1 >= kThresholdMinF1};
}

/// exp(-sqrt(n)/f1 + f2) <= 1/n, compared in log space.
inline bool threshold_inequality_holds(double f1, double f2, std::uint64_t n) {
  const double nn = static_cast<double>(n);
  return -std::sqrt(nn) / f1 + f2 <= -std::log(nn);
}

// ---------------------------------------------------------------------------
// Matrix report

/// Largest w such that every column has at most one 1 in each aligned block
/// of w consecutive rows.
inline std::uint32_t block_sparsity_width(const MeasurementMatrix& m) {
  for (std::uint32_t w = m.rows(); w > 1; --w) {
    bool ok = true;
    for (Symbol j = 1; j <= m.cols() && ok; ++j) {
      const auto col = m.column(j);
      for (std::size_t r = 1; r < col.size() && ok; ++r)
        ok = (col[r] - 1) / w != (col[r - 1] - 1) / w;
    }
    if (ok) return w;
  }
  return 1;
}

struct MatrixReport {
  std::uint32_t T = 0;
  std::uint32_t d = 0;
  std::uint32_t block_width = 0;
  unsigned disjunct = 0;
};

inline MatrixReport matrix_report(const MeasurementMatrix& m,
                                  std::uint64_t node_cap = kDefaultDisjunctNodeCap) {
  return {m.rows(), m.cols(), block_sparsity_width(m), disjunct_level(m, node_cap)};
}

inline void print_matrix_report(std::ostream& os, const MatrixReport& r) {
  os << "T=" << r.T << " d=" << r.d << " disjunct=" << r.disjunct << '\n'
     << "block_width=" << r.block_width << '\n';
}

}  // namespace sparsedist
