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

// Command-line front end: simulate, sweep, matrix, threshold.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sparsedist/sparsedist.hpp"

namespace {

using namespace sparsedist;

struct SimulateArgs {
  std::string scheme = "A";
  std::uint32_t d = 16;
  std::uint32_t s = 2;
  unsigned b = 1;
  std::uint64_t n = 10000;
  std::uint64_t trials = 100;
  std::string mode = "distributional";
  std::uint64_t seed = 1;
  double split = 0.5;
  std::optional<std::uint64_t> n1;
  std::optional<double> alpha;
  std::string family = "uniform";
  double head_mass = 1.0;
  double c1 = 1.0;
  std::optional<std::uint32_t> ks_q;
  std::optional<unsigned> ks_k;
  std::optional<unsigned> ks_budget;
  std::uint64_t enum_cap = ExhaustiveOptions{}.enumeration_cap;
  bool project = false;
  bool timing = false;
  std::string out;
};

struct MatrixArgs {
  std::optional<std::uint32_t> q;
  std::optional<unsigned> k;
  std::optional<std::uint32_t> d;
  std::string load;
  std::string write;
  std::uint64_t cap = kDefaultDisjunctNodeCap;
};

// Writes both CSVs. Per-trial rows go to stdout when no path is given.
int emit(const SweepOutcome& outcome, const std::string& path) {
  if (path.empty()) {
    write_trial_csv(std::cout, outcome.records);
    write_aggregate_csv(std::cerr, outcome.aggregates);
  } else {
    const auto parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream trials(path);
    std::ofstream agg(aggregate_path(path));
    if (!trials || !agg) {
      std::cerr << "error: cannot write " << path << '\n';
      return 2;
    }
    write_trial_csv(trials, outcome.records);
    write_aggregate_csv(agg, outcome.aggregates);
    std::cerr << "wrote " << outcome.records.size() << " trial rows to " << path << " and "
              << outcome.aggregates.size() << " cells to " << aggregate_path(path) << '\n';
  }
  for (const auto& p : outcome.problems) std::cerr << "problem: " << p << '\n';
  return outcome.ok() ? 0 : 1;
}

int run_simulate(const SimulateArgs& a) {
  SweepSpec spec;
  spec.schemes = {parse_scheme(a.scheme)};
  spec.n = {a.n};
  spec.d = {a.d};
  spec.s = {a.s};
  spec.b = {a.b};
  spec.trials = a.trials;
  spec.mode = parse_mode(a.mode);
  spec.master_seed = a.seed;
  spec.family = parse_family(a.family);
  spec.head_mass = a.head_mass;
  spec.split = a.split;
  spec.n1 = a.n1;
  spec.alpha = a.alpha;
  spec.c1 = a.c1;
  if (a.ks_q.has_value() != a.ks_k.has_value())
    throw InvalidArgument("--ks-q and --ks-k must be given together");
  if (a.ks_q) spec.ks = KsParams{*a.ks_q, *a.ks_k};
  spec.ks_budget = a.ks_budget;
  spec.enum_cap = a.enum_cap;
  spec.project = a.project;
  spec.record_timing = a.timing;
  return emit(run_sweep(spec, worker_count_from_env()), a.out);
}

int run_sweep_file(const std::string& path, const std::string& out_override) {
  const SweepSpec spec = load_sweep_spec(path);
  const std::string out = out_override.empty() ? spec.output : out_override;
  return emit(run_sweep(spec, worker_count_from_env()), out);
}

int run_matrix(const MatrixArgs& a) {
  std::optional<MeasurementMatrix> m;
  if (!a.load.empty()) {
    if (a.q || a.k) throw InvalidArgument("give either --load or --q/--k, not both");
    std::ifstream in(a.load);
    if (!in) throw std::runtime_error("cannot open " + a.load);
    m.emplace(read_matrix(in));
  } else {
    if (!a.q || !a.k) throw InvalidArgument("matrix needs --q and --k, or --load");
    m.emplace(build_ks_matrix(*a.q, *a.k, a.d));
  }
  print_matrix_report(std::cout, matrix_report(*m, a.cap));
  if (!a.write.empty()) {
    std::ofstream out(a.write);
    if (!out) throw std::runtime_error("cannot write " + a.write);
    write_matrix(out, *m);
  }
  return 0;
}

int run_threshold(double f1, double f2) {
  const auto r = compute_sample_threshold({f1, f2});
  std::cout << "n=" << r.n << '\n';
  std::cout << "inequality_holds=" << (threshold_inequality_holds(f1, f2, r.n) ? "yes" : "no") << '\n';
  if (!r.guaranteed) std::cout << "warning: f1 < 300, no guarantee\n";
  return 0;
}

void add_config_flags(CLI::App* cmd, SimulateArgs& a) {
  cmd->add_option("--scheme", a.scheme, "A, B, C or D")->check(CLI::IsMember({"A", "B", "C", "D"}));
  cmd->add_option("--d", a.d, "dimension");
  cmd->add_option("--s", a.s, "sparsity");
  cmd->add_option("--b", a.b, "bits per client");
  cmd->add_option("--n", a.n, "number of clients");
  cmd->add_option("--trials", a.trials, "trials");
  cmd->add_option("--mode", a.mode, "distributional, distribution_free or almost_sparse");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--split", a.split, "fraction of clients used for localization");
  cmd->add_option("--n1", a.n1, "explicit localization client count");
  cmd->add_option("--alpha", a.alpha, "heavy-hitter threshold (default 1/sqrt(n 2^b))");
  cmd->add_option("--family", a.family, "uniform or geometric ground truth");
  cmd->add_option("--head-mass", a.head_mass, "mass of the s largest entries (almost_sparse)");
  cmd->add_option("--c1", a.c1, "almost-sparse localization budget constant");
  cmd->add_option("--ks-q", a.ks_q, "Scheme C field size");
  cmd->add_option("--ks-k", a.ks_k, "Scheme C message length");
  cmd->add_option("--ks-budget", a.ks_budget, "Scheme C disjunctness target (default s)");
  cmd->add_option("--enum-cap", a.enum_cap, "Scheme B candidate cap");
  cmd->add_flag("--project", a.project, "clip estimates to [0, 1]");
  cmd->add_flag("--timing", a.timing, "record wall_ms (breaks byte-identical output)");
  cmd->add_option("--out", a.out, "per-trial CSV path (aggregate is written alongside)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse distribution estimation under a per-client bit budget"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run one configuration for several trials");
  add_config_flags(simulate, sim);

  std::string spec_path, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "run a JSON sweep specification");
  sweep->add_option("spec", spec_path, "sweep specification file")->required();
  sweep->add_option("--out", sweep_out, "override the spec's output path");

  MatrixArgs mat;
  auto* matrix = app.add_subcommand("matrix", "build or load a measurement matrix and certify it");
  matrix->add_option("--q", mat.q, "prime field size");
  matrix->add_option("--k", mat.k, "message length");
  matrix->add_option("--d", mat.d, "keep only the first d columns");
  matrix->add_option("--load", mat.load, "read a matrix file instead of building one");
  matrix->add_option("--write", mat.write, "write the matrix file");
  matrix->add_option("--cap", mat.cap, "node cap for the disjunctness search");

  double f1 = 0.0, f2 = 0.0;
  auto* threshold = app.add_subcommand("threshold", "sample size for exp(-sqrt(n)/f1 + f2) <= 1/n");
  threshold->add_option("--f1", f1, "f1 > 0")->required();
  threshold->add_option("--f2", f2, "f2 >= 0");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return run_simulate(sim);
    if (*sweep) return run_sweep_file(spec_path, sweep_out);
    if (*matrix) return run_matrix(mat);
    if (*threshold) return run_threshold(f1, f2);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
