// bmix: Bayesian finite mixture clustering from the command line.
//
//   bmix fit data.csv --label-col class --mode fixed-k --k 3 --store-assignments
//   bmix identify bmix_out/draws.csv --kplus auto
//   bmix evaluate bmix_out/partition_map.csv data.csv --truth-col class

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bmix/commands.hpp"
#include "bmix/errors.hpp"

namespace {

std::vector<double> parse_triple(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.size() != 3) throw std::invalid_argument("expected three comma-separated values");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bmix::cli;

  CLI::App app{"Bayesian finite mixtures: Gibbs, sparse finite mixture and telescoping samplers"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "Run the MCMC sampler and write draws, traces and a manifest");
  FitOptions fo;
  std::string config_path, columns, bnb, mode;
  std::optional<int> k, chains, k_max;
  std::optional<double> gamma, alpha, c, phi;
  std::optional<long> iters, burnin, thin;
  std::optional<std::uint64_t> seed;
  std::string out_dir, label_col;
  bool store = false, permute = false;
  fit->add_option("data", fo.data_path, "Input CSV with a header row");
  fit->add_option("--config", config_path, "JSON config (or a previous manifest.json); flags override it");
  fit->add_option("--out", out_dir, "Output directory (default $BMIX_OUT_DIR or ./bmix_out)");
  fit->add_option("--cols", columns, "Comma-separated feature columns (names or 1-based indices)");
  fit->add_option("--label-col", label_col, "Class column excluded from the features");
  fit->add_option("--mode", mode, "fixed-k | sfm | mfm")->check(CLI::IsMember({"fixed-k", "sfm", "mfm"}));
  fit->add_option("--k", k, "Number of components (fixed-k: 3, sfm: 10) or starting K for mfm (10)");
  fit->add_option("--gamma", gamma, "Fixed Dirichlet parameter (fixed-k: 1, sfm: 0.01)");
  fit->add_option("--alpha", alpha, "Dynamic Dirichlet parameter gamma_K = alpha/K for mfm (0.5)");
  fit->add_option("--bnb", bnb, "BNB prior on K-1 as a_l,a_pi,b_pi (1,4,3)");
  fit->add_option("--kmax", k_max, "Truncation of the prior on K (100)");
  fit->add_option("--c", c, "Virtual observations per component (2.5)");
  fit->add_option("--phi", phi, "Prior covariance fraction of the data variance (0.75)");
  fit->add_option("--iters", iters, "Total sweeps M (30000)");
  fit->add_option("--burnin", burnin, "Burn-in sweeps (5000)");
  fit->add_option("--thin", thin, "Store every n-th post-burn-in sweep (1)");
  fit->add_option("--seed", seed, "Random seed (1); chain i uses seed + i - 1");
  fit->add_option("--chains", chains, "Independent chains run concurrently (1)");
  fit->add_flag("--store-assignments", store, "Also write per-sweep allocations");
  fit->add_flag("--permute", permute, "Random label permutation after every sweep");

  // identify
  auto* identify = app.add_subcommand("identify", "Relabel draws with ppr and summarize clusters");
  IdentifyOptions io;
  identify->add_option("draws", io.draws_path, "draws.csv written by fit")->required();
  identify->add_option("--out", io.out_dir, "Output directory (default: next to the draws)");
  identify->add_option("--kplus", io.kplus, "'auto' (posterior mode) or a number of clusters");
  identify->add_option("--assignments", io.assignments_path, "Allocation draws (default: assignments.csv next to draws)");
  identify->add_option("--seed", io.seed, "Seed for the ppr k-means");
  identify->add_option("--vi-candidates", io.vi_candidates, "Max candidate partitions for the VI search");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Compare a partition with reference classes");
  EvaluateOptions eo;
  evaluate->add_option("partition", eo.partition_path, "Partition CSV")->required();
  evaluate->add_option("truth", eo.truth_path, "CSV holding the reference classes")->required();
  evaluate->add_option("--partition-col", eo.partition_col, "Partition column");
  evaluate->add_option("--truth-col", eo.truth_col, "Reference class column");
  evaluate->add_option("--out", eo.out_path, "Metrics JSON (default: metrics.json next to the partition)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  if (fit->parsed()) {
    try {
      if (!config_path.empty()) {
        const std::string positional = fo.data_path;
        load_fit_config(config_path, fo);
        if (!positional.empty()) fo.data_path = positional;
      }
      if (fo.data_path.empty()) throw bmix::ConfigError("no input data given");
      if (!out_dir.empty()) fo.out_dir = out_dir;
      if (!columns.empty()) {
        fo.csv.columns.clear();
        std::stringstream ss(columns);
        std::string item;
        while (std::getline(ss, item, ',')) fo.csv.columns.push_back(item);
      }
      if (!label_col.empty()) fo.csv.label_col = label_col;
      if (!mode.empty()) fo.mode = mode;
      if (k) fo.k = k;
      if (gamma) fo.gamma = gamma;
      if (alpha) fo.alpha = alpha;
      if (!bnb.empty()) {
        const auto v = parse_triple(bnb);
        fo.bnb = {v[0], v[1], v[2]};
      }
      if (k_max) fo.k_max = *k_max;
      if (c) fo.c = *c;
      if (phi) fo.phi = *phi;
      if (iters) fo.iters = *iters;
      if (burnin) fo.burnin = *burnin;
      if (thin) fo.thin = *thin;
      if (seed) fo.seed = *seed;
      if (chains) fo.chains = *chains;
      if (store) fo.store_assignments = true;
      if (permute) fo.permute = true;
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kConfigError;
    }
    return cmd_fit(fo, std::cout);
  }
  if (identify->parsed()) return cmd_identify(io, std::cout);
  return cmd_evaluate(eo, std::cout);
}
