#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "bmix/io.hpp"

namespace bmix::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kConfigError = 3,
  kSamplerError = 4,
  kIdentifyError = 5,
};

struct FitOptions {
  std::string data_path;
  std::string out_dir;
  io::CsvOptions csv;
  std::string mode = "fixed-k";  // fixed-k | sfm | mfm
  std::optional<int> k;          // K (fixed-k, sfm) or starting K (mfm)
  std::optional<double> gamma;   // fixed Dirichlet parameter
  std::optional<double> alpha;   // dynamic gamma_K = alpha / K (mfm)
  BnbParams bnb;
  int k_max = 100;
  double c = 2.5;
  double phi = 0.75;
  long iters = 30000;
  long burnin = 5000;
  long thin = 1;
  std::uint64_t seed = 1;
  bool store_assignments = false;
  bool permute = false;
  int chains = 1;
};

struct IdentifyOptions {
  std::string draws_path;
  std::string out_dir;
  std::string kplus = "auto";
  std::string assignments_path;  // default: assignments.csv next to the draws
  std::uint64_t seed = 1;        // k-means seeding for ppr
  std::size_t vi_candidates = 2000;
};

struct EvaluateOptions {
  std::string partition_path;
  std::string truth_path;
  std::string partition_col = "cluster";
  std::string truth_col = "class";
  std::string out_path;  // default: metrics.json next to the partition
};

// Reads a JSON config (or a run manifest, whose "config" member is used)
// into opts. Throws ConfigError on unknown keys or bad values.
void load_fit_config(const std::string& path, FitOptions& opts);

std::string default_out_dir();

// Each command prints a human-readable report to `log` and returns an
// ExitCode.
int cmd_fit(const FitOptions& opts, std::ostream& log);
int cmd_identify(const IdentifyOptions& opts, std::ostream& log);
int cmd_evaluate(const EvaluateOptions& opts, std::ostream& log);

}  // namespace bmix::cli
