#include "bmix/commands.hpp"

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bmix/errors.hpp"

#ifndef BMIX_VERSION
#define BMIX_VERSION "dev"
#endif

namespace bmix::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const FitOptions& o) {
  json j;
  j["data"] = o.data_path;
  j["out_dir"] = o.out_dir;
  j["columns"] = o.csv.columns;
  j["label_col"] = o.csv.label_col;
  j["mode"] = o.mode;
  if (o.k) j["k"] = *o.k;
  if (o.gamma) j["gamma"] = *o.gamma;
  if (o.alpha) j["alpha"] = *o.alpha;
  j["bnb"] = {o.bnb.a_l, o.bnb.a_pi, o.bnb.b_pi};
  j["k_max"] = o.k_max;
  j["c"] = o.c;
  j["phi"] = o.phi;
  j["iters"] = o.iters;
  j["burnin"] = o.burnin;
  j["thin"] = o.thin;
  j["seed"] = o.seed;
  j["store_assignments"] = o.store_assignments;
  j["permute"] = o.permute;
  j["chains"] = o.chains;
  return j;
}

void from_json(const json& j, FitOptions& o) {
  for (const auto& [key, value] : j.items()) {
    if (key == "data") o.data_path = value.get<std::string>();
    else if (key == "out_dir") o.out_dir = value.get<std::string>();
    else if (key == "columns") o.csv.columns = value.get<std::vector<std::string>>();
    else if (key == "label_col") o.csv.label_col = value.get<std::string>();
    else if (key == "mode") o.mode = value.get<std::string>();
    else if (key == "k") o.k = value.get<int>();
    else if (key == "gamma") o.gamma = value.get<double>();
    else if (key == "alpha") o.alpha = value.get<double>();
    else if (key == "bnb") {
      const auto v = value.get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("config: bnb needs three values");
      o.bnb = {v[0], v[1], v[2]};
    } else if (key == "k_max") o.k_max = value.get<int>();
    else if (key == "c") o.c = value.get<double>();
    else if (key == "phi") o.phi = value.get<double>();
    else if (key == "iters") o.iters = value.get<long>();
    else if (key == "burnin") o.burnin = value.get<long>();
    else if (key == "thin") o.thin = value.get<long>();
    else if (key == "seed") o.seed = value.get<std::uint64_t>();
    else if (key == "store_assignments") o.store_assignments = value.get<bool>();
    else if (key == "permute") o.permute = value.get<bool>();
    else if (key == "chains") o.chains = value.get<int>();
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

struct ResolvedModel {
  SamplerMode mode;
  GammaSpec gamma;
  KPrior k_prior;
};

ResolvedModel resolve_model(const FitOptions& o) {
  if (o.mode == "fixed-k") {
    return {SamplerMode::FixedK, FixedGamma{o.gamma.value_or(1.0)}, FixedK{o.k.value_or(3)}};
  }
  if (o.mode == "sfm") {
    return {SamplerMode::Sparse, FixedGamma{o.gamma.value_or(0.01)}, SparseK{o.k.value_or(10)}};
  }
  if (o.mode == "mfm") {
    GammaSpec g = DynamicGamma{o.alpha.value_or(0.5)};
    if (o.gamma && !o.alpha) g = FixedGamma{*o.gamma};
    return {SamplerMode::Telescoping, g, RandomK{o.bnb, o.k_max, o.k.value_or(10)}};
  }
  throw ConfigError("unknown mode '" + o.mode + "' (expected fixed-k, sfm or mfm)");
}

template <class Writer>
std::string render(Writer&& w) {
  std::ostringstream os;
  w(os);
  return os.str();
}

struct ChainFiles {
  std::string draws, trace, assignments;
};

ChainFiles write_chain(const ChainOutput& chain, const fs::path& dir, bool assignments) {
  fs::create_directories(dir);
  ChainFiles files{(dir / "draws.csv").string(), (dir / "trace.csv").string(), ""};
  io::write_file_atomic(files.draws, render([&](std::ostream& os) { io::write_draws(os, chain); }));
  io::write_file_atomic(files.trace, render([&](std::ostream& os) { io::write_trace(os, chain); }));
  if (assignments) {
    files.assignments = (dir / "assignments.csv").string();
    io::write_file_atomic(files.assignments, render([&](std::ostream& os) { io::write_assignments(os, chain); }));
  }
  return files;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

void load_fit_config(const std::string& path, FitOptions& opts) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  if (j.contains("config") && j["config"].is_object()) j = j["config"];
  try {
    from_json(j, opts);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

std::string default_out_dir() {
  const char* env = std::getenv("BMIX_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : "bmix_out";
}

int cmd_fit(const FitOptions& opts_in, std::ostream& log) {
  FitOptions opts = opts_in;
  if (opts.out_dir.empty()) opts.out_dir = default_out_dir();

  Dataset data;
  try {
    data = io::read_dataset(opts.data_path, opts.csv);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kInputError;
  }

  ResolvedModel model;
  PriorConfig prior;
  ChainConfig base;
  try {
    model = resolve_model(opts);
    if (opts.chains < 1) throw ConfigError("chains must be >= 1");
    base.n_iter = opts.iters;
    base.burn_in = opts.burnin;
    base.thinning = opts.thin;
    base.seed = opts.seed;
    base.store_assignments = opts.store_assignments;
    base.permutation_step = opts.permute;
    base.validate();
    prior = build_default_prior(data, opts.c, opts.phi, model.gamma, model.k_prior);
  } catch (const DegeneratePrior& e) {
    log << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const Error& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  // Chains are independent; each thread owns its generator and output slot.
  const auto n_chains = static_cast<std::size_t>(opts.chains);
  std::vector<ChainOutput> outputs(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  {
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < n_chains; ++c) {
      workers.emplace_back([&, c] {
        try {
          ChainConfig cfg = base;
          cfg.seed = base.seed + c;
          outputs[c] = run_chain(data, prior, cfg, model.mode);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (std::size_t c = 0; c < n_chains; ++c) {
    if (!errors[c]) continue;
    try {
      std::rethrow_exception(errors[c]);
    } catch (const SamplerFailure& e) {
      log << "sampler failure (chain " << c + 1 << "): " << e.what() << '\n';
      return kSamplerError;
    } catch (const ConfigError& e) {
      log << "config error: " << e.what() << '\n';
      return kConfigError;
    } catch (const std::exception& e) {
      log << "sampler failure (chain " << c + 1 << "): " << e.what() << '\n';
      return kSamplerError;
    }
  }

  json artifacts = json::array();
  try {
    for (std::size_t c = 0; c < n_chains; ++c) {
      const fs::path dir = n_chains == 1 ? fs::path(opts.out_dir) : fs::path(opts.out_dir) / ("chain_" + std::to_string(c + 1));
      const auto files = write_chain(outputs[c], dir, opts.store_assignments);
      json a = {{"seed", outputs[c].seed}, {"draws", files.draws}, {"trace", files.trace}};
      if (!files.assignments.empty()) a["assignments"] = files.assignments;
      a["wall_time_seconds"] = outputs[c].wall_time.count();
      artifacts.push_back(a);
      log << "chain " << c + 1 << " (seed " << outputs[c].seed << "): " << outputs[c].records.size()
          << " stored sweeps in " << fixed(outputs[c].wall_time.count(), 2) << " s -> " << files.draws << '\n';
    }
    json manifest;
    manifest["tool"] = "bmix";
    manifest["version"] = BMIX_VERSION;
    manifest["config"] = to_json(opts);
    manifest["dataset_hash"] = "fnv1a64:" + io::file_digest(opts.data_path);
    manifest["seed"] = opts.seed;
    manifest["artifacts"] = artifacts;
    const auto manifest_path = (fs::path(opts.out_dir) / "manifest.json").string();
    io::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    log << "manifest: " << manifest_path << '\n';
  } catch (const std::exception& e) {
    log << "error writing outputs: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}

int cmd_identify(const IdentifyOptions& opts, std::ostream& log) {
  ChainOutput chain;
  try {
    std::ifstream in(opts.draws_path);
    if (!in) throw InvalidData("cannot open '" + opts.draws_path + "'");
    chain = io::read_draws(in);
    std::string assign_path = opts.assignments_path;
    if (assign_path.empty()) {
      const auto sibling = fs::path(opts.draws_path).parent_path() / "assignments.csv";
      if (fs::exists(sibling)) assign_path = sibling.string();
    }
    if (!assign_path.empty()) {
      std::ifstream ain(assign_path);
      if (!ain) throw InvalidData("cannot open '" + assign_path + "'");
      io::attach_assignments(chain, ain);
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kInputError;
  }

  const auto out_dir = fs::path(opts.out_dir.empty() ? fs::path(opts.draws_path).parent_path().string() : opts.out_dir);
  try {
    fs::create_directories(out_dir.empty() ? fs::path(".") : out_dir);
    const auto dist = kplus_distribution(chain);
    io::write_file_atomic((out_dir / "kplus_distribution.csv").string(), render([&](std::ostream& os) {
      os << "K_plus,frequency\n";
      for (const auto& [k, p] : dist) os << k << ',' << io::format_double(p) << '\n';
    }));
    log << "K_plus posterior:";
    for (const auto& [k, p] : dist) log << "  " << k << ": " << fixed(p, 4);
    log << '\n';

    int k_plus = 0;
    if (opts.kplus == "auto") {
      k_plus = kplus_mode(dist);
    } else {
      try {
        std::size_t pos = 0;
        k_plus = std::stoi(opts.kplus, &pos);
        if (pos != opts.kplus.size() || k_plus < 1) throw std::invalid_argument("kplus");
      } catch (const std::exception&) {
        log << "config error: --kplus must be 'auto' or a positive integer\n";
        return kConfigError;
      }
    }

    Rng rng(opts.seed);
    const auto selected = select_for_identification(chain, k_plus);
    const auto identified = ppr_identify(selected, rng);
    const auto summary = posterior_summary(identified);
    const bool have_S = !identified.relabeled.front().S.empty();

    json report;
    report["k_plus"] = k_plus;
    report["n_eligible"] = identified.n_eligible;
    report["n_kept"] = identified.kept_sweeps.size();
    report["non_permutation_rate"] = identified.non_permutation_rate;
    json dist_j = json::object();
    for (const auto& [k, p] : dist) dist_j[std::to_string(k)] = p;
    report["kplus_distribution"] = dist_j;
    report["eta"] = std::vector<double>(summary.eta.data(), summary.eta.data() + summary.eta.size());
    json mu_j = json::array();
    for (const auto& m : summary.mu) mu_j.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    report["mu"] = mu_j;

    std::vector<int> sizes;
    if (have_S) {
      sizes = modal_label_sizes(identified);
      report["group_sizes"] = sizes;
      const auto map = map_partition(identified);
      io::write_file_atomic((out_dir / "partition_map.csv").string(),
                            render([&](std::ostream& os) { io::write_partition(os, map); }));
      std::vector<std::vector<int>> all_S;
      for (const auto& rec : chain.records) {
        if (rec.S) all_S.push_back(*rec.S);
      }
      const auto vi = vi_partition(all_S, opts.vi_candidates);
      io::write_file_atomic((out_dir / "partition_vi.csv").string(),
                            render([&](std::ostream& os) { io::write_partition(os, vi); }));
      report["map_groups"] = map.n_groups;
      report["vi_groups"] = vi.n_groups;
    }

    // Table-style summary: rows are quantities, columns identified clusters.
    io::write_file_atomic((out_dir / "summary.csv").string(), render([&](std::ostream& os) {
      os << "quantity";
      for (int k = 1; k <= k_plus; ++k) os << ",cluster_" << k;
      os << '\n';
      if (have_S) {
        os << "N_k";
        for (int n : sizes) os << ',' << n;
        os << '\n';
      }
      os << "eta";
      for (int k = 0; k < k_plus; ++k) os << ',' << io::format_double(summary.eta[k]);
      os << '\n';
      for (Eigen::Index j = 0; j < chain.dim; ++j) {
        os << "mu_" << j + 1;
        for (const auto& m : summary.mu) os << ',' << io::format_double(m[j]);
        os << '\n';
      }
    }));
    io::write_file_atomic((out_dir / "identification.json").string(), report.dump(2) + "\n");

    log << "identified K_plus = " << k_plus << ": kept " << identified.kept_sweeps.size() << " of "
        << identified.n_eligible << " sweeps, non-permutation rate " << fixed(identified.non_permutation_rate, 4)
        << '\n';
    log << std::setw(10) << "cluster" << std::setw(8) << "N_k" << std::setw(8) << "eta";
    for (Eigen::Index j = 0; j < chain.dim; ++j) log << std::setw(12) << ("mu_" + std::to_string(j + 1));
    log << '\n';
    for (int k = 0; k < k_plus; ++k) {
      log << std::setw(10) << k + 1 << std::setw(8) << (have_S ? std::to_string(sizes[static_cast<std::size_t>(k)]) : "-")
          << std::setw(8) << fixed(summary.eta[k], 2);
      for (Eigen::Index j = 0; j < chain.dim; ++j) log << std::setw(12) << fixed(summary.mu[static_cast<std::size_t>(k)][j], 2);
      log << '\n';
    }
  } catch (const EmptySelection& e) {
    log << "identification failed: " << e.what() << '\n';
    return kIdentifyError;
  } catch (const IdentificationFailure& e) {
    log << "identification failed: " << e.what() << '\n';
    return kIdentifyError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}

int cmd_evaluate(const EvaluateOptions& opts, std::ostream& log) {
  std::vector<std::string> est_raw, truth_raw;
  try {
    est_raw = io::read_column(opts.partition_path, opts.partition_col);
    truth_raw = io::read_column(opts.truth_path, opts.truth_col);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kInputError;
  }
  if (est_raw.size() != truth_raw.size()) {
    log << "error: partition has " << est_raw.size() << " rows but truth has " << truth_raw.size() << '\n';
    return kInputError;
  }
  auto encode = [](const std::vector<std::string>& raw, std::vector<std::string>& names) {
    std::map<std::string, int> ids;
    std::vector<int> out;
    for (const auto& v : raw) {
      auto [it, inserted] = ids.try_emplace(v, static_cast<int>(names.size()));
      if (inserted) names.push_back(v);
      out.push_back(it->second);
    }
    return out;
  };
  std::vector<std::string> est_names, truth_names;
  const auto est_codes = encode(est_raw, est_names);
  const auto truth_codes = encode(truth_raw, truth_names);
  const auto estimated = make_partition(est_codes);
  const auto truth = make_partition(truth_codes);
  // make_partition orders ids numerically, which equals first-appearance
  // order here; names stay aligned with group ids.
  const double a = ari(estimated, truth);
  const auto conf = confusion_and_mcr(estimated, truth);

  log << std::setw(12) << "true \\ est";
  for (int g : conf.estimated_groups) log << std::setw(8) << est_names[static_cast<std::size_t>(g)];
  log << '\n';
  json table = json::array();
  for (Eigen::Index i = 0; i < conf.table.rows(); ++i) {
    log << std::setw(12) << truth_names[static_cast<std::size_t>(conf.truth_groups[static_cast<std::size_t>(i)])];
    std::vector<int> row;
    for (Eigen::Index j = 0; j < conf.table.cols(); ++j) {
      log << std::setw(8) << conf.table(i, j);
      row.push_back(conf.table(i, j));
    }
    table.push_back(row);
    log << '\n';
  }
  log << "groups " << estimated.n_groups << "  ARI " << fixed(a, 4) << "  MCR " << fixed(conf.mcr, 4) << '\n';

  json metrics;
  metrics["ari"] = a;
  metrics["mcr"] = conf.mcr;
  metrics["n"] = est_raw.size();
  metrics["groups"] = estimated.n_groups;
  std::vector<std::string> rows, cols;
  for (int g : conf.truth_groups) rows.push_back(truth_names[static_cast<std::size_t>(g)]);
  for (int g : conf.estimated_groups) cols.push_back(est_names[static_cast<std::size_t>(g)]);
  metrics["confusion"] = {{"rows", rows}, {"columns", cols}, {"table", table}};
  const std::string out_path = opts.out_path.empty()
                                   ? (fs::path(opts.partition_path).parent_path() / "metrics.json").string()
                                   : opts.out_path;
  try {
    io::write_file_atomic(out_path, metrics.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}

}  // namespace bmix::cli
