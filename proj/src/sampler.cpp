#include "bmix/sampler.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "bmix/clustering.hpp"
#include "bmix/errors.hpp"

namespace bmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::vector<Eigen::Index>> members_by_component(const MixtureState& state) {
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(state.K()));
  for (std::size_t i = 0; i < state.S.size(); ++i) {
    members[static_cast<std::size_t>(state.S[i])].push_back(static_cast<Eigen::Index>(i));
  }
  return members;
}

int initial_K(const PriorConfig& prior, SamplerMode mode) {
  if (mode == SamplerMode::Telescoping) {
    const auto* random = std::get_if<RandomK>(&prior.k_prior);
    if (random == nullptr) {
      throw ConfigError("telescoping sampler requires a random-K prior");
    }
    return random->k_init;
  }
  if (const auto* fixed = std::get_if<FixedK>(&prior.k_prior)) return fixed->K;
  if (const auto* sparse = std::get_if<SparseK>(&prior.k_prior)) return sparse->K;
  throw ConfigError(std::string(to_string(mode)) + " sampler requires a fixed K");
}

TracePoint make_trace(long iter, const MixtureState& state, double log_lik, bool filled_only) {
  TracePoint t;
  t.iter = iter;
  t.K = state.K();
  t.K_plus = state.k_plus;
  t.log_lik = log_lik;
  for (int k = 0; k < state.K(); ++k) {
    const int n = state.counts[static_cast<std::size_t>(k)];
    if (filled_only && n == 0) continue;
    t.component.push_back(k);
    t.mu_first.push_back(state.mu[static_cast<std::size_t>(k)][0]);
    t.counts.push_back(n);
  }
  return t;
}

SweepRecord make_record(long iter, const MixtureState& state, double log_lik, bool with_S) {
  SweepRecord rec;
  rec.iter = iter;
  rec.K = state.K();
  rec.K_plus = state.k_plus;
  rec.eta = state.eta;
  rec.mu = state.mu;
  rec.Sigma = state.Sigma;
  rec.counts = state.counts;
  if (with_S) rec.S = state.S;
  rec.log_lik = log_lik;
  return rec;
}

}  // namespace

const char* to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::FixedK:
      return "fixed-k";
    case SamplerMode::Sparse:
      return "sfm";
    case SamplerMode::Telescoping:
      return "mfm";
  }
  return "unknown";
}

MixtureState init_from_kmeans(const Dataset& data, int K, const PriorConfig& prior, Rng& rng) {
  if (K < 1) {
    throw InvalidParameter("init: K must be positive");
  }
  const auto km = kmeans(data.y, K, rng);
  MixtureState state;
  state.eta = VectorXd::Constant(K, 1.0 / K);
  state.S = km.labels;
  state.C0 = prior.C0_init;
  state.mu.assign(static_cast<std::size_t>(K), prior.b0);
  state.Sigma.assign(static_cast<std::size_t>(K), prior.phi * prior.S);
  state.recount();
  for (int k = 0; k < K; ++k) {
    if (state.counts[static_cast<std::size_t>(k)] > 0) {
      state.mu[static_cast<std::size_t>(k)] = km.centers.row(k).transpose();
    }
  }
  return state;
}

void step_classify(const Dataset& data, MixtureState& state, Rng& rng) {
  const auto K = static_cast<std::size_t>(state.K());
  std::vector<GaussianLogDensity> dens;
  dens.reserve(K);
  std::vector<double> log_eta(K);
  for (std::size_t k = 0; k < K; ++k) {
    dens.emplace_back(state.mu[k], state.Sigma[k]);
    log_eta[k] = std::log(state.eta[static_cast<Eigen::Index>(k)]);
  }
  std::vector<double> lp(K);
  state.S.resize(static_cast<std::size_t>(data.n()));
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const VectorXd yi = data.y.row(i).transpose();
    double max = kNegInf;
    for (std::size_t k = 0; k < K; ++k) {
      lp[k] = log_eta[k] + dens[k](yi);
      if (std::isnan(lp[k])) lp[k] = kNegInf;
      max = std::max(max, lp[k]);
    }
    if (!std::isfinite(max)) {
      throw NumericalError("classification: all component densities underflow for observation " +
                           std::to_string(i + 1));
    }
    state.S[static_cast<std::size_t>(i)] = static_cast<int>(sample_categorical_log(lp, rng));
  }
  state.recount();
}

void step_weights(MixtureState& state, double gamma_K, Rng& rng) {
  std::vector<double> e(static_cast<std::size_t>(state.K()));
  for (std::size_t k = 0; k < e.size(); ++k) {
    e[k] = gamma_K + state.counts[k];
  }
  state.eta = sample_dirichlet(e, rng);
}

void step_component_params(const Dataset& data, MixtureState& state, const PriorConfig& prior, Rng& rng) {
  const Eigen::Index r = data.dim();
  const VectorXd prior_shift = prior.B0_inv * prior.b0;
  const auto members = members_by_component(state);
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto& idx = members[k];
    const auto n_k = static_cast<double>(idx.size());
    VectorXd sum_y = VectorXd::Zero(r);
    for (Eigen::Index i : idx) sum_y += data.y.row(i).transpose();

    const MatrixXd Sigma_inv = spd_inverse(state.Sigma[k], "component covariance");
    const MatrixXd B_k = spd_inverse(prior.B0_inv + n_k * Sigma_inv, "posterior mean covariance B_k");
    const VectorXd b_k = B_k * (prior_shift + Sigma_inv * sum_y);
    state.mu[k] = sample_mvnormal(b_k, B_k, rng);

    MatrixXd C_k = state.C0;
    for (Eigen::Index i : idx) {
      const VectorXd d = data.y.row(i).transpose() - state.mu[k];
      C_k.noalias() += 0.5 * d * d.transpose();
    }
    state.Sigma[k] = sample_inv_wishart({prior.c0 + 0.5 * n_k, C_k}, rng);
  }
}

void step_hyper(MixtureState& state, const PriorConfig& prior, Rng& rng, bool filled_only) {
  MatrixXd V = prior.G0;
  int used = 0;
  for (int k = 0; k < state.K(); ++k) {
    if (filled_only && state.counts[static_cast<std::size_t>(k)] == 0) continue;
    V += spd_inverse(state.Sigma[static_cast<std::size_t>(k)], "component covariance");
    ++used;
  }
  if (used == 0) {
    throw InvalidParameter("hyperparameter step: no components to condition on");
  }
  state.C0 = sample_wishart({prior.g0 + used * prior.c0, V}, rng);
}

std::vector<double> log_posterior_K(const std::vector<int>& filled_counts, const PriorConfig& prior) {
  const auto* random = std::get_if<RandomK>(&prior.k_prior);
  if (random == nullptr) {
    throw ConfigError("sampling K requires a random-K prior");
  }
  const int k_plus = static_cast<int>(filled_counts.size());
  if (k_plus < 1) {
    throw InvalidParameter("sampling K: no filled components");
  }
  if (random->k_max < k_plus) {
    throw ConfigError("sampling K: k_max " + std::to_string(random->k_max) + " is below K_plus " +
                      std::to_string(k_plus));
  }
  const double N = std::accumulate(filled_counts.begin(), filled_counts.end(), 0.0);
  std::vector<double> lp;
  lp.reserve(static_cast<std::size_t>(random->k_max - k_plus + 1));
  for (int K = k_plus; K <= random->k_max; ++K) {
    const double g = gamma_for(prior.gamma_spec, K);
    double v = std::lgamma(K + 1.0) - std::lgamma(K - k_plus + 1.0) + std::lgamma(K * g) -
               std::lgamma(K * g + N);
    // Gamma(g) here, not Gamma(1 + g): the latter drops a g^K_plus factor,
    // harmless for fixed gamma but it tilts K upward when gamma depends on K
    for (int n : filled_counts) {
      v += std::lgamma(n + g) - std::lgamma(g);
    }
    lp.push_back(v + prior.log_prior_K(K));
  }
  return lp;
}

int step_sample_K(const MixtureState& state, const PriorConfig& prior, Rng& rng) {
  std::vector<int> filled;
  for (int n : state.counts) {
    if (n > 0) filled.push_back(n);
  }
  const auto lp = log_posterior_K(filled, prior);
  return static_cast<int>(filled.size()) + static_cast<int>(sample_categorical_log(lp, rng));
}

void compact_filled(MixtureState& state) {
  std::vector<int> remap(static_cast<std::size_t>(state.K()), -1);
  int next = 0;
  for (int k = 0; k < state.K(); ++k) {
    if (state.counts[static_cast<std::size_t>(k)] > 0) remap[static_cast<std::size_t>(k)] = next++;
  }
  VectorXd eta(next);
  std::vector<VectorXd> mu(static_cast<std::size_t>(next));
  std::vector<MatrixXd> Sigma(static_cast<std::size_t>(next));
  for (int k = 0; k < state.K(); ++k) {
    const int to = remap[static_cast<std::size_t>(k)];
    if (to < 0) continue;
    eta[to] = state.eta[k];
    mu[static_cast<std::size_t>(to)] = std::move(state.mu[static_cast<std::size_t>(k)]);
    Sigma[static_cast<std::size_t>(to)] = std::move(state.Sigma[static_cast<std::size_t>(k)]);
  }
  for (int& s : state.S) s = remap[static_cast<std::size_t>(s)];
  state.eta = std::move(eta);
  state.mu = std::move(mu);
  state.Sigma = std::move(Sigma);
  state.recount();
}

void step_add_empty(MixtureState& state, int K, const PriorConfig& prior, Rng& rng) {
  const int current = state.K();
  if (K < current) {
    throw InvalidParameter("add empty: target K below current number of components");
  }
  if (K == current) return;
  state.eta.conservativeResize(K);
  for (int k = current; k < K; ++k) {
    state.eta[k] = 0.0;
    state.mu.push_back(sample_mvnormal(prior.b0, prior.B0, rng));
    state.Sigma.push_back(sample_inv_wishart({prior.c0, state.C0}, rng));
  }
  state.recount();
}

void permute_labels(MixtureState& state, const std::vector<int>& perm) {
  const int K = state.K();
  if (static_cast<int>(perm.size()) != K) {
    throw InvalidParameter("permutation: length does not match K");
  }
  VectorXd eta(K);
  std::vector<VectorXd> mu(static_cast<std::size_t>(K));
  std::vector<MatrixXd> Sigma(static_cast<std::size_t>(K));
  std::vector<int> seen(static_cast<std::size_t>(K), 0);
  for (int k = 0; k < K; ++k) {
    const int to = perm[static_cast<std::size_t>(k)];
    if (to < 0 || to >= K || seen[static_cast<std::size_t>(to)]++) {
      throw InvalidParameter("permutation: not a bijection");
    }
    eta[to] = state.eta[k];
    mu[static_cast<std::size_t>(to)] = state.mu[static_cast<std::size_t>(k)];
    Sigma[static_cast<std::size_t>(to)] = state.Sigma[static_cast<std::size_t>(k)];
  }
  for (int& s : state.S) s = perm[static_cast<std::size_t>(s)];
  state.eta = std::move(eta);
  state.mu = std::move(mu);
  state.Sigma = std::move(Sigma);
  state.recount();
}

std::vector<int> permute_labels_random(MixtureState& state, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(state.K()));
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  permute_labels(state, perm);
  return perm;
}

ChainOutput run_chain(const Dataset& data, const PriorConfig& prior, const ChainConfig& config,
                      SamplerMode mode) {
  data.validate();
  config.validate();
  if (prior.dim() != data.dim()) {
    throw ConfigError("prior dimension does not match data");
  }
  const bool telescoping = mode == SamplerMode::Telescoping;
  if (!telescoping && std::holds_alternative<RandomK>(prior.k_prior)) {
    throw ConfigError(std::string(to_string(mode)) + " sampler requires a fixed K");
  }
  const auto start = std::chrono::steady_clock::now();

  ChainOutput out;
  out.config = config;
  out.prior = prior;
  out.mode = mode;
  out.seed = config.seed;
  out.n_obs = data.n();
  out.dim = data.dim();
  out.records.reserve(static_cast<std::size_t>((config.n_iter - config.burn_in) / config.thinning));
  out.trace.reserve(static_cast<std::size_t>(config.n_iter));

  Rng rng(config.seed);
  MixtureState state = init_from_kmeans(data, initial_K(prior, mode), prior, rng);

  for (long iter = 1; iter <= config.n_iter; ++iter) {
    double log_lik = 0.0;
    try {
      step_classify(data, state, rng);
      if (telescoping) {
        compact_filled(state);
        step_component_params(data, state, prior, rng);
        // C0 given the filled components only, so it must be drawn before
        // the empty components are generated from it.
        step_hyper(state, prior, rng, true);
        const int K = step_sample_K(state, prior, rng);
        step_add_empty(state, K, prior, rng);
        step_weights(state, gamma_for(prior.gamma_spec, K), rng);
      } else {
        step_component_params(data, state, prior, rng);
        step_hyper(state, prior, rng, false);
        step_weights(state, gamma_for(prior.gamma_spec, state.K()), rng);
      }
      if (config.permutation_step) {
        permute_labels_random(state, rng);
      }
      log_lik = mixture_log_likelihood(data, state);
    } catch (const Error& e) {
      throw SamplerFailure(iter, e.what());
    }

    out.trace.push_back(make_trace(iter, state, log_lik, telescoping));
    if (iter > config.burn_in && (iter - config.burn_in) % config.thinning == 0) {
      out.records.push_back(make_record(iter, state, log_lik, config.store_assignments));
    }
  }
  out.wall_time = std::chrono::steady_clock::now() - start;
  return out;
}

}  // namespace bmix
