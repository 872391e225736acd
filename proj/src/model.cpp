#include "bmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bmix/errors.hpp"

namespace bmix {

namespace {

double column_median(const VectorXd& col) {
  std::vector<double> v(col.data(), col.data() + col.size());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_state_shape(const Dataset& data, const MixtureState& state) {
  const auto K = static_cast<std::size_t>(state.K());
  if (K == 0 || state.mu.size() != K || state.Sigma.size() != K) {
    throw InvalidParameter("mixture state: inconsistent number of components");
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (state.mu[k].size() != data.dim() || state.Sigma[k].rows() != data.dim()) {
      throw InvalidParameter("mixture state: component dimension does not match data");
    }
  }
}

}  // namespace

void Dataset::validate() const {
  if (y.rows() < 1 || y.cols() < 1) {
    throw InvalidData("dataset: need at least one observation and one feature");
  }
  if (!y.allFinite()) {
    throw InvalidData("dataset: non-finite entries");
  }
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != y.cols()) {
    throw InvalidData("dataset: feature name count does not match columns");
  }
  if (true_labels && static_cast<Eigen::Index>(true_labels->size()) != y.rows()) {
    throw InvalidData("dataset: true label count does not match rows");
  }
}

double gamma_for(const GammaSpec& spec, int K) {
  if (const auto* fixed = std::get_if<FixedGamma>(&spec)) {
    return fixed->gamma;
  }
  return std::get<DynamicGamma>(spec).alpha / static_cast<double>(K);
}

double PriorConfig::log_prior_K(int K) const {
  const auto* random = std::get_if<RandomK>(&k_prior);
  if (random == nullptr) {
    throw ConfigError("log_prior_K requires a random-K prior");
  }
  if (K < 1 || K > random->k_max) {
    return -std::numeric_limits<double>::infinity();
  }
  return bnb_log_pmf(K - 1, random->bnb.a_l, random->bnb.a_pi, random->bnb.b_pi);
}

void finalize_prior(PriorConfig& prior) {
  const Eigen::Index r = prior.b0.size();
  if (r < 1 || prior.B0.rows() != r || prior.C0_init.rows() != r || prior.G0.rows() != r) {
    throw ConfigError("prior: hyperparameter dimensions disagree");
  }
  if (!(prior.c0 > 0.0) || !(prior.g0 > 0.0)) {
    throw ConfigError("prior: c0 and g0 must be positive");
  }
  std::visit(
      [](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, FixedGamma>) {
          if (!(spec.gamma > 0.0)) throw ConfigError("prior: gamma must be positive");
        } else {
          if (!(spec.alpha > 0.0)) throw ConfigError("prior: alpha must be positive");
        }
      },
      prior.gamma_spec);
  std::visit(
      [](const auto& kp) {
        using T = std::decay_t<decltype(kp)>;
        if constexpr (std::is_same_v<T, RandomK>) {
          if (kp.k_max < 1 || kp.k_init < 1 || kp.k_init > kp.k_max) {
            throw ConfigError("prior: need 1 <= k_init <= k_max");
          }
          if (!(kp.bnb.a_l > 0.0) || !(kp.bnb.a_pi > 0.0) || !(kp.bnb.b_pi > 0.0)) {
            throw ConfigError("prior: BNB parameters must be positive");
          }
        } else {
          if (kp.K < 1) throw ConfigError("prior: K must be positive");
        }
      },
      prior.k_prior);
  prior.B0_inv = spd_inverse(prior.B0, "prior B0");
  spd_factor(prior.C0_init, "prior C0");
  spd_factor(prior.G0, "prior G0");
}

PriorConfig build_default_prior(const Dataset& data, double c, double phi, GammaSpec gamma_spec,
                                KPrior k_prior) {
  data.validate();
  if (!(c > 0.0) || !(phi > 0.0)) {
    throw ConfigError("prior: c and phi must be positive");
  }
  const Eigen::Index N = data.n();
  const Eigen::Index r = data.dim();
  if (N < 2) {
    throw DegeneratePrior("prior: need at least two observations");
  }

  PriorConfig prior;
  prior.gamma_spec = gamma_spec;
  prior.k_prior = k_prior;
  prior.c = c;
  prior.phi = phi;
  prior.b0.resize(r);
  prior.B0 = MatrixXd::Zero(r, r);
  prior.S = MatrixXd::Zero(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const VectorXd col = data.y.col(j);
    const double range = col.maxCoeff() - col.minCoeff();
    if (!(range > 0.0)) {
      throw DegeneratePrior("prior: column " + std::to_string(j + 1) + " is constant");
    }
    prior.b0[j] = column_median(col);
    prior.B0(j, j) = range * range;
    const double mean = col.mean();
    prior.S(j, j) = (col.array() - mean).square().sum() / static_cast<double>(N - 1);
  }
  const double rd = static_cast<double>(r);
  prior.c0 = c + (rd + 1.0) / 2.0;
  prior.g0 = 1.0 + (rd - 1.0) / 2.0;
  prior.C0_init = c * phi * prior.S;
  prior.G0 = prior.g0 * spd_inverse(prior.C0_init, "prior C0");
  finalize_prior(prior);
  return prior;
}

void MixtureState::recount() {
  counts.assign(static_cast<std::size_t>(K()), 0);
  for (int s : S) {
    if (s < 0 || s >= K()) {
      throw InvalidParameter("mixture state: allocation out of range");
    }
    ++counts[static_cast<std::size_t>(s)];
  }
  k_plus = static_cast<int>(std::count_if(counts.begin(), counts.end(), [](int n) { return n > 0; }));
}

void ChainConfig::validate() const {
  if (n_iter < 1 || burn_in < 0 || burn_in >= n_iter) {
    throw ConfigError("chain: need 0 <= burn_in < n_iter");
  }
  if (thinning < 1) {
    throw ConfigError("chain: thinning must be >= 1");
  }
}

double mixture_log_likelihood(const Dataset& data, const MixtureState& state) {
  check_state_shape(data, state);
  const auto K = static_cast<std::size_t>(state.K());
  std::vector<GaussianLogDensity> dens;
  dens.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    dens.emplace_back(state.mu[k], state.Sigma[k]);
  }
  std::vector<double> terms(K);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const VectorXd yi = data.y.row(i).transpose();
    for (std::size_t k = 0; k < K; ++k) {
      terms[k] = std::log(state.eta[static_cast<Eigen::Index>(k)]) + dens[k](yi);
    }
    // Sorting fixes the summation order, making the value exactly invariant
    // under relabeling.
    std::sort(terms.begin(), terms.end());
    const double max = terms.back();
    if (!std::isfinite(max)) {
      return -std::numeric_limits<double>::infinity();
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max);
    total += max + std::log(acc);
  }
  return total;
}

double complete_data_log_likelihood(const Dataset& data, const MixtureState& state) {
  check_state_shape(data, state);
  if (static_cast<Eigen::Index>(state.S.size()) != data.n()) {
    throw InvalidParameter("mixture state: allocation length does not match data");
  }
  std::vector<std::optional<GaussianLogDensity>> dens(static_cast<std::size_t>(state.K()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const int s = state.S[static_cast<std::size_t>(i)];
    if (s < 0 || s >= state.K()) {
      throw InvalidParameter("mixture state: allocation out of range");
    }
    auto& d = dens[static_cast<std::size_t>(s)];
    if (!d) d.emplace(state.mu[static_cast<std::size_t>(s)], state.Sigma[static_cast<std::size_t>(s)]);
    total += std::log(state.eta[s]) + (*d)(data.y.row(i).transpose());
  }
  return total;
}

std::pair<Dataset, MixtureState> generate_synthetic(const PriorConfig& prior, int N, Rng& rng) {
  if (N < 1) {
    throw InvalidParameter("generate_synthetic: N must be positive");
  }
  int K = 0;
  if (const auto* random = std::get_if<RandomK>(&prior.k_prior)) {
    std::vector<double> pk(static_cast<std::size_t>(random->k_max));
    for (int k = 1; k <= random->k_max; ++k) {
      pk[static_cast<std::size_t>(k - 1)] = prior.log_prior_K(k);
    }
    K = static_cast<int>(sample_categorical_log(pk, rng)) + 1;
  } else if (const auto* fixed = std::get_if<FixedK>(&prior.k_prior)) {
    K = fixed->K;
  } else {
    K = std::get<SparseK>(prior.k_prior).K;
  }

  const Eigen::Index r = prior.dim();
  MixtureState state;
  const std::vector<double> e(static_cast<std::size_t>(K), gamma_for(prior.gamma_spec, K));
  state.eta = sample_dirichlet(e, rng);
  state.C0 = sample_wishart({prior.g0, prior.G0}, rng);
  for (int k = 0; k < K; ++k) {
    state.Sigma.push_back(sample_inv_wishart({prior.c0, state.C0}, rng));
    state.mu.push_back(sample_mvnormal(prior.b0, prior.B0, rng));
  }

  Dataset data;
  data.y.resize(N, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    data.feature_names.push_back("y" + std::to_string(j + 1));
  }
  state.S.resize(static_cast<std::size_t>(N));
  const std::vector<double> w(state.eta.data(), state.eta.data() + K);
  for (int i = 0; i < N; ++i) {
    const int s = static_cast<int>(sample_categorical(w, rng));
    state.S[static_cast<std::size_t>(i)] = s;
    data.y.row(i) = sample_mvnormal(state.mu[static_cast<std::size_t>(s)],
                                    state.Sigma[static_cast<std::size_t>(s)], rng)
                        .transpose();
  }
  state.recount();
  data.true_labels = state.S;
  return {std::move(data), std::move(state)};
}

}  // namespace bmix
