#pragma once

#include <chrono>
#include <optional>
#include <vector>

#include "bmix/model.hpp"

namespace bmix {

enum class SamplerMode {
  FixedK,       // Gibbs sampler with known K
  Sparse,       // same sweep, overfitting K with a small fixed gamma
  Telescoping,  // random K with a prior on K
};

const char* to_string(SamplerMode mode);

// One stored post-burn-in sweep. Component k of the record is slot k of the
// state at the end of the sweep.
struct SweepRecord {
  long iter = 0;
  int K = 0;
  int K_plus = 0;
  VectorXd eta;
  std::vector<VectorXd> mu;
  std::vector<MatrixXd> Sigma;
  std::vector<int> counts;
  std::optional<std::vector<int>> S;
  double log_lik = 0.0;
};

// Per-iteration diagnostics, kept for every sweep including burn-in.
struct TracePoint {
  long iter = 0;
  int K = 0;
  int K_plus = 0;
  double log_lik = 0.0;
  std::vector<int> component;    // slot index of each traced component
  std::vector<double> mu_first;  // first coordinate of its mean
  std::vector<int> counts;
};

struct ChainOutput {
  std::vector<SweepRecord> records;
  std::vector<TracePoint> trace;
  ChainConfig config;
  PriorConfig prior;
  SamplerMode mode = SamplerMode::FixedK;
  std::chrono::duration<double> wall_time{0.0};
  std::uint64_t seed = 0;
  Eigen::Index n_obs = 0;
  Eigen::Index dim = 0;
};

// k-means on the raw data; mu = cluster means, Sigma_k = phi * S,
// eta = 1/K, C0 = C0_init.
MixtureState init_from_kmeans(const Dataset& data, int K, const PriorConfig& prior, Rng& rng);

// Draws every S_i with P(S_i = k) proportional to eta_k f_N(y_i | mu_k, Sigma_k).
void step_classify(const Dataset& data, MixtureState& state, Rng& rng);

// eta ~ Dirichlet(gamma_K + N_1, ..., gamma_K + N_K).
void step_weights(MixtureState& state, double gamma_K, Rng& rng);

// Conditionally conjugate updates of (mu_k, Sigma_k) for every component;
// empty components reduce to draws from the prior given C0.
void step_component_params(const Dataset& data, MixtureState& state, const PriorConfig& prior, Rng& rng);

// C0 ~ W(g0 + K' c0, G0 + sum Sigma_k^-1). With filled_only the sum and K'
// range over filled components.
void step_hyper(MixtureState& state, const PriorConfig& prior, Rng& rng, bool filled_only);

// Unnormalized log p(K | N_1..N_K+, gamma_K) over K = K_plus..k_max.
std::vector<double> log_posterior_K(const std::vector<int>& filled_counts, const PriorConfig& prior);

// Samples K given the current partition; requires a RandomK prior.
int step_sample_K(const MixtureState& state, const PriorConfig& prior, Rng& rng);

// Moves filled components to the front (keeping their order), drops the
// empty ones and relabels S.
void compact_filled(MixtureState& state);

// Grows a compacted state to K components; the new slots get prior draws
// given the current C0 and a provisional zero weight until the next
// weight step.
void step_add_empty(MixtureState& state, int K, const PriorConfig& prior, Rng& rng);

// Applies perm jointly to eta, mu, Sigma, counts and S: old slot k becomes
// slot perm[k].
void permute_labels(MixtureState& state, const std::vector<int>& perm);
std::vector<int> permute_labels_random(MixtureState& state, Rng& rng);

// Runs one chain seeded from config.seed.
ChainOutput run_chain(const Dataset& data, const PriorConfig& prior, const ChainConfig& config,
                      SamplerMode mode);

}  // namespace bmix
