#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bmix/distributions.hpp"

namespace bmix {

// Observations y (N x r) plus optional reference classes used only for
// evaluation. Class labels are 0-based indices into class_names.
struct Dataset {
  MatrixXd y;
  std::vector<std::string> feature_names;
  std::optional<std::vector<int>> true_labels;
  std::vector<std::string> class_names;

  Eigen::Index n() const { return y.rows(); }
  Eigen::Index dim() const { return y.cols(); }

  // Throws InvalidData when N < 1, r < 1, an entry is non-finite or the
  // label vector has the wrong length.
  void validate() const;
};

// Symmetric Dirichlet parameter gamma_K.
struct FixedGamma {
  double gamma = 1.0;
};
// gamma_K = alpha / K.
struct DynamicGamma {
  double alpha = 0.5;
};
using GammaSpec = std::variant<FixedGamma, DynamicGamma>;

double gamma_for(const GammaSpec& spec, int K);

// Beta-negative-binomial prior on K - 1.
struct BnbParams {
  double a_l = 1.0;
  double a_pi = 4.0;
  double b_pi = 3.0;
};

struct FixedK {
  int K = 3;
};
// Overfitting mixture; the Dirichlet parameter lives in the GammaSpec.
struct SparseK {
  int K = 10;
};
struct RandomK {
  BnbParams bnb;
  int k_max = 100;   // support of K is truncated to 1..k_max
  int k_init = 10;  // starting K (and K_plus) of the telescoping sampler
};
using KPrior = std::variant<FixedK, SparseK, RandomK>;

struct PriorConfig {
  GammaSpec gamma_spec = FixedGamma{1.0};
  VectorXd b0;
  MatrixXd B0;
  double c = 2.5;
  double phi = 0.75;
  double c0 = 0.0;
  double g0 = 0.0;
  MatrixXd C0_init;
  MatrixXd G0;
  // Diagonal matrix holding the empirical variances of y.
  MatrixXd S;
  KPrior k_prior = FixedK{3};

  Eigen::Index dim() const { return b0.size(); }

  // Cached inverse of B0.
  MatrixXd B0_inv;

  // log p(K) under the k_prior; only meaningful for RandomK.
  double log_prior_K(int K) const;
};

// b0 = column medians, B0 = diag(range^2), S = diag(sample variances),
// c0 = c + (r+1)/2, g0 = 1 + (r-1)/2, C0_init = c phi S, G0 = g0 C0_init^-1.
PriorConfig build_default_prior(const Dataset& data, double c = 2.5, double phi = 0.75,
                                GammaSpec gamma_spec = FixedGamma{1.0}, KPrior k_prior = FixedK{3});

// Fills the derived fields of a hand-assembled prior (B0_inv) and checks
// shapes and positivity. build_default_prior calls this.
void finalize_prior(PriorConfig& prior);

// One MCMC state. Labels in S are 0-based component indices.
struct MixtureState {
  VectorXd eta;
  std::vector<VectorXd> mu;
  std::vector<MatrixXd> Sigma;
  MatrixXd C0;
  std::vector<int> S;
  std::vector<int> counts;
  int k_plus = 0;

  int K() const { return static_cast<int>(eta.size()); }

  // Recomputes counts and k_plus from S.
  void recount();
};

struct ChainConfig {
  long n_iter = 30000;
  long burn_in = 5000;
  std::uint64_t seed = 1;
  bool store_assignments = false;
  bool permutation_step = false;
  long thinning = 1;

  void validate() const;
};

double mixture_log_likelihood(const Dataset& data, const MixtureState& state);
double complete_data_log_likelihood(const Dataset& data, const MixtureState& state);

// Draws K (from the BNB prior when random), the weights, C0, the component
// parameters, the allocations and finally the observations.
std::pair<Dataset, MixtureState> generate_synthetic(const PriorConfig& prior, int N, Rng& rng);

}  // namespace bmix
