#pragma once

#include <cstddef>
#include <random>
#include <span>

#include <Eigen/Dense>

namespace bmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// All samplers take the generator by reference; one generator per thread.
using Rng = std::mt19937_64;

// Wishart parameters in the shape/rate convention
//
//   f(Y | alpha, V) = |V|^alpha / Gamma_r(alpha) |Y|^(alpha - (r+1)/2) exp(-tr(V Y)),
//
// which is a standard Wishart with 2*alpha degrees of freedom and scale
// (2V)^-1. E[Y] = alpha V^-1. The inverse-Wishart W^-1(alpha, V) is the law
// of Y^-1 and has mean V / (alpha - (r+1)/2).
struct WishartParams {
  double alpha = 0.0;
  MatrixXd V;

  Eigen::Index dim() const { return V.rows(); }

  // Throws InvalidParameter unless V is square, symmetric to 1e-10, SPD and
  // alpha > (r-1)/2.
  void validate() const;
};

// Symmetrizes (A + A^T)/2 and factors it. Throws FactorizationError naming
// `what` when the matrix is not SPD; never adds jitter.
Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& A, const char* what);

// Inverse of an SPD matrix via its Cholesky factor; result is symmetric.
MatrixXd spd_inverse(const MatrixXd& A, const char* what);

VectorXd sample_dirichlet(std::span<const double> e, Rng& rng);

// Returns a 0-based index drawn with probability p_k / sum(p).
std::size_t sample_categorical(std::span<const double> p, Rng& rng);

// Same as sample_categorical but for log-weights; entries may be -inf.
std::size_t sample_categorical_log(std::span<const double> log_p, Rng& rng);

VectorXd sample_mvnormal(const VectorXd& mean, const MatrixXd& cov, Rng& rng);

// Bartlett decomposition, so 2*alpha need not be an integer.
MatrixXd sample_wishart(const WishartParams& params, Rng& rng);
MatrixXd sample_inv_wishart(const WishartParams& params, Rng& rng);

double log_mvnormal_density(const VectorXd& y, const VectorXd& mu, const MatrixXd& Sigma);

// log Gamma_r(alpha) = r(r-1)/4 log(pi) + sum_j log Gamma((2 alpha + 1 - j) / 2).
double log_multivariate_gamma(double alpha, int r);

// Beta-negative-binomial pmf on x = K - 1:
//   P(x) = Gamma(a_l + x) / (x! Gamma(a_l)) * B(a_pi + a_l, b_pi + x) / B(a_pi, b_pi)
double bnb_log_pmf(long k_minus_1, double a_l, double a_pi, double b_pi);

// Log-density of N(mu, Sigma) with the factorization done once, for repeated
// evaluation across observations.
class GaussianLogDensity {
 public:
  GaussianLogDensity(const VectorXd& mu, const MatrixXd& Sigma);

  double operator()(const Eigen::Ref<const VectorXd>& y) const;

 private:
  VectorXd mu_;
  MatrixXd lower_;
  double log_norm_;
};

}  // namespace bmix
