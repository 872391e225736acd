#include "bmix/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "bmix/errors.hpp"

namespace bmix {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

// log of a Gamma(shape, 1) draw. For shape < 1 uses
// G(shape) = G(shape + 1) * U^(1/shape) so tiny shapes do not underflow.
double sample_log_gamma(double shape, Rng& rng) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> gamma(shape, 1.0);
    return std::log(gamma(rng));
  }
  std::gamma_distribution<double> gamma(shape + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = 1.0 - unif(rng);  // (0, 1]
  return std::log(gamma(rng)) + std::log(u) / shape;
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

void WishartParams::validate() const {
  if (V.rows() == 0 || V.rows() != V.cols()) {
    throw InvalidParameter("Wishart: V must be a non-empty square matrix");
  }
  if ((V - V.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, V.cwiseAbs().maxCoeff())) {
    throw InvalidParameter("Wishart: V is not symmetric");
  }
  const double r = static_cast<double>(V.rows());
  if (!(alpha > (r - 1.0) / 2.0) || !std::isfinite(alpha)) {
    throw InvalidParameter("Wishart: alpha = " + std::to_string(alpha) + " must exceed (r-1)/2");
  }
  spd_factor(V, "Wishart V");
}

Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& A, const char* what) {
  if (A.rows() != A.cols()) {
    throw FactorizationError(std::string(what) + ": matrix is not square");
  }
  const MatrixXd sym = 0.5 * (A + A.transpose());
  Eigen::LLT<MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success || !sym.allFinite()) {
    throw FactorizationError(std::string(what) + ": matrix is not positive definite");
  }
  return llt;
}

MatrixXd spd_inverse(const MatrixXd& A, const char* what) {
  const auto llt = spd_factor(A, what);
  MatrixXd inv = llt.solve(MatrixXd::Identity(A.rows(), A.cols()));
  return 0.5 * (inv + inv.transpose());
}

VectorXd sample_dirichlet(std::span<const double> e, Rng& rng) {
  if (e.empty()) {
    throw InvalidParameter("Dirichlet: empty parameter vector");
  }
  for (double v : e) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidParameter("Dirichlet: parameters must be positive and finite");
    }
  }
  const auto K = static_cast<Eigen::Index>(e.size());
  VectorXd log_g(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    log_g[k] = sample_log_gamma(e[static_cast<std::size_t>(k)], rng);
  }
  const double max = log_g.maxCoeff();
  VectorXd w = (log_g.array() - max).exp();
  w /= w.sum();
  return w;
}

std::size_t sample_categorical(std::span<const double> p, Rng& rng) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidParameter("categorical: weights must be finite and nonnegative");
    }
    total += v;
  }
  if (!(total > 0.0)) {
    throw InvalidParameter("categorical: all weights are zero");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) {
      last_positive = k;
      acc += p[k];
      if (u < acc) {
        return k;
      }
    }
  }
  return last_positive;
}

std::size_t sample_categorical_log(std::span<const double> log_p, Rng& rng) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : log_p) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw InvalidParameter("categorical: log-weights must not be NaN or +inf");
    }
    max = std::max(max, v);
  }
  if (!std::isfinite(max)) {
    throw InvalidParameter("categorical: all log-weights are -inf");
  }
  std::vector<double> w(log_p.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(log_p[k] - max);
  }
  return sample_categorical(w, rng);
}

VectorXd sample_mvnormal(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
  if (cov.rows() != mean.size()) {
    throw InvalidParameter("mvnormal: dimension mismatch");
  }
  const auto llt = spd_factor(cov, "mvnormal covariance");
  std::normal_distribution<double> norm(0.0, 1.0);
  VectorXd z(mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    z[j] = norm(rng);
  }
  return mean + llt.matrixL() * z;
}

MatrixXd sample_wishart(const WishartParams& params, Rng& rng) {
  params.validate();
  const Eigen::Index r = params.dim();
  const double dof = 2.0 * params.alpha;

  // Scale of the standard Wishart is (2V)^-1; any square root L with
  // L L^T = scale works with the Bartlett factor.
  const MatrixXd scale = spd_inverse(2.0 * params.V, "Wishart scale");
  const MatrixXd L = spd_factor(scale, "Wishart scale").matrixL();

  std::normal_distribution<double> norm(0.0, 1.0);
  MatrixXd A = MatrixXd::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
    A(i, i) = std::sqrt(chi2(rng));
    for (Eigen::Index j = 0; j < i; ++j) {
      A(i, j) = norm(rng);
    }
  }
  const MatrixXd LA = L * A;
  MatrixXd W = LA * LA.transpose();
  return 0.5 * (W + W.transpose());
}

MatrixXd sample_inv_wishart(const WishartParams& params, Rng& rng) {
  return spd_inverse(sample_wishart(params, rng), "inverse-Wishart draw");
}

double log_mvnormal_density(const VectorXd& y, const VectorXd& mu, const MatrixXd& Sigma) {
  if (y.size() != mu.size() || Sigma.rows() != y.size()) {
    throw InvalidParameter("mvnormal density: dimension mismatch");
  }
  return GaussianLogDensity(mu, Sigma)(y);
}

double log_multivariate_gamma(double alpha, int r) {
  if (r < 1) {
    throw DomainError("multivariate gamma: dimension must be positive");
  }
  double out = 0.25 * r * (r - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= r; ++j) {
    const double arg = (2.0 * alpha + 1.0 - j) / 2.0;
    if (!(arg > 0.0)) {
      throw DomainError("multivariate gamma: non-positive gamma argument");
    }
    out += std::lgamma(arg);
  }
  return out;
}

double bnb_log_pmf(long k_minus_1, double a_l, double a_pi, double b_pi) {
  if (k_minus_1 < 0 || !(a_l > 0.0) || !(a_pi > 0.0) || !(b_pi > 0.0)) {
    throw DomainError("BNB pmf: requires x >= 0 and positive parameters");
  }
  const double x = static_cast<double>(k_minus_1);
  return std::lgamma(a_l + x) - std::lgamma(x + 1.0) - std::lgamma(a_l) +
         log_beta(a_pi + a_l, b_pi + x) - log_beta(a_pi, b_pi);
}

GaussianLogDensity::GaussianLogDensity(const VectorXd& mu, const MatrixXd& Sigma) : mu_(mu) {
  if (Sigma.rows() != mu.size()) {
    throw InvalidParameter("mvnormal density: dimension mismatch");
  }
  lower_ = spd_factor(Sigma, "component covariance").matrixL();
  const double log_det_half = lower_.diagonal().array().log().sum();
  log_norm_ = -0.5 * static_cast<double>(mu.size()) * kLogTwoPi - log_det_half;
}

double GaussianLogDensity::operator()(const Eigen::Ref<const VectorXd>& y) const {
  const VectorXd z = lower_.triangularView<Eigen::Lower>().solve(y - mu_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

}  // namespace bmix
