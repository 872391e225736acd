#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "bmix/errors.hpp"
#include "bmix/model.hpp"

using namespace bmix;

namespace {

Dataset make_data(const MatrixXd& y) {
  Dataset d;
  d.y = y;
  for (Eigen::Index j = 0; j < y.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  return d;
}

double normal_pdf(double x, double m, double v) {
  return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

MixtureState scalar_state(std::vector<double> eta, std::vector<double> mu, std::vector<double> var) {
  MixtureState s;
  s.eta = Eigen::Map<VectorXd>(eta.data(), static_cast<Eigen::Index>(eta.size()));
  for (std::size_t k = 0; k < mu.size(); ++k) {
    s.mu.push_back(VectorXd::Constant(1, mu[k]));
    s.Sigma.push_back(MatrixXd::Constant(1, 1, var[k]));
  }
  return s;
}

}  // namespace

TEST_CASE("default prior construction") {
  MatrixXd y(4, 3);
  y << 1, 10, -2,
       3, 20, 0,
       2, 15, 5,
       8, 11, 1;
  const auto p = build_default_prior(make_data(y));
  CHECK(p.c0 == doctest::Approx(4.5));
  CHECK(p.g0 == doctest::Approx(2.0));
  // even length: midpoint of the central order statistics
  CHECK(p.b0[0] == doctest::Approx(2.5));
  CHECK(p.b0[1] == doctest::Approx(13.0));
  CHECK(p.b0[2] == doctest::Approx(0.5));
  CHECK(p.B0(0, 0) == doctest::Approx(49.0));
  CHECK(p.B0(1, 1) == doctest::Approx(100.0));
  CHECK(p.B0(0, 1) == 0.0);
  for (int j = 0; j < 3; ++j) {
    const double m = y.col(j).mean();
    const double v = (y.col(j).array() - m).square().sum() / 3.0;
    CHECK(p.S(j, j) == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK((p.C0_init - 2.5 * 0.75 * p.S).norm() < 1e-12);
  CHECK((p.G0 - p.g0 * p.C0_init.inverse()).norm() < 1e-12);

  SUBCASE("odd length median") {
    const auto q = build_default_prior(make_data(y.topRows(3)));
    CHECK(q.b0[0] == doctest::Approx(2.0));
  }
  SUBCASE("scale equivariance") {
    MatrixXd z = y;
    z.col(1) *= 10.0;
    const auto q = build_default_prior(make_data(z));
    CHECK(q.b0[1] == doctest::Approx(10.0 * p.b0[1]));
    CHECK(q.B0(1, 1) == doctest::Approx(100.0 * p.B0(1, 1)));
    CHECK(q.S(1, 1) == doctest::Approx(100.0 * p.S(1, 1)));
    CHECK(q.b0[0] == p.b0[0]);
    CHECK(q.S(2, 2) == p.S(2, 2));
  }
  SUBCASE("degenerate input") {
    MatrixXd c = y;
    c.col(2).setConstant(4.0);
    CHECK_THROWS_AS(build_default_prior(make_data(c)), DegeneratePrior);
    CHECK_THROWS_AS(build_default_prior(make_data(y.topRows(1))), DegeneratePrior);
    CHECK_THROWS_AS(build_default_prior(make_data(y), -1.0), ConfigError);
  }
}

TEST_CASE("prior mean of a component covariance is phi S") {
  MatrixXd y(5, 2);
  y << 1, 4, 2, 9, 4, 1, 7, 3, 3, 3;
  const auto p = build_default_prior(make_data(y));
  Rng rng(21);
  MatrixXd acc = MatrixXd::Zero(2, 2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += sample_inv_wishart({p.c0, p.C0_init}, rng);
  acc /= n;
  const MatrixXd want = p.phi * p.S;
  for (int j = 0; j < 2; ++j) CHECK(std::abs(acc(j, j) / want(j, j) - 1.0) < 0.03);
  CHECK(std::abs(acc(0, 1)) < 0.03 * std::sqrt(want(0, 0) * want(1, 1)));
}

TEST_CASE("mixture likelihood by direct summation") {
  MatrixXd y(3, 1);
  y << -1.0, 0.5, 3.0;
  const auto data = make_data(y);
  auto s = scalar_state({0.3, 0.7}, {0.0, 2.0}, {1.0, 2.5});
  double want = 0.0;
  for (int i = 0; i < 3; ++i)
    want += std::log(0.3 * normal_pdf(y(i, 0), 0.0, 1.0) + 0.7 * normal_pdf(y(i, 0), 2.0, 2.5));
  CHECK(std::abs(mixture_log_likelihood(data, s) - want) < 1e-12);

  SUBCASE("single component") {
    auto one = scalar_state({1.0}, {0.5}, {2.0});
    double w = 0.0;
    for (int i = 0; i < 3; ++i) w += std::log(normal_pdf(y(i, 0), 0.5, 2.0));
    CHECK(std::abs(mixture_log_likelihood(data, one) - w) < 1e-12);
    one.S = {0, 0, 0};
    one.recount();
    CHECK(std::abs(complete_data_log_likelihood(data, one) - w) < 1e-12);
  }
  SUBCASE("duplicating a component and halving its weight") {
    auto dup = scalar_state({0.3, 0.35, 0.35}, {0.0, 2.0, 2.0}, {1.0, 2.5, 2.5});
    CHECK(std::abs(mixture_log_likelihood(data, dup) - want) < 1e-10);
  }
}

TEST_CASE("exhaustive-assignment oracle") {
  MatrixXd y(3, 2);
  y << 0.1, -0.4, 1.5, 2.0, -2.0, 0.3;
  const auto data = make_data(y);
  MixtureState s;
  s.eta = (VectorXd(2) << 0.4, 0.6).finished();
  s.mu = {(VectorXd(2) << 0.0, 0.0).finished(), (VectorXd(2) << 1.0, 1.5).finished()};
  s.Sigma = {(MatrixXd(2, 2) << 1.0, 0.3, 0.3, 2.0).finished(), (MatrixXd(2, 2) << 0.5, -0.1, -0.1, 0.8).finished()};
  double total = 0.0;
  for (int code = 0; code < 8; ++code) {
    s.S = {code & 1, (code >> 1) & 1, (code >> 2) & 1};
    s.recount();
    total += std::exp(complete_data_log_likelihood(data, s));
  }
  const double mix = std::exp(mixture_log_likelihood(data, s));
  CHECK(std::abs(total - mix) < 1e-10 * mix);
}

TEST_CASE("label permutation invariance") {
  Rng rng(22);
  MatrixXd y = MatrixXd::Random(40, 3) * 5.0;
  const auto data = make_data(y);
  MixtureState s;
  const int K = 4;
  s.eta = VectorXd::Random(K).cwiseAbs() + VectorXd::Constant(K, 0.1);
  s.eta /= s.eta.sum();
  for (int k = 0; k < K; ++k) {
    s.mu.push_back(VectorXd::Random(3) * 4.0);
    MatrixXd A = MatrixXd::Random(3, 3);
    s.Sigma.push_back(A * A.transpose() + MatrixXd::Identity(3, 3));
  }
  for (int i = 0; i < 40; ++i) s.S.push_back(i % K);
  s.recount();
  const double ll = mixture_log_likelihood(data, s);
  const double cl = complete_data_log_likelihood(data, s);
  std::vector<int> perm{2, 0, 3, 1};
  MixtureState t = s;
  for (int k = 0; k < K; ++k) {
    t.eta[perm[k]] = s.eta[k];
    t.mu[perm[k]] = s.mu[k];
    t.Sigma[perm[k]] = s.Sigma[k];
  }
  for (auto& v : t.S) v = perm[v];
  t.recount();
  CHECK(mixture_log_likelihood(data, t) == ll);
  CHECK(complete_data_log_likelihood(data, t) == doctest::Approx(cl).epsilon(1e-14));
  CHECK(std::isfinite(ll));
}

TEST_CASE("synthetic data generator") {
  MatrixXd base(3, 2);
  base << 0, 0, 10, 3, 4, 7;
  const auto data = make_data(base);

  SUBCASE("single component sample covariance") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{1});
    Rng rng(31);
    const auto [d, truth] = generate_synthetic(prior, 10000, rng);
    CHECK(truth.K() == 1);
    CHECK(truth.k_plus == 1);
    const Eigen::RowVectorXd m = d.y.colwise().mean();
    const MatrixXd centered = d.y.rowwise() - m;
    const MatrixXd cov = centered.transpose() * centered / (d.n() - 1);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(cov(j, j) / truth.Sigma[0](j, j) - 1.0) < 0.05);
  }
  SUBCASE("class frequencies follow the weights") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{4});
    Rng rng(32);
    const auto [d, truth] = generate_synthetic(prior, 100000, rng);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(truth.counts[k] / 1e5 - truth.eta[k]) < 0.01);
    CHECK(d.true_labels.has_value());
    double s = truth.eta.sum();
    CHECK(std::abs(s - 1.0) < 1e-10);
  }
  SUBCASE("sparse weights leave components empty") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{0.01}, SparseK{10});
    Rng rng(33);
    int below = 0;
    for (int rep = 0; rep < 500; ++rep) below += generate_synthetic(prior, 100, rng).second.k_plus < 10;
    CHECK(below / 500.0 > 0.95);
  }
  SUBCASE("large gamma fills every component") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{10.0}, FixedK{3});
    Rng rng(34);
    for (int rep = 0; rep < 20; ++rep) CHECK(generate_synthetic(prior, 10000, rng).second.k_plus == 3);
  }
  SUBCASE("random K stays on the truncated support") {
    const auto prior = build_default_prior(data, 2.5, 0.75, DynamicGamma{0.5}, RandomK{BnbParams{}, 30, 10});
    Rng rng(35);
    std::set<int> seen;
    for (int rep = 0; rep < 300; ++rep) {
      const int K = generate_synthetic(prior, 20, rng).second.K();
      CHECK((K >= 1 && K <= 30));
      seen.insert(K);
    }
    // BNB(1,4,3) puts 4/7 of its mass on K = 1
    CHECK(seen.count(1) == 1);
    CHECK(seen.size() > 3);
  }
}

TEST_CASE("chain configuration") {
  ChainConfig c;
  CHECK_NOTHROW(c.validate());
  c.burn_in = c.n_iter;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.burn_in = 0;
  c.thinning = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
