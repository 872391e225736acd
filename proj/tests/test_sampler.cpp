#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "bmix/errors.hpp"
#include "bmix/io.hpp"
#include "bmix/sampler.hpp"
#include "oracles.hpp"

using namespace bmix;

namespace {

Dataset make_data(const MatrixXd& y) {
  Dataset d;
  d.y = y;
  for (Eigen::Index j = 0; j < y.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  return d;
}

Dataset scalar_data(std::vector<double> v) {
  MatrixXd y(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) y(static_cast<Eigen::Index>(i), 0) = v[i];
  return make_data(y);
}

Dataset diabetes() {
  io::CsvOptions opt;
  opt.label_col = "class";
  return io::read_dataset(BMIX_DATA_DIR "/diabetes.csv", opt);
}

MixtureState two_component_state(const Dataset& data, double mu1, double mu2, double var) {
  MixtureState s;
  s.eta = (VectorXd(2) << 0.5, 0.5).finished();
  s.mu = {VectorXd::Constant(1, mu1), VectorXd::Constant(1, mu2)};
  s.Sigma = {MatrixXd::Constant(1, 1, var), MatrixXd::Constant(1, 1, var)};
  s.C0 = MatrixXd::Identity(1, 1);
  s.S.assign(static_cast<std::size_t>(data.n()), 0);
  s.recount();
  return s;
}

// Mean and batch-means standard error of a series.
std::pair<double, double> mean_and_se(const std::vector<double>& x, std::size_t batches = 50) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const std::size_t len = x.size() / batches;
  double v = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += x[i];
    v += (s / len - m) * (s / len - m);
  }
  return {m, std::sqrt(v / (batches - 1) / batches)};
}

}  // namespace

TEST_CASE("initialisation from k-means") {
  SUBCASE("single component") {
    const auto data = make_data(MatrixXd::Random(20, 2));
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{1});
    Rng rng(1);
    const auto s = init_from_kmeans(data, 1, prior, rng);
    CHECK((s.mu[0] - data.y.colwise().mean().transpose()).norm() < 1e-12);
    CHECK(std::all_of(s.S.begin(), s.S.end(), [](int v) { return v == 0; }));
    CHECK(s.eta[0] == 1.0);
  }
  SUBCASE("diabetes, three clusters") {
    const auto data = diabetes();
    const auto prior = build_default_prior(data);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const auto s = init_from_kmeans(data, 3, prior, rng);
      CHECK(s.k_plus == 3);
      for (int n : s.counts) CHECK(n >= 10);
      for (const auto& Sig : s.Sigma) CHECK((Sig - 0.75 * prior.S).norm() == 0.0);
      CHECK((s.C0 - prior.C0_init).norm() == 0.0);
      CHECK(std::abs(s.eta.sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("classification step") {
  SUBCASE("single component keeps every observation") {
    const auto data = scalar_data({0.0, 1.0, 2.0});
    MixtureState s = two_component_state(data, 0.0, 0.0, 1.0);
    s.eta = VectorXd::Ones(1);
    s.mu.resize(1);
    s.Sigma.resize(1);
    Rng rng(2);
    step_classify(data, s, rng);
    CHECK(s.S == std::vector<int>{0, 0, 0});
  }
  SUBCASE("identical components split evenly") {
    const auto data = scalar_data({0.3});
    MixtureState s = two_component_state(data, 0.0, 0.0, 1.0);
    Rng rng(3);
    int ones = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      step_classify(data, s, rng);
      ones += s.S[0] == 0;
    }
    CHECK(std::abs(ones / double(n) - 0.5) < 0.02);
  }
  SUBCASE("dominant component") {
    const auto data = scalar_data({0.0});
    MixtureState s = two_component_state(data, 0.0, 5.0, 0.1);
    // direct ratio: N(0|0,.1) / N(0|5,.1) = exp(125)
    Rng rng(4);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      step_classify(data, s, rng);
      hits += s.S[0] == 0;
    }
    CHECK(hits / 10000.0 > 0.999);
  }
  SUBCASE("underflow reports the observation") {
    const auto data = scalar_data({0.0, 1e200});
    MixtureState s = two_component_state(data, 0.0, 1.0, 1e-3);
    Rng rng(5);
    try {
      step_classify(data, s, rng);
      FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("observation 2") != std::string::npos);
    }
  }
}

TEST_CASE("weight step") {
  Rng rng(6);
  MixtureState s;
  SUBCASE("single component") {
    s.counts = {7};
    s.eta = VectorXd::Ones(1);
    step_weights(s, 1.0, rng);
    CHECK(s.eta[0] == 1.0);
  }
  SUBCASE("empty data recovers the prior") {
    s.counts = {0, 0};
    s.eta = VectorXd::Constant(2, 0.5);
    double m = 0.0;
    for (int i = 0; i < 100000; ++i) {
      step_weights(s, 1.0, rng);
      m += s.eta[0];
    }
    CHECK(std::abs(m / 1e5 - 0.5) < 0.01);
  }
  SUBCASE("posterior mean") {
    s.counts = {90, 10};
    s.eta = VectorXd::Constant(2, 0.5);
    double m = 0.0;
    for (int i = 0; i < 100000; ++i) {
      step_weights(s, 1.0, rng);
      m += s.eta[0];
    }
    CHECK(std::abs(m / 1e5 - 91.0 / 102.0) < 0.005);
  }
}

TEST_CASE("component parameter step") {
  const auto data = scalar_data({1.2, 0.4, 2.9, 1.7, 0.8});
  auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{1});
  const double ybar = data.y.col(0).mean();

  SUBCASE("mean draws given the covariance") {
    MixtureState base;
    base.eta = VectorXd::Ones(1);
    base.mu = {VectorXd::Zero(1)};
    base.Sigma = {MatrixXd::Constant(1, 1, 0.6)};
    base.C0 = prior.C0_init;
    base.S.assign(5, 0);
    base.recount();
    // conjugate normal oracle
    const double prec = 1.0 / prior.B0(0, 0) + 5.0 / 0.6;
    const double post_mean = (prior.b0[0] / prior.B0(0, 0) + 5.0 * ybar / 0.6) / prec;
    const double post_var = 1.0 / prec;
    Rng rng(7);
    double s = 0.0, ss = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      MixtureState st = base;
      step_component_params(data, st, prior, rng);
      s += st.mu[0][0];
      ss += st.mu[0][0] * st.mu[0][0];
    }
    const double m = s / n, v = ss / n - m * m;
    CHECK(std::abs(m / post_mean - 1.0) < 0.02);
    CHECK(std::abs(v / post_var - 1.0) < 0.02);
  }
  SUBCASE("covariance draws given a pinned mean") {
    // B0 tiny pins mu at b0, so Sigma ~ IW(c0 + N/2, C0 + scatter/2)
    prior.B0 = MatrixXd::Constant(1, 1, 1e-14);
    finalize_prior(prior);
    MixtureState base;
    base.eta = VectorXd::Ones(1);
    base.mu = {prior.b0};
    base.Sigma = {MatrixXd::Constant(1, 1, 0.6)};
    base.C0 = prior.C0_init;
    base.S.assign(5, 0);
    base.recount();
    const double scatter = (data.y.col(0).array() - prior.b0[0]).square().sum();
    const double c_k = prior.c0 + 2.5, C_k = prior.C0_init(0, 0) + 0.5 * scatter;
    const double want = 2.0 * C_k / (2.0 * c_k - 2.0);
    Rng rng(8);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      MixtureState st = base;
      step_component_params(data, st, prior, rng);
      s += st.Sigma[0](0, 0);
    }
    CHECK(std::abs(s / n / want - 1.0) < 0.03);
  }
  SUBCASE("empty component draws from the prior") {
    MixtureState base = two_component_state(data, 0.0, 0.0, 1.0);
    base.C0 = prior.C0_init;
    Rng rng(9);
    double mu = 0.0, sig = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      MixtureState st = base;
      step_component_params(data, st, prior, rng);
      mu += st.mu[1][0];
      sig += st.Sigma[1](0, 0);
    }
    CHECK(std::abs(mu / n - prior.b0[0]) < 0.03 * std::sqrt(prior.B0(0, 0)));
    const double want = 2.0 * prior.C0_init(0, 0) / (2.0 * prior.c0 - 2.0);
    CHECK(std::abs(sig / n / want - 1.0) < 0.03);
  }
}

TEST_CASE("hyperparameter step") {
  const auto data = scalar_data({0.0, 1.0});
  const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{1});
  MixtureState s;
  s.eta = VectorXd::Ones(1);
  s.mu = {VectorXd::Zero(1)};
  s.Sigma = {MatrixXd::Identity(1, 1)};
  s.S = {0, 0};
  s.recount();
  SUBCASE("wishart mean") {
    Rng rng(10);
    double m = 0.0;
    for (int i = 0; i < 100000; ++i) {
      step_hyper(s, prior, rng, false);
      m += s.C0(0, 0);
    }
    const double want = (prior.g0 + prior.c0) / (prior.G0(0, 0) + 1.0);
    CHECK(std::abs(m / 1e5 / want - 1.0) < 0.03);
  }
  SUBCASE("filled_only is irrelevant when all components are filled") {
    Rng a(11), b(11);
    MixtureState t = s;
    for (int i = 0; i < 100; ++i) {
      step_hyper(s, prior, a, false);
      step_hyper(t, prior, b, true);
      CHECK(s.C0 == t.C0);
    }
  }
  SUBCASE("no filled component") {
    s.S.clear();
    s.recount();
    Rng rng(12);
    CHECK_THROWS_AS(step_hyper(s, prior, rng, true), InvalidParameter);
  }
}

TEST_CASE("posterior of K given the partition") {
  const auto data = scalar_data({0.0, 1.0, 3.0});
  auto prior_of = [&](GammaSpec g, int k_max = 100) {
    return build_default_prior(data, 2.5, 0.75, g, RandomK{BnbParams{}, k_max, 1});
  };
  auto normalise = [](std::vector<double> lp) {
    const double m = *std::max_element(lp.begin(), lp.end());
    double z = 0.0;
    for (double& v : lp) z += (v = std::exp(v - m));
    for (double& v : lp) v /= z;
    return lp;
  };

  SUBCASE("one observation, fixed gamma: the prior") {
    const auto prior = prior_of(FixedGamma{0.7});
    const auto post = normalise(log_posterior_K({1}, prior));
    std::vector<double> pk;
    for (int K = 1; K <= 100; ++K) pk.push_back(prior.log_prior_K(K));
    const auto want = normalise(pk);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(post[i] - want[i]) < 1e-12);

    MixtureState s;
    s.counts = {1};
    Rng rng(13);
    std::vector<double> freq(100, 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) freq[static_cast<std::size_t>(step_sample_K(s, prior, rng) - 1)] += 1.0 / n;
    double tv = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) tv += 0.5 * std::abs(freq[i] - want[i]);
    CHECK(tv < 0.01);
  }
  SUBCASE("one observation, dynamic gamma: the prior") {
    const auto prior = prior_of(DynamicGamma{0.5});
    const auto post = normalise(log_posterior_K({1}, prior));
    std::vector<double> pk;
    for (int K = 1; K <= 100; ++K) pk.push_back(prior.log_prior_K(K));
    const auto want = normalise(pk);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(post[i] - want[i]) < 1e-12);
  }
  SUBCASE("matches brute-force Dirichlet-multinomial sums") {
    for (const auto& counts : std::vector<std::vector<int>>{{28, 33, 84}, {5}, {1, 1}, {40, 2, 7, 1}}) {
      for (const GammaSpec& spec : {GammaSpec{DynamicGamma{0.5}}, GammaSpec{FixedGamma{0.3}}}) {
        const auto prior = build_default_prior(scalar_data({0.0, 1.0}), 2.5, 0.75, spec, RandomK{BnbParams{1, 4, 3}, 100, 1});
        const auto post = normalise(log_posterior_K(counts, prior));
        const auto want = oracle::posterior_K(counts, prior, 100, [&](int K) { return gamma_for(spec, K); });
        REQUIRE(post.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(post[i] - want[i]) < 1e-10);
      }
    }
  }
  SUBCASE("diabetes-sized clusters reach K above 20") {
    const auto prior = prior_of(DynamicGamma{0.5});
    MixtureState s;
    s.counts = {28, 33, 84};
    Rng rng(14);
    int over = 0;
    for (int i = 0; i < 10000; ++i) over += step_sample_K(s, prior, rng) > 20;
    CHECK(over > 0);
  }
  SUBCASE("support below K_plus") {
    const auto prior = prior_of(FixedGamma{1.0}, 2);
    CHECK_THROWS_AS(log_posterior_K({1, 1, 1}, prior), ConfigError);
  }
}

TEST_CASE("compaction and empty components") {
  const auto data = scalar_data({0.0, 1.0, 2.0, 3.0});
  const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, RandomK{});
  MixtureState s;
  s.eta = (VectorXd(4) << 0.1, 0.2, 0.3, 0.4).finished();
  for (int k = 0; k < 4; ++k) {
    s.mu.push_back(VectorXd::Constant(1, k));
    s.Sigma.push_back(MatrixXd::Constant(1, 1, 1.0 + k));
  }
  s.C0 = prior.C0_init;
  s.S = {3, 1, 3, 3};
  s.recount();
  compact_filled(s);
  CHECK(s.K() == 2);
  CHECK(s.S == std::vector<int>{1, 0, 1, 1});
  CHECK(s.mu[0][0] == 1.0);
  CHECK(s.mu[1][0] == 3.0);
  CHECK(s.counts == std::vector<int>{1, 3});

  SUBCASE("K equal to K_plus") {
    MixtureState t = s;
    Rng rng(15);
    step_add_empty(t, 2, prior, rng);
    CHECK(t.mu == s.mu);
    CHECK(t.K() == 2);
  }
  SUBCASE("prior draws for the new slots") {
    Rng rng(16);
    double m = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      MixtureState t = s;
      step_add_empty(t, 3, prior, rng);
      CHECK(t.k_plus == 2);
      CHECK(t.counts[2] == 0);
      m += t.Sigma[2](0, 0);
    }
    const double want = 2.0 * s.C0(0, 0) / (2.0 * prior.c0 - 2.0);
    CHECK(std::abs(m / n / want - 1.0) < 0.03);
  }
}

TEST_CASE("random label permutation") {
  MatrixXd y = MatrixXd::Random(30, 2) * 3.0;
  const auto data = make_data(y);
  const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{3});
  Rng rng(17);
  auto s = init_from_kmeans(data, 3, prior, rng);
  step_component_params(data, s, prior, rng);
  step_weights(s, 1.0, rng);

  SUBCASE("single component is the identity") {
    MixtureState one;
    one.eta = VectorXd::Ones(1);
    one.mu = {VectorXd::Zero(2)};
    one.Sigma = {MatrixXd::Identity(2, 2)};
    one.S = {0, 0};
    one.recount();
    CHECK(permute_labels_random(one, rng) == std::vector<int>{0});
  }
  SUBCASE("likelihood is unchanged to the last bit") {
    const double before = mixture_log_likelihood(data, s);
    for (int i = 0; i < 50; ++i) {
      permute_labels_random(s, rng);
      CHECK(mixture_log_likelihood(data, s) == before);
    }
  }
  SUBCASE("uniform over the six permutations") {
    std::map<std::vector<int>, int> freq;
    for (int i = 0; i < 10000; ++i) ++freq[permute_labels_random(s, rng)];
    CHECK(freq.size() == 6);
    for (const auto& [p, n] : freq) CHECK(std::abs(n / 1e4 - 1.0 / 6.0) < 0.02);
  }
  SUBCASE("not a bijection") {
    CHECK_THROWS_AS(permute_labels(s, {0, 0, 1}), InvalidParameter);
  }
}

TEST_CASE("chain invariants") {
  const auto data = diabetes();
  ChainConfig cfg;
  cfg.n_iter = 600;
  cfg.burn_in = 100;
  cfg.thinning = 2;
  cfg.seed = 3;
  cfg.store_assignments = true;

  auto check_records = [&](const ChainOutput& out) {
    CHECK(out.records.size() == 250);
    long prev = 0;
    for (const auto& r : out.records) {
      CHECK(r.iter > prev);
      prev = r.iter;
      CHECK(std::accumulate(r.counts.begin(), r.counts.end(), 0) == 145);
      CHECK(std::abs(r.eta.sum() - 1.0) < 1e-10);
      CHECK(r.K_plus == std::count_if(r.counts.begin(), r.counts.end(), [](int n) { return n > 0; }));
      CHECK(r.K >= r.K_plus);
      REQUIRE(r.S.has_value());
      CHECK(r.S->size() == 145u);
    }
    CHECK(out.trace.size() == 600u);
  };

  SUBCASE("fixed K") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{3});
    const auto out = run_chain(data, prior, cfg, SamplerMode::FixedK);
    check_records(out);
    for (const auto& r : out.records) CHECK(r.K == 3);
    const auto again = run_chain(data, prior, cfg, SamplerMode::FixedK);
    CHECK(again.records.back().mu == out.records.back().mu);
    CHECK(again.records.back().S == out.records.back().S);
  }
  SUBCASE("telescoping") {
    const auto prior = build_default_prior(data, 2.5, 0.75, DynamicGamma{0.5}, RandomK{});
    const auto out = run_chain(data, prior, cfg, SamplerMode::Telescoping);
    check_records(out);
    std::set<int> Ks;
    for (const auto& r : out.records) Ks.insert(r.K);
    CHECK(Ks.size() > 1);
  }
  SUBCASE("permutation step keeps the likelihood trace") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{3});
    cfg.permutation_step = true;
    const auto out = run_chain(data, prior, cfg, SamplerMode::FixedK);
    check_records(out);
  }
  SUBCASE("mode and prior must agree") {
    const auto fixed = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{3});
    CHECK_THROWS_AS(run_chain(data, fixed, cfg, SamplerMode::Telescoping), ConfigError);
    const auto random = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, RandomK{});
    CHECK_THROWS_AS(run_chain(data, random, cfg, SamplerMode::FixedK), ConfigError);
  }
}

TEST_CASE("single-component chain against the exact posterior") {
  const std::vector<double> y{1.2, 0.4, 2.9, 1.7, 0.8};
  const auto data = scalar_data(y);
  const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{1});
  const auto exact = oracle::single_gaussian_posterior(y, oracle::scalar_prior(prior));
  ChainConfig cfg;
  cfg.n_iter = 205000;
  cfg.burn_in = 5000;
  cfg.seed = 18;
  const auto out = run_chain(data, prior, cfg, SamplerMode::FixedK);
  std::vector<double> mu, s2;
  for (const auto& r : out.records) {
    mu.push_back(r.mu[0][0]);
    s2.push_back(r.Sigma[0](0, 0));
  }
  const auto [m_mu, se_mu] = mean_and_se(mu);
  const auto [m_s2, se_s2] = mean_and_se(s2);
  MESSAGE("mu: chain " << m_mu << " +- " << se_mu << ", exact " << exact.mean_mu);
  MESSAGE("sigma2: chain " << m_s2 << " +- " << se_s2 << ", exact " << exact.mean_s2);
  CHECK(std::abs(m_mu - exact.mean_mu) < 4.0 * se_mu);
  CHECK(std::abs(m_s2 - exact.mean_s2) < 4.0 * se_s2);
}

TEST_CASE("two observations: K_plus law against enumeration") {
  const double y1 = -1.0, y2 = 1.0;
  const auto data = scalar_data({y1, y2});
  ChainConfig cfg;
  cfg.n_iter = 205000;
  cfg.burn_in = 5000;
  cfg.seed = 19;

  SUBCASE("fixed K = 2") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, FixedK{2});
    const auto exact = oracle::two_obs_kplus_fixed(y1, y2, 2, 1.0, oracle::scalar_prior(prior));
    const auto out = run_chain(data, prior, cfg, SamplerMode::FixedK);
    double p1 = 0.0;
    for (const auto& r : out.records) p1 += r.K_plus == 1;
    p1 /= static_cast<double>(out.records.size());
    MESSAGE("P(K+ = 1): chain " << p1 << ", exact " << exact[0]);
    CHECK(std::abs(p1 - exact[0]) < 0.02);
  }
  SUBCASE("telescoping with a prior on K") {
    const auto prior = build_default_prior(data, 2.5, 0.75, FixedGamma{1.0}, RandomK{BnbParams{}, 30, 2});
    const auto exact = oracle::two_obs_kplus_random(y1, y2, prior, [](int) { return 1.0; });
    const auto out = run_chain(data, prior, cfg, SamplerMode::Telescoping);
    double p1 = 0.0;
    for (const auto& r : out.records) p1 += r.K_plus == 1;
    p1 /= static_cast<double>(out.records.size());
    MESSAGE("P(K+ = 1): chain " << p1 << ", exact " << exact[0]);
    CHECK(std::abs(p1 - exact[0]) < 0.02);
  }
  SUBCASE("telescoping with dynamic gamma") {
    const auto prior = build_default_prior(data, 2.5, 0.75, DynamicGamma{0.5}, RandomK{BnbParams{}, 30, 2});
    const auto exact = oracle::two_obs_kplus_random(y1, y2, prior, [](int K) { return 0.5 / K; });
    const auto out = run_chain(data, prior, cfg, SamplerMode::Telescoping);
    double p1 = 0.0;
    for (const auto& r : out.records) p1 += r.K_plus == 1;
    p1 /= static_cast<double>(out.records.size());
    MESSAGE("P(K+ = 1): chain " << p1 << ", exact " << exact[0]);
    CHECK(std::abs(p1 - exact[0]) < 0.02);
  }
}
