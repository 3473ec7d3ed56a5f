#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../support/oracles.hpp"
#include "dbart/errors.hpp"
#include "dbart/gibbs.hpp"

using namespace dbart;

namespace {

// tau(z) = 1 + 1{z1 > 0}; mu(x) = 0.5 + x.
Dataset step_data(Index n, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd y(n), x(n);
  Eigen::MatrixXd z(n, 2);
  for (Index i = 0; i < n; ++i) {
    x[i] = 2.0 * rng.uniform() - 1.0;
    z(i, 0) = rng.normal();
    z(i, 1) = rng.normal();
    const double tau = z(i, 0) > 0.0 ? 2.0 : 1.0;
    y[i] = 0.5 + x[i] + (x[i] >= 0.0 ? tau : 0.0) + sigma * rng.normal();
  }
  return Dataset(y, x, z, 0.0);
}

SamplerConfig short_config() {
  SamplerConfig c;
  c.n_iter = 60;
  c.n_burn = 20;
  c.h = 0.5;
  c.delta_multiplier = 0.3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("gibbs") {
  TEST_CASE("initial state") {
    const Dataset ds = step_data(200, 0.3, 1);
    const SamplerConfig c = short_config();
    const GibbsSampler s(c, ds);
    CHECK(s.forest().size() == 20);
    for (const Tree& t : s.forest().trees()) {
      CHECK(t.leaf_count() == 1);
      CHECK(t.node(0).mu == 0.0);
    }
    CHECK(s.local_linear().B.isZero());
    CHECK(s.local_linear().omega == 1.0);
    CHECK(s.sweeps() == 0);
    for (Index i : s.window()) CHECK(std::abs(ds.x()[i]) <= 0.5);
    Index inside = 0;
    for (Index i = 0; i < ds.n(); ++i) inside += std::abs(ds.x()[i]) <= 0.5 ? 1 : 0;
    CHECK(static_cast<Index>(s.window().size()) == inside);
  }

  TEST_CASE("configuration errors") {
    const Dataset ds = step_data(100, 0.3, 2);
    auto expect_config_error = [&](auto mutate) {
      SamplerConfig c = short_config();
      mutate(c);
      CHECK_THROWS_AS(GibbsSampler(c, ds), ConfigError);
    };
    expect_config_error([](SamplerConfig& c) { c.n_burn = c.n_iter; });
    expect_config_error([](SamplerConfig& c) { c.thin = 0; });
    expect_config_error([](SamplerConfig& c) { c.h = 0.0; });
    expect_config_error([](SamplerConfig& c) { c.q = 0; });
    expect_config_error([](SamplerConfig& c) { c.alpha = 1.0; });
    expect_config_error([](SamplerConfig& c) { c.prior = LocalLinearPrior::defaults(2, 2); });
    // window with no units on one side
    expect_config_error([](SamplerConfig& c) { c.h = 1e-9; });
    CHECK_THROWS_AS(run_chain(short_config(), ds, Eigen::MatrixXd::Zero(1, 3)), std::domain_error);
  }

  TEST_CASE("retained draw count") {
    const Dataset ds = step_data(200, 0.3, 3);
    SamplerConfig c = short_config();
    c.n_iter = 10;
    c.n_burn = 5;
    CHECK(c.retained() == 5);
    CHECK(run_chain(c, ds, ds.z().topRows(3)).draws() == 5);
    c.thin = 2;
    CHECK(c.retained() == 3);
    const PosteriorDraws d = run_chain(c, ds, ds.z().topRows(3), {0, 1});
    CHECK(d.tau.rows() == 3);
    CHECK(d.tau.cols() == 3);
    CHECK(d.B.size() == 3);
    CHECK(d.eval_residuals.rows() == 3);
    CHECK(d.eval_residuals.cols() == 2);
  }

  TEST_CASE("chains are deterministic in the seed") {
    const Dataset ds = step_data(200, 0.3, 4);
    const SamplerConfig c = short_config();
    const PosteriorDraws a = run_chain(c, ds, ds.z().topRows(5));
    const PosteriorDraws b = run_chain(c, ds, ds.z().topRows(5));
    CHECK(a.tau == b.tau);
    CHECK(a.omega == b.omega);
    SamplerConfig other = c;
    other.stream = 1;
    CHECK(run_chain(other, ds, ds.z().topRows(5)).tau != a.tau);
  }

  TEST_CASE("cached residuals match a direct recomputation") {
    const Dataset ds = step_data(300, 0.3, 5);
    SamplerConfig c = short_config();
    c.q = 2;
    GibbsSampler s(c, ds);
    Rng rng(9);
    for (int sweep = 0; sweep < 250; ++sweep) {
      s.step(rng);
      if (sweep % 50 != 7) continue;
      double worst = 0.0;
      for (std::size_t k = 0; k < s.window().size(); ++k) {
        const Index i = s.window()[k];
        const DesignRow row = design_row(ds, i, c.q, c.h);
        const double tau = ds.treated(i) ? forest_cate(s.forest(), ds.z().row(i).transpose()) : 0.0;
        const double expect = ds.y()[i] - tau - row.x_basis.dot(s.local_linear().B * row.z_tilde);
        worst = std::max(worst, std::abs(s.residuals()[static_cast<Index>(k)] - expect));
      }
      CHECK(worst < 1e-8);
    }
    CHECK(s.sweeps() == 250);
  }

  TEST_CASE("recovers a step CATE") {
    const Dataset ds = step_data(1000, 0.3, 6);
    SamplerConfig c;
    c.n_iter = 2000;
    c.n_burn = 500;
    c.h = 0.5;
    c.seed = 17;
    Eigen::MatrixXd targets(2, 2);
    targets << -1.0, 0.0, 1.0, 0.0;
    const CateSummary s = summarize(run_chain(c, ds, targets));
    CHECK(std::abs(s.mean[0] - 1.0) < 0.15);
    CHECK(std::abs(s.mean[1] - 2.0) < 0.15);
  }

  TEST_CASE("quantile and summarize") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 1.0);
    CHECK(quantile(v, 0.025) == doctest::Approx(3.475));
    CHECK(quantile(v, 0.975) == doctest::Approx(97.525));
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 100.0);
    CHECK(quantile({4.0}, 0.3) == 4.0);
    CHECK_THROWS_AS(quantile({}, 0.5), std::domain_error);

    PosteriorDraws d;
    d.tau.resize(100, 2);
    d.omega = Eigen::VectorXd::Ones(100);
    for (Index s = 0; s < 100; ++s) {
      d.tau(s, 0) = static_cast<double>(100 - s);
      d.tau(s, 1) = 7.0;
    }
    const CateSummary s95 = summarize(d, 0.95);
    CHECK(s95.mean[0] == doctest::Approx(50.5));
    CHECK(s95.lower[0] == doctest::Approx(3.475));
    CHECK(s95.upper[0] == doctest::Approx(97.525));
    CHECK(s95.lower[1] == 7.0);
    CHECK(s95.upper[1] == 7.0);
    CHECK(s95.mean[1] == 7.0);
    const CateSummary s50 = summarize(d, 0.5);
    CHECK(s50.lower[0] >= s95.lower[0]);
    CHECK(s50.upper[0] <= s95.upper[0]);
    CHECK_THROWS_AS(summarize(d, 1.0), std::domain_error);
  }
}
