#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dbart/bandwidth.hpp"
#include "dbart/errors.hpp"

using namespace dbart;

namespace {

// x on a dyadic grid so that shifting by a power of two is exact.
Dataset grid_data(Index n, double shift, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd y(n), x(n);
  Eigen::MatrixXd z(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double u = std::floor((2.0 * rng.uniform() - 1.0) * 1024.0) / 1024.0;
    z(i, 0) = rng.normal();
    y[i] = 1.0 + u + (u >= 0.0 ? 1.0 + 0.5 * z(i, 0) : 0.0) + 0.3 * rng.normal();
    x[i] = u + shift;
  }
  return Dataset(y, x, z, shift);
}

PosteriorDraws fake_draws(const std::vector<Index>& units, const Eigen::MatrixXd& resid, const Eigen::VectorXd& omega) {
  PosteriorDraws d;
  d.eval_units = units;
  d.eval_residuals = resid;
  d.omega = omega;
  d.tau.resize(omega.size(), 0);
  return d;
}

}  // namespace

TEST_SUITE("bandwidth") {
  TEST_CASE("score of a single draw has a closed form") {
    Eigen::VectorXd x(3);
    x << -0.2, 0.1, 0.9;
    const Dataset ds(Eigen::VectorXd::Zero(3), x, Eigen::MatrixXd::Zero(3, 1), 0.0);
    Eigen::MatrixXd r(1, 3);
    r << 0.5, -1.5, 3.0;
    const double omega = 2.0;
    const auto d = fake_draws({0, 1, 2}, r, Eigen::VectorXd::Constant(1, omega));
    // unit 2 lies outside h = 0.5 and contributes nothing
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) expect += -2.0 * omega + omega * omega * r(0, i) * r(0, i);
    CHECK(hyvarinen_score(d, ds, 0.5, {0, 1, 2}) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(hyvarinen_score(d, ds, 0.05, {0, 1, 2}) == 0.0);
  }

  TEST_CASE("score over several draws") {
    Eigen::VectorXd x(2);
    x << -0.1, 0.1;
    const Dataset ds(Eigen::VectorXd::Zero(2), x, Eigen::MatrixXd::Zero(2, 1), 0.0);
    Eigen::MatrixXd r(3, 2);
    r << 1.0, 0.0, -1.0, 2.0, 0.5, -1.0;
    Eigen::VectorXd om(3);
    om << 1.0, 2.0, 0.5;
    const auto d = fake_draws({0, 1}, r, om);
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) {
      double e1 = 0.0, e2 = 0.0;
      for (int s = 0; s < 3; ++s) {
        e1 += -om[s] * r(s, i) / 3.0;
        e2 += (-om[s] + om[s] * om[s] * r(s, i) * r(s, i)) / 3.0;
      }
      expect += 2.0 * e2 - e1 * e1;
    }
    CHECK(hyvarinen_score(d, ds, 1.0, {0, 1}) == doctest::Approx(expect).epsilon(1e-14));

    // invariant to the order of draws and of evaluation units
    Eigen::MatrixXd r2(3, 2);
    r2 << r.row(2), r.row(0), r.row(1);
    Eigen::VectorXd om2(3);
    om2 << om[2], om[0], om[1];
    CHECK(hyvarinen_score(fake_draws({0, 1}, r2, om2), ds, 1.0, {1, 0}) == doctest::Approx(expect).epsilon(1e-14));

    CHECK_THROWS_AS(hyvarinen_score(d, ds, 1.0, {}), std::domain_error);
    CHECK_THROWS_AS(hyvarinen_score(fake_draws({0}, r.leftCols(1), om), ds, 1.0, {0, 1}), std::domain_error);
  }

  TEST_CASE("evaluation set size and membership") {
    CHECK(evaluation_size(10) == 5);
    CHECK(evaluation_size(3) == 3);
    CHECK(evaluation_size(250) == 5);
    CHECK(evaluation_size(251) == 6);
    CHECK(evaluation_size(1000) == 20);
    CHECK(evaluation_size(1200) == 24);

    Eigen::VectorXd x(8);
    x << 0.5, -0.05, 0.3, 0.01, -0.4, 0.02, -0.02, 0.9;
    const Dataset ds(Eigen::VectorXd::Zero(8), x, Eigen::MatrixXd::Zero(8, 1), 0.0);
    const auto e = evaluation_set(ds);
    CHECK(e == std::vector<Index>{1, 2, 3, 5, 6});

    Eigen::VectorXd tie(6);
    tie << 0.1, -0.1, 0.1, -0.1, 0.1, 0.2;
    const Dataset ds2(Eigen::VectorXd::Zero(6), tie, Eigen::MatrixXd::Zero(6, 1), 0.0);
    CHECK(evaluation_set(ds2) == std::vector<Index>{0, 1, 2, 3, 4});
  }

  TEST_CASE("candidate grid") {
    const auto g = candidate_grid(0.3);
    REQUIRE(g.size() == 6);
    CHECK(g[0] == doctest::Approx(0.1));
    CHECK(g[2] == doctest::Approx(0.3));
    CHECK(g[5] == doctest::Approx(0.6));
    CHECK(candidate_grid(1.0, 1) == std::vector<double>{2.0});
    CHECK_THROWS_AS(candidate_grid(0.0), std::domain_error);
    CHECK_THROWS_AS(candidate_grid(1.0, 0), std::domain_error);
  }

  TEST_CASE("argmin with ties") {
    CHECK(argmin_score({0.1, 0.2, 0.3}, {3.0, 1.0, 2.0}) == 1);
    CHECK(argmin_score({0.1, 0.2, 0.3}, {2.0, 1.0, 1.0}) == 1);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(argmin_score({0.1, 0.2}, {inf, 4.0}) == 1);
    CHECK(argmin_score({0.5}, {7.0}) == 0);
  }

  TEST_CASE("feasibility counts units per side") {
    Eigen::VectorXd x(8);
    x << -0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.5;
    const Dataset ds(Eigen::VectorXd::Zero(8), x, Eigen::MatrixXd::Zero(8, 1), 0.0);
    // q = 1 needs 4 per side
    CHECK_FALSE(bandwidth_feasible(ds, 0.45, 1));
    CHECK(bandwidth_feasible(ds, 0.5, 1));
    CHECK_FALSE(bandwidth_feasible(ds, 10.0, 2));
  }

  TEST_CASE("selection is deterministic and translation invariant") {
    SamplerConfig c;
    c.n_iter = 150;
    c.n_burn = 50;
    c.seed = 21;
    const auto grid = candidate_grid(0.4);
    const Dataset a = grid_data(300, 0.0, 8);
    const ScoreReport r1 = select_bandwidth(a, c, grid);
    const ScoreReport r2 = select_bandwidth(a, c, grid);
    CHECK(r1.scores == r2.scores);
    CHECK(r1.selected == r2.selected);
    CHECK(r1.s == 6);
    CHECK(std::find(grid.begin(), grid.end(), r1.selected) != grid.end());
    const std::size_t best = argmin_score(r1.candidates, r1.scores);
    CHECK(r1.selected == grid[best]);

    const Dataset b = grid_data(300, 4.0, 8);
    const ScoreReport r3 = select_bandwidth(b, c, grid);
    CHECK(r3.eval_set == r1.eval_set);
    CHECK(r3.feasible == r1.feasible);
    for (std::size_t l = 0; l < grid.size(); ++l) {
      if (r1.feasible[l]) CHECK(r3.scores[l] == doctest::Approx(r1.scores[l]).epsilon(1e-9));
    }
    CHECK(r3.selected == r1.selected);
  }

  TEST_CASE("all-infeasible grid is a configuration error") {
    SamplerConfig c;
    c.n_iter = 20;
    c.n_burn = 10;
    const Dataset a = grid_data(100, 0.0, 9);
    CHECK_THROWS_AS(select_bandwidth(a, c, {1e-6, 2e-6}), ConfigError);
  }
}
