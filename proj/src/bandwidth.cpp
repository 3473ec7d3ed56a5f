#include "dbart/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dbart/errors.hpp"
#include "dbart/parallel.hpp"

namespace dbart {

int evaluation_size(Index n) {
  const auto s = std::max(static_cast<Index>(std::ceil(0.02 * static_cast<double>(n) - 1e-9)), Index{5});
  return static_cast<int>(std::min(s, n));
}

std::vector<Index> evaluation_set(const Dataset& ds) {
  std::vector<Index> order(static_cast<std::size_t>(ds.n()));
  std::iota(order.begin(), order.end(), Index{0});
  const double c = ds.cutoff();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(ds.x()[a] - c) < std::abs(ds.x()[b] - c);
  });
  order.resize(static_cast<std::size_t>(evaluation_size(ds.n())));
  std::sort(order.begin(), order.end());
  return order;
}

double hyvarinen_score(const PosteriorDraws& draws, const Dataset& ds, double h, const std::vector<Index>& eval_set) {
  if (eval_set.empty()) throw std::domain_error("bandwidth: empty evaluation set");
  if (draws.draws() == 0) throw std::domain_error("bandwidth: no posterior draws");
  const Eigen::VectorXd k = kernel_weights(ds, h);
  const auto n_draws = static_cast<double>(draws.draws());

  double score = 0.0;
  for (Index i : eval_set) {
    const auto pos = std::find(draws.eval_units.begin(), draws.eval_units.end(), i);
    if (pos == draws.eval_units.end()) throw std::domain_error("bandwidth: draws lack residuals for an evaluation unit");
    const Index col = pos - draws.eval_units.begin();
    if (k[i] == 0.0) continue;
    double e_l1 = 0.0, e_l2_plus_sq = 0.0;
    for (Index r = 0; r < draws.draws(); ++r) {
      const double l1 = -draws.omega[r] * k[i] * draws.eval_residuals(r, col);
      const double l2 = -draws.omega[r] * k[i];
      e_l1 += l1;
      e_l2_plus_sq += l2 + l1 * l1;
    }
    e_l1 /= n_draws;
    e_l2_plus_sq /= n_draws;
    score += 2.0 * e_l2_plus_sq - e_l1 * e_l1;
  }
  return score;
}

std::vector<double> candidate_grid(double anchor, int L) {
  if (!(anchor > 0.0)) throw std::domain_error("bandwidth: grid anchor must be positive");
  if (L < 1) throw std::domain_error("bandwidth: grid needs at least one point");
  std::vector<double> grid;
  for (int l = 1; l <= L; ++l) grid.push_back(static_cast<double>(l) * 2.0 * anchor / static_cast<double>(L));
  return grid;
}

bool bandwidth_feasible(const Dataset& ds, double h, int q) {
  const Eigen::VectorXd k = kernel_weights(ds, h);
  Index control = 0, treated = 0;
  for (Index i = 0; i < ds.n(); ++i) {
    if (k[i] <= 0.0) continue;
    (ds.treated(i) ? treated : control) += 1;
  }
  const Index need = 2 * q + 2;
  return control >= need && treated >= need;
}

std::size_t argmin_score(const std::vector<double>& candidates, const std::vector<double>& scores) {
  if (candidates.empty() || candidates.size() != scores.size()) {
    throw std::domain_error("bandwidth: candidates and scores must be non-empty and aligned");
  }
  std::size_t best = 0;
  for (std::size_t l = 1; l < scores.size(); ++l) {
    if (scores[l] < scores[best] || (scores[l] == scores[best] && candidates[l] < candidates[best])) best = l;
  }
  return best;
}

ScoreReport select_bandwidth(const Dataset& ds, const SamplerConfig& config, const std::vector<double>& grid,
                             int threads) {
  if (grid.empty()) throw std::domain_error("bandwidth: empty candidate grid");
  ScoreReport report;
  report.candidates = grid;
  report.scores.assign(grid.size(), std::numeric_limits<double>::infinity());
  report.feasible.assign(grid.size(), false);
  report.eval_set = evaluation_set(ds);
  report.s = static_cast<int>(report.eval_set.size());

  for (std::size_t l = 0; l < grid.size(); ++l) report.feasible[l] = bandwidth_feasible(ds, grid[l], config.q);
  if (std::none_of(report.feasible.begin(), report.feasible.end(), [](bool f) { return f; })) {
    // Name the smallest bandwidth that would have worked, if any.
    std::vector<double> x_abs(static_cast<std::size_t>(ds.n()));
    for (Index i = 0; i < ds.n(); ++i) x_abs[static_cast<std::size_t>(i)] = std::abs(ds.x()[i] - ds.cutoff());
    std::sort(x_abs.begin(), x_abs.end());
    std::string hint = "no bandwidth is feasible for this dataset";
    for (double h : x_abs) {
      if (h > 0.0 && bandwidth_feasible(ds, h, config.q)) {
        hint = "smallest feasible window is h=" + std::to_string(h);
        break;
      }
    }
    throw ConfigError("bandwidth", "all candidate bandwidths are infeasible; " + hint);
  }

  std::vector<double> scores(grid.size(), std::numeric_limits<double>::infinity());
  parallel_for(grid.size(), threads, [&](std::size_t l) {
    if (!report.feasible[l]) return;
    SamplerConfig cfg = config;
    cfg.h = grid[l];
    cfg.stream = derive_seed(config.stream, l);
    const PosteriorDraws draws = run_chain(cfg, ds, Eigen::MatrixXd(0, ds.d()), report.eval_set);
    scores[l] = hyvarinen_score(draws, ds, grid[l], report.eval_set);
  });
  report.scores = scores;
  report.selected = grid[argmin_score(report.candidates, report.scores)];
  return report;
}

}  // namespace dbart
