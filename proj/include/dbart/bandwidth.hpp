#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dbart/data.hpp"
#include "dbart/gibbs.hpp"

namespace dbart {

struct ScoreReport {
  std::vector<double> candidates;
  std::vector<double> scores;  // +inf for infeasible candidates
  std::vector<bool> feasible;
  double selected = 0.0;
  std::vector<Index> eval_set;
  int s = 0;
};

// s = max(ceil(0.02 n), 5), capped at n.
int evaluation_size(Index n);

// The s units nearest the cutoff by |x - c|, ties broken by index; returned
// in ascending index order.
std::vector<Index> evaluation_set(const Dataset& ds);

// Local Hyvarinen score from posterior draws: expectations over draws of the
// first and second derivatives of the weighted Gaussian log density in y_i.
double hyvarinen_score(const PosteriorDraws& draws, const Dataset& ds, double h, const std::vector<Index>& eval_set);

// {l * 2 * anchor / L : l = 1..L}.
std::vector<double> candidate_grid(double anchor, int L = 6);

// A candidate is feasible when both sides of the cutoff have at least
// 2q + 2 in-window units.
bool bandwidth_feasible(const Dataset& ds, double h, int q);

// Minimal score wins; ties go to the smaller bandwidth.
std::size_t argmin_score(const std::vector<double>& candidates, const std::vector<double>& scores);

// Short chain per candidate (config.n_iter / n_burn describe that chain),
// scored by hyvarinen_score on the evaluation set. Candidate l runs on the
// stream derived from (config.seed, l).
ScoreReport select_bandwidth(const Dataset& ds, const SamplerConfig& config, const std::vector<double>& grid,
                             int threads = 1);

}  // namespace dbart
