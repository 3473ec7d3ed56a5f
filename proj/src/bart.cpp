#include "dbart/bart.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dbart/errors.hpp"

namespace dbart {

LeafHyper elicit_leaf_prior(const Dataset& ds, double delta, double k, int m) {
  if (!(delta > 0.0) || !(k > 0.0) || m < 1) {
    throw std::domain_error("bart: elicitation needs delta > 0, k > 0, m >= 1");
  }
  const double c = ds.cutoff();
  for (int attempt = 0; attempt <= 10; ++attempt, delta *= 2.0) {
    double t_max = -INFINITY, t_min = INFINITY, c_max = -INFINITY, c_min = INFINITY;
    for (Index i = 0; i < ds.n(); ++i) {
      const double x = ds.x()[i];
      const double y = ds.y()[i];
      if (x > c && x < c + delta) {
        t_max = std::max(t_max, y);
        t_min = std::min(t_min, y);
      } else if (x > c - delta && x < c) {
        c_max = std::max(c_max, y);
        c_min = std::min(c_min, y);
      }
    }
    if (!std::isfinite(t_max) || !std::isfinite(c_max)) continue;
    const double tau_max = t_max - c_min;
    const double tau_min = t_min - c_max;
    LeafHyper hyper;
    hyper.m = m;
    hyper.mu_mu = (tau_max + tau_min) / (2.0 * m);
    hyper.sigma_mu = (tau_max - tau_min) / (2.0 * k * std::sqrt(static_cast<double>(m)));
    if (!(hyper.sigma_mu > 0.0)) {
      throw ConfigError("bart", "elicited leaf prior scale is zero (no outcome variation near the cutoff)");
    }
    return hyper;
  }
  throw ConfigError("bart", "no units on one side of the cutoff within the elicitation window");
}

double leaf_log_marginal(const LeafStats& s, const LeafHyper& hyper, double omega) {
  const double prior_prec = 1.0 / (hyper.sigma_mu * hyper.sigma_mu);
  const double post_prec = prior_prec + omega * s.sum_w;
  const double lin = prior_prec * hyper.mu_mu + omega * s.sum_wr;
  return -0.5 * s.count * std::log(2.0 * std::numbers::pi) + 0.5 * s.count * std::log(omega) +
         0.5 * std::log(prior_prec) - 0.5 * std::log(post_prec) +
         0.5 * (lin * lin / post_prec - omega * s.sum_wr2 - hyper.mu_mu * hyper.mu_mu * prior_prec);
}

std::vector<LeafStats> leaf_stats(const TreeInfo& info, const Eigen::VectorXd& residuals,
                                  const Eigen::VectorXd& weights) {
  int max_id = 0;
  for (int id : info.leaves()) max_id = std::max(max_id, id);
  std::vector<LeafStats> stats(static_cast<std::size_t>(max_id) + 1);
  for (int id : info.leaves()) {
    LeafStats& s = stats[static_cast<std::size_t>(id)];
    for (int i : info.members(id)) {
      const double w = weights[i];
      if (w <= 0.0) continue;
      const double r = residuals[i];
      s.sum_w += w;
      s.sum_wr += w * r;
      s.sum_wr2 += w * r * r;
      s.count += 1.0;
    }
  }
  return stats;
}

double tree_log_marginal(const TreeInfo& info, const Eigen::VectorXd& residuals, const Eigen::VectorXd& weights,
                         const LeafHyper& hyper, double omega) {
  const auto stats = leaf_stats(info, residuals, weights);
  double out = 0.0;
  for (int id : info.leaves()) out += leaf_log_marginal(stats[static_cast<std::size_t>(id)], hyper, omega);
  return out;
}

MhResult mh_tree_update(Tree& tree, const TreeData& data, const Eigen::VectorXd& residuals,
                        const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng) {
  TreeInfo info(tree, data.z, data.candidates, data.prior);
  return mh_tree_update(tree, info, data, residuals, weights, hyper, omega, rng);
}

MhResult mh_tree_update(Tree& tree, TreeInfo& info, const TreeData& data, const Eigen::VectorXd& residuals,
                        const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng) {
  Proposal proposal = propose_move(tree, info, data.context(), rng);
  MhResult result;
  result.kind = proposal.kind;
  if (!proposal.valid) return result;
  result.proposed = true;

  result.log_accept = tree_log_marginal(*proposal.info, residuals, weights, hyper, omega) -
                      tree_log_marginal(info, residuals, weights, hyper, omega) + proposal.log_prior_ratio +
                      proposal.log_proposal_ratio;
  if (result.log_accept >= 0.0 || std::log(rng.uniform()) < result.log_accept) {
    tree = std::move(proposal.tree);
    info = std::move(*proposal.info);
    result.accepted = true;
  }
  return result;
}

void sample_leaf_means(Tree& tree, const TreeData& data, const Eigen::VectorXd& residuals,
                       const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng) {
  sample_leaf_means(tree, TreeInfo(tree, data.z, data.candidates, data.prior), residuals, weights, hyper, omega,
                    rng);
}

void sample_leaf_means(Tree& tree, const TreeInfo& info, const Eigen::VectorXd& residuals,
                       const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng) {
  const auto stats = leaf_stats(info, residuals, weights);
  const double prior_prec = 1.0 / (hyper.sigma_mu * hyper.sigma_mu);
  for (int id : info.leaves()) {
    const LeafStats& s = stats[static_cast<std::size_t>(id)];
    const double post_prec = prior_prec + omega * s.sum_w;
    const double mean = (prior_prec * hyper.mu_mu + omega * s.sum_wr) / post_prec;
    tree.set_mu(id, rng.normal(mean, 1.0 / std::sqrt(post_prec)));
  }
}

ForestState::ForestState(int m, Index d, Index n_units, double init_mu) : d_(d) {
  if (m < 1) throw std::domain_error("bart: forest needs at least one tree");
  trees_.assign(static_cast<std::size_t>(m), Tree(d, init_mu));
  contrib_ = Eigen::MatrixXd::Constant(n_units, m, init_mu);
  fit_ = Eigen::VectorXd::Constant(n_units, init_mu * m);
}

void ForestState::replace(int j, Tree tree, const Eigen::MatrixXd& z) {
  auto col = contrib_.col(j);
  fit_ -= col;
  for (Index i = 0; i < z.rows(); ++i) col[i] = tree.predict(z.row(i));
  fit_ += col;
  trees_[static_cast<std::size_t>(j)] = std::move(tree);
}

void ForestState::refresh(const Eigen::MatrixXd& z) {
  for (int j = 0; j < size(); ++j) {
    for (Index i = 0; i < z.rows(); ++i) contrib_(i, j) = trees_[static_cast<std::size_t>(j)].predict(z.row(i));
  }
  fit_ = contrib_.rowwise().sum();
}

double forest_cate(const std::vector<Tree>& trees, const Eigen::VectorXd& z) {
  double out = 0.0;
  for (const Tree& t : trees) {
    if (z.size() != t.num_covariates()) throw std::domain_error("bart: covariate dimension mismatch");
    out += t.predict(z);
  }
  return out;
}

double forest_cate(const ForestState& forest, const Eigen::VectorXd& z) { return forest_cate(forest.trees(), z); }

}  // namespace dbart
