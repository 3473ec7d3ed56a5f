#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dbart/data.hpp"
#include "dbart/rng.hpp"
#include "dbart/trees.hpp"

namespace dbart {

// Normal leaf prior N(mu_mu, sigma_mu^2) plus the tree-count and split-prior
// settings of the forest.
struct LeafHyper {
  double mu_mu = 0.0;
  double sigma_mu = 1.0;
  int m = 20;
  double alpha = 0.95;
  double beta = 2.0;
};

// Leaf-prior elicitation from the outcome range on both sides of the cutoff.
// Windows are (c - delta, c) and (c, c + delta); an empty window doubles
// delta, up to 10 times.
LeafHyper elicit_leaf_prior(const Dataset& ds, double delta, double k = 2.0, int m = 20);

struct LeafStats {
  double sum_w = 0.0;
  double sum_wr = 0.0;
  double sum_wr2 = 0.0;
  double count = 0.0;
};

// Log marginal likelihood of one leaf with its mean integrated out against
// the leaf prior, under the kernel-weighted Gaussian with precision omega.
double leaf_log_marginal(const LeafStats& stats, const LeafHyper& hyper, double omega);

// Units entering the tree likelihood (positive weight), their covariates and
// the admissible thresholds derived from them.
struct TreeData {
  Eigen::MatrixXd z;
  SplitCandidates candidates;
  TreePrior prior;

  TreeData(Eigen::MatrixXd z_active, TreePrior tree_prior)
      : z(std::move(z_active)), candidates(z), prior(tree_prior) {}

  MoveContext context() const { return MoveContext{z, candidates, prior}; }
};

// Leaf statistics keyed by node id; residuals and weights are aligned with
// the rows of TreeData::z.
std::vector<LeafStats> leaf_stats(const TreeInfo& info, const Eigen::VectorXd& residuals,
                                  const Eigen::VectorXd& weights);

// Sum of leaf_log_marginal over the leaves of the tree.
double tree_log_marginal(const TreeInfo& info, const Eigen::VectorXd& residuals, const Eigen::VectorXd& weights,
                         const LeafHyper& hyper, double omega);

struct MhResult {
  MoveKind kind = MoveKind::Grow;
  bool proposed = false;  // false when the proposal was a "stay"
  bool accepted = false;
  double log_accept = 0.0;
};

// One Metropolis-Hastings structure update of `tree` against its partial
// residuals with the leaf means marginalized. Leaf means are left untouched.
MhResult mh_tree_update(Tree& tree, const TreeData& data, const Eigen::VectorXd& residuals,
                        const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng);
// Same; `info` describes `tree` on entry and is kept in sync on exit.
MhResult mh_tree_update(Tree& tree, TreeInfo& info, const TreeData& data, const Eigen::VectorXd& residuals,
                        const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng);

// Draws every leaf mean from its Gaussian full conditional.
void sample_leaf_means(Tree& tree, const TreeData& data, const Eigen::VectorXd& residuals,
                       const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng);
void sample_leaf_means(Tree& tree, const TreeInfo& info, const Eigen::VectorXd& residuals,
                       const Eigen::VectorXd& weights, const LeafHyper& hyper, double omega, Rng& rng);

// Sum of m trees with a cached per-unit fit over the rows of a TreeData.
class ForestState {
 public:
  ForestState(int m, Index d, Index n_units, double init_mu = 0.0);

  int size() const { return static_cast<int>(trees_.size()); }
  Index num_covariates() const { return d_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const Tree& tree(int j) const { return trees_[static_cast<std::size_t>(j)]; }

  // Cached f_i = sum_j g(z_i | T_j, M_j) and the per-tree contributions.
  const Eigen::VectorXd& fit() const { return fit_; }
  Eigen::VectorXd contribution(int j) const { return contrib_.col(j); }

  // Replaces tree j and updates the cache incrementally.
  void replace(int j, Tree tree, const Eigen::MatrixXd& z);
  // Recomputes the cache from scratch.
  void refresh(const Eigen::MatrixXd& z);

 private:
  Index d_;
  std::vector<Tree> trees_;
  Eigen::MatrixXd contrib_;  // n_units x m
  Eigen::VectorXd fit_;
};

// tau(z): sum of routed leaf means.
double forest_cate(const ForestState& forest, const Eigen::VectorXd& z);
double forest_cate(const std::vector<Tree>& trees, const Eigen::VectorXd& z);

}  // namespace dbart
