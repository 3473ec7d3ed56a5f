#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "dbart/data.hpp"
#include "dbart/rng.hpp"

namespace dbart {

// Left child receives z[var] <= threshold.
struct SplitRule {
  Index var = -1;
  double threshold = 0.0;
};

struct Node {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  bool alive = true;
  SplitRule rule;
  double mu = 0.0;

  bool is_leaf() const { return left < 0; }
};

// Full binary regression tree stored in an arena. Node 0 is the root; pruned
// slots are recycled by later grows, so node ids are stable but not dense.
class Tree {
 public:
  explicit Tree(Index num_covariates, double mu = 0.0);

  Index num_covariates() const { return num_covariates_; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t capacity() const { return nodes_.size(); }

  // Leaves in left-to-right order; internal nodes in preorder.
  std::vector<int> leaves() const;
  std::vector<int> internal_nodes() const;
  // Internal nodes whose children are both leaves.
  std::vector<int> prunable_nodes() const;
  // Internal nodes whose parent is internal (candidates for a rule swap).
  std::vector<int> swappable_nodes() const;

  int leaf_count() const;
  int internal_count() const { return leaf_count() - 1; }
  int depth() const;

  template <class Vec>
  int find_leaf(const Vec& z) const {
    int id = 0;
    while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
      const Node& nd = nodes_[static_cast<std::size_t>(id)];
      id = z(nd.rule.var) <= nd.rule.threshold ? nd.left : nd.right;
    }
    return id;
  }

  template <class Vec>
  double predict(const Vec& z) const {
    return nodes_[static_cast<std::size_t>(find_leaf(z))].mu;
  }

  void grow(int leaf, SplitRule rule, double mu_left = 0.0, double mu_right = 0.0);
  void prune(int node, double mu = 0.0);
  void set_rule(int node, SplitRule rule);
  void set_mu(int leaf, double mu);

  // Means in leaves() order.
  Eigen::VectorXd leaf_means() const;

 private:
  int allocate(int parent, int depth);

  Index num_covariates_;
  std::vector<Node> nodes_;
  std::vector<int> free_;
};

// Same split structure and rules (leaf means and arena layout ignored).
bool same_structure(const Tree& a, const Tree& b);

// Leaf ordinal (position in leaves()) reached by z.
std::size_t assign_region(const Tree& tree, const Eigen::VectorXd& z);

struct TreePrior {
  double alpha = 0.95;
  double beta = 2.0;
  int max_depth = 10;

  double split_probability(int depth) const;
};

// Untruncated structural prior: every leaf is treated as splittable.
double log_tree_prior(const Tree& tree, double alpha, double beta);

// Sorted unique values of every covariate over the units that carry
// likelihood weight; these are the only admissible split thresholds.
class SplitCandidates {
 public:
  SplitCandidates() = default;
  explicit SplitCandidates(const Eigen::MatrixXd& z);

  Index num_vars() const { return static_cast<Index>(values_.size()); }
  const std::vector<double>& values(Index var) const { return values_[static_cast<std::size_t>(var)]; }

  // Number of thresholds t with lo <= t < hi, and the k-th of them.
  std::size_t count_in(Index var, double lo, double hi) const;
  double nth_in(Index var, double lo, std::size_t k) const;

 private:
  std::vector<std::vector<double>> values_;
};

// Routing of the weighted units through a particular tree: node membership
// and per-node covariate ranges, from which the admissible split rules of
// every node follow.
class TreeInfo {
 public:
  TreeInfo(const Tree& tree, const Eigen::MatrixXd& z, const SplitCandidates& candidates,
           const TreePrior& prior);

  // False if some node has no units (empty child).
  bool valid() const { return valid_; }
  const std::vector<int>& members(int node) const { return members_[static_cast<std::size_t>(node)]; }

  // Variables with at least one admissible threshold at the node.
  int available_vars(int node) const;
  std::size_t available_cuts(int node, Index var) const;
  bool splittable(int node) const;
  // Smallest value of the covariate among the node's units.
  double lower(int node, Index var) const { return lo_[static_cast<std::size_t>(node)][var]; }

  const std::vector<int>& growable_leaves() const { return growable_; }
  const std::vector<int>& prunable() const { return prunable_; }
  const std::vector<int>& internal() const { return internal_; }
  const std::vector<int>& swappable() const { return swappable_; }
  const std::vector<int>& leaves() const { return leaves_; }

  // Structural log prior with nodes that cannot split (no admissible rule or
  // at max depth) contributing log 1.
  double log_structure_prior() const { return log_structure_; }
  // Sum over internal nodes of log P(variable) + log P(threshold | variable).
  double log_rule_probability() const { return log_rule_; }

 private:
  const SplitCandidates* candidates_;
  bool valid_ = true;
  double log_structure_ = 0.0;
  double log_rule_ = 0.0;
  int max_depth_ = 0;
  std::vector<int> depth_;
  std::vector<std::vector<std::size_t>> cuts_;
  std::vector<std::vector<int>> members_;
  std::vector<Eigen::VectorXd> lo_, hi_;
  std::vector<int> growable_, prunable_, internal_, swappable_, leaves_;
};

// Equal to the truncated structural prior of the whole tree.
double log_tree_prior(const Tree& tree, const TreeInfo& info);

enum class MoveKind { Grow = 0, Prune = 1, Change = 2, Swap = 3 };
constexpr std::array<double, 4> kMoveWeights{0.25, 0.25, 0.40, 0.10};
const char* move_name(MoveKind kind);

// Move-type probabilities at a tree, renormalized over the moves that are
// possible there.
std::array<double, 4> move_probabilities(const TreeInfo& info);

struct Proposal {
  MoveKind kind = MoveKind::Grow;
  Tree tree;
  double log_proposal_ratio = 0.0;
  double log_prior_ratio = 0.0;
  // False means "stay": no admissible move, or the move emptied a node.
  bool valid = false;
  int node = -1;
  // Routing summary of `tree`; present when valid.
  std::optional<TreeInfo> info;
};

// Data the proposal machinery needs: covariates of the weighted units, their
// threshold sets, and the structural prior.
struct MoveContext {
  const Eigen::MatrixXd& z;
  const SplitCandidates& candidates;
  TreePrior prior;
};

Proposal propose_move(const Tree& tree, const MoveContext& ctx, Rng& rng);
// Same, reusing the routing summary of `tree`.
Proposal propose_move(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, Rng& rng);

// Deterministic constructors used by propose_move; exposed for testing the
// ratio bookkeeping.
Proposal make_grow(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int leaf, SplitRule rule);
Proposal make_prune(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int node);
Proposal make_change(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int node, SplitRule rule);
Proposal make_swap(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int child);

}  // namespace dbart
