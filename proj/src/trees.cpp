#include "dbart/trees.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace dbart {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Tree::Tree(Index num_covariates, double mu) : num_covariates_(num_covariates) {
  if (num_covariates < 1) throw std::domain_error("trees: need at least one covariate");
  Node root;
  root.mu = mu;
  nodes_.push_back(root);
}

int Tree::allocate(int parent, int depth) {
  Node nd;
  nd.parent = parent;
  nd.depth = depth;
  if (!free_.empty()) {
    const int id = free_.back();
    free_.pop_back();
    nodes_[static_cast<std::size_t>(id)] = nd;
    return id;
  }
  nodes_.push_back(nd);
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<int> Tree::leaves() const {
  std::vector<int> out;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& nd = node(id);
    if (nd.is_leaf()) {
      out.push_back(id);
    } else {
      stack.push_back(nd.right);
      stack.push_back(nd.left);
    }
  }
  return out;
}

std::vector<int> Tree::internal_nodes() const {
  std::vector<int> out;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& nd = node(id);
    if (nd.is_leaf()) continue;
    out.push_back(id);
    stack.push_back(nd.right);
    stack.push_back(nd.left);
  }
  return out;
}

std::vector<int> Tree::prunable_nodes() const {
  std::vector<int> out;
  for (int id : internal_nodes()) {
    const Node& nd = node(id);
    if (node(nd.left).is_leaf() && node(nd.right).is_leaf()) out.push_back(id);
  }
  return out;
}

std::vector<int> Tree::swappable_nodes() const {
  std::vector<int> out;
  for (int id : internal_nodes()) {
    if (id != 0) out.push_back(id);
  }
  return out;
}

int Tree::leaf_count() const { return static_cast<int>(leaves().size()); }

int Tree::depth() const {
  int out = 0;
  for (int id : leaves()) out = std::max(out, node(id).depth);
  return out;
}

void Tree::grow(int leaf, SplitRule rule, double mu_left, double mu_right) {
  if (!node(leaf).alive || !node(leaf).is_leaf()) throw std::logic_error("trees: grow at a non-leaf");
  if (rule.var < 0 || rule.var >= num_covariates_) throw std::domain_error("trees: split variable out of range");
  const int depth = node(leaf).depth + 1;
  const int left = allocate(leaf, depth);
  const int right = allocate(leaf, depth);
  Node& nd = nodes_[static_cast<std::size_t>(leaf)];
  nd.left = left;
  nd.right = right;
  nd.rule = rule;
  nodes_[static_cast<std::size_t>(left)].mu = mu_left;
  nodes_[static_cast<std::size_t>(right)].mu = mu_right;
}

void Tree::prune(int id, double mu) {
  Node& nd = nodes_[static_cast<std::size_t>(id)];
  if (nd.is_leaf() || !node(nd.left).is_leaf() || !node(nd.right).is_leaf()) {
    throw std::logic_error("trees: prune needs two leaf children");
  }
  for (int child : {nd.left, nd.right}) {
    nodes_[static_cast<std::size_t>(child)].alive = false;
    free_.push_back(child);
  }
  nd.left = nd.right = -1;
  nd.rule = SplitRule{};
  nd.mu = mu;
}

void Tree::set_rule(int id, SplitRule rule) {
  if (node(id).is_leaf()) throw std::logic_error("trees: leaves have no rule");
  if (rule.var < 0 || rule.var >= num_covariates_) throw std::domain_error("trees: split variable out of range");
  nodes_[static_cast<std::size_t>(id)].rule = rule;
}

void Tree::set_mu(int leaf, double mu) {
  if (!node(leaf).is_leaf()) throw std::logic_error("trees: set_mu on an internal node");
  nodes_[static_cast<std::size_t>(leaf)].mu = mu;
}

Eigen::VectorXd Tree::leaf_means() const {
  const auto ids = leaves();
  Eigen::VectorXd out(static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) out[static_cast<Index>(k)] = node(ids[k]).mu;
  return out;
}

bool same_structure(const Tree& a, const Tree& b) {
  std::function<bool(int, int)> eq = [&](int x, int y) {
    const Node& nx = a.node(x);
    const Node& ny = b.node(y);
    if (nx.is_leaf() != ny.is_leaf()) return false;
    if (nx.is_leaf()) return true;
    return nx.rule.var == ny.rule.var && nx.rule.threshold == ny.rule.threshold &&
           eq(nx.left, ny.left) && eq(nx.right, ny.right);
  };
  return eq(0, 0);
}

std::size_t assign_region(const Tree& tree, const Eigen::VectorXd& z) {
  if (z.size() != tree.num_covariates()) throw std::domain_error("trees: covariate dimension mismatch");
  const int leaf = tree.find_leaf(z);
  const auto ids = tree.leaves();
  return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), leaf) - ids.begin());
}

double TreePrior::split_probability(int depth) const {
  return alpha * std::pow(1.0 + depth, -beta);
}

double log_tree_prior(const Tree& tree, double alpha, double beta) {
  const TreePrior prior{alpha, beta, std::numeric_limits<int>::max()};
  double out = 0.0;
  for (int id : tree.internal_nodes()) out += std::log(prior.split_probability(tree.node(id).depth));
  for (int id : tree.leaves()) out += std::log1p(-prior.split_probability(tree.node(id).depth));
  return out;
}

double log_tree_prior(const Tree&, const TreeInfo& info) { return info.log_structure_prior(); }

SplitCandidates::SplitCandidates(const Eigen::MatrixXd& z) {
  values_.resize(static_cast<std::size_t>(z.cols()));
  for (Index v = 0; v < z.cols(); ++v) {
    auto& vals = values_[static_cast<std::size_t>(v)];
    vals.assign(z.col(v).data(), z.col(v).data() + z.rows());
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  }
}

std::size_t SplitCandidates::count_in(Index var, double lo, double hi) const {
  const auto& vals = values(var);
  const auto a = std::lower_bound(vals.begin(), vals.end(), lo);
  const auto b = std::lower_bound(vals.begin(), vals.end(), hi);
  return b > a ? static_cast<std::size_t>(b - a) : 0;
}

double SplitCandidates::nth_in(Index var, double lo, std::size_t k) const {
  const auto& vals = values(var);
  const auto a = std::lower_bound(vals.begin(), vals.end(), lo);
  return *(a + static_cast<std::ptrdiff_t>(k));
}

TreeInfo::TreeInfo(const Tree& tree, const Eigen::MatrixXd& z, const SplitCandidates& candidates,
                   const TreePrior& prior)
    : candidates_(&candidates), max_depth_(prior.max_depth) {
  const std::size_t slots = tree.capacity();
  const Index d = z.cols();
  members_.assign(slots, {});
  depth_.assign(slots, 0);
  lo_.assign(slots, Eigen::VectorXd());
  hi_.assign(slots, Eigen::VectorXd());
  cuts_.assign(slots, {});

  for (Index i = 0; i < z.rows(); ++i) {
    int id = 0;
    while (true) {
      members_[static_cast<std::size_t>(id)].push_back(static_cast<int>(i));
      const Node& nd = tree.node(id);
      if (nd.is_leaf()) break;
      id = z(i, nd.rule.var) <= nd.rule.threshold ? nd.left : nd.right;
    }
  }

  internal_ = tree.internal_nodes();
  leaves_ = tree.leaves();
  prunable_ = tree.prunable_nodes();
  swappable_ = tree.swappable_nodes();

  auto summarize = [&](int id) {
    const auto s = static_cast<std::size_t>(id);
    depth_[s] = tree.node(id).depth;
    const auto& mem = members_[s];
    if (mem.empty()) {
      valid_ = false;
      return;
    }
    lo_[s] = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
    hi_[s] = Eigen::VectorXd::Constant(d, -std::numeric_limits<double>::infinity());
    for (int i : mem) {
      for (Index v = 0; v < d; ++v) {
        const double value = z(i, v);
        if (value < lo_[s][v]) lo_[s][v] = value;
        if (value > hi_[s][v]) hi_[s][v] = value;
      }
    }
    cuts_[s].resize(static_cast<std::size_t>(d));
    for (Index v = 0; v < d; ++v) cuts_[s][static_cast<std::size_t>(v)] = candidates.count_in(v, lo_[s][v], hi_[s][v]);
  };
  for (int id : internal_) summarize(id);
  for (int id : leaves_) summarize(id);

  if (!valid_) {
    log_structure_ = kNegInf;
    log_rule_ = kNegInf;
    return;
  }
  for (int id : internal_) {
    log_structure_ += std::log(prior.split_probability(depth_[static_cast<std::size_t>(id)]));
    const Index var = tree.node(id).rule.var;
    const std::size_t cuts = available_cuts(id, var);
    log_rule_ += cuts == 0 ? kNegInf : -std::log(static_cast<double>(available_vars(id))) - std::log(static_cast<double>(cuts));
  }
  for (int id : leaves_) {
    if (splittable(id)) {
      log_structure_ += std::log1p(-prior.split_probability(depth_[static_cast<std::size_t>(id)]));
      growable_.push_back(id);
    }
  }
}

int TreeInfo::available_vars(int node) const {
  int count = 0;
  for (std::size_t c : cuts_[static_cast<std::size_t>(node)]) count += c > 0 ? 1 : 0;
  return count;
}

std::size_t TreeInfo::available_cuts(int node, Index var) const {
  const auto& cuts = cuts_[static_cast<std::size_t>(node)];
  return cuts.empty() ? 0 : cuts[static_cast<std::size_t>(var)];
}

bool TreeInfo::splittable(int node) const {
  const auto s = static_cast<std::size_t>(node);
  return !members_[s].empty() && depth_[s] < max_depth_ && available_vars(node) > 0;
}

const char* move_name(MoveKind kind) {
  switch (kind) {
    case MoveKind::Grow: return "grow";
    case MoveKind::Prune: return "prune";
    case MoveKind::Change: return "change";
    case MoveKind::Swap: return "swap";
  }
  return "?";
}

std::array<double, 4> move_probabilities(const TreeInfo& info) {
  std::array<double, 4> p{};
  p[0] = info.growable_leaves().empty() ? 0.0 : kMoveWeights[0];
  p[1] = info.prunable().empty() ? 0.0 : kMoveWeights[1];
  p[2] = info.internal().empty() ? 0.0 : kMoveWeights[2];
  p[3] = info.swappable().empty() ? 0.0 : kMoveWeights[3];
  const double total = p[0] + p[1] + p[2] + p[3];
  if (total > 0.0) {
    for (double& v : p) v /= total;
  }
  return p;
}

namespace {

double log_of(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_count(std::size_t n) { return std::log(static_cast<double>(n)); }

// Log probability of drawing `rule` uniformly at `node`: variable first,
// then threshold.
double log_rule_draw(const TreeInfo& info, int node, Index var) {
  const std::size_t cuts = info.available_cuts(node, var);
  if (cuts == 0) return kNegInf;
  return -log_count(static_cast<std::size_t>(info.available_vars(node))) - log_count(cuts);
}

Proposal finish(MoveKind kind, Tree proposed, int node, const TreeInfo& before, TreeInfo after,
                double log_q_forward, double log_q_reverse) {
  Proposal p{kind, std::move(proposed), 0.0, 0.0, false, -1, std::nullopt};
  p.node = node;
  p.valid = after.valid() && std::isfinite(log_q_forward) && std::isfinite(log_q_reverse);
  if (!p.valid) return p;
  p.log_prior_ratio = after.log_structure_prior() - before.log_structure_prior();
  p.log_proposal_ratio = (log_q_reverse - log_q_forward) +
                         (after.log_rule_probability() - before.log_rule_probability());
  p.info = std::move(after);
  return p;
}

Proposal stay(const Tree& tree, MoveKind kind) {
  Proposal p{kind, tree, 0.0, 0.0, false, -1, std::nullopt};
  p.valid = false;
  return p;
}

SplitRule draw_rule(const TreeInfo& info, const MoveContext& ctx, int node, Rng& rng) {
  std::vector<Index> vars;
  for (Index v = 0; v < ctx.candidates.num_vars(); ++v) {
    if (info.available_cuts(node, v) > 0) vars.push_back(v);
  }
  const Index var = vars[rng.index(vars.size())];
  const std::size_t k = rng.index(info.available_cuts(node, var));
  return SplitRule{var, ctx.candidates.nth_in(var, info.lower(node, var), k)};
}

}  // namespace

Proposal make_grow(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int leaf, SplitRule rule) {
  Tree proposed = tree;
  proposed.grow(leaf, rule);
  TreeInfo after(proposed, ctx.z, ctx.candidates, ctx.prior);
  if (!after.valid()) return stay(tree, MoveKind::Grow);
  const double fwd = log_of(move_probabilities(info)[0]) - log_count(info.growable_leaves().size()) +
                     log_rule_draw(info, leaf, rule.var);
  const double rev = log_of(move_probabilities(after)[1]) - log_count(after.prunable().size());
  return finish(MoveKind::Grow, std::move(proposed), leaf, info, std::move(after), fwd, rev);
}

Proposal make_prune(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int node) {
  const SplitRule old_rule = tree.node(node).rule;
  Tree proposed = tree;
  proposed.prune(node);
  TreeInfo after(proposed, ctx.z, ctx.candidates, ctx.prior);
  if (!after.valid()) return stay(tree, MoveKind::Prune);
  const double fwd = log_of(move_probabilities(info)[1]) - log_count(info.prunable().size());
  const double rev = after.growable_leaves().empty()
                         ? kNegInf
                         : log_of(move_probabilities(after)[0]) - log_count(after.growable_leaves().size()) +
                               log_rule_draw(after, node, old_rule.var);
  return finish(MoveKind::Prune, std::move(proposed), node, info, std::move(after), fwd, rev);
}

Proposal make_change(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int node, SplitRule rule) {
  const SplitRule old_rule = tree.node(node).rule;
  Tree proposed = tree;
  proposed.set_rule(node, rule);
  TreeInfo after(proposed, ctx.z, ctx.candidates, ctx.prior);
  if (!after.valid()) return stay(tree, MoveKind::Change);
  const double fwd = log_of(move_probabilities(info)[2]) - log_count(info.internal().size()) +
                     log_rule_draw(info, node, rule.var);
  const double rev = log_of(move_probabilities(after)[2]) - log_count(after.internal().size()) +
                     log_rule_draw(after, node, old_rule.var);
  return finish(MoveKind::Change, std::move(proposed), node, info, std::move(after), fwd, rev);
}

Proposal make_swap(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, int child) {
  const int parent = tree.node(child).parent;
  Tree proposed = tree;
  proposed.set_rule(parent, tree.node(child).rule);
  proposed.set_rule(child, tree.node(parent).rule);
  TreeInfo after(proposed, ctx.z, ctx.candidates, ctx.prior);
  if (!after.valid()) return stay(tree, MoveKind::Swap);
  const double fwd = log_of(move_probabilities(info)[3]) - log_count(info.swappable().size());
  const double rev = log_of(move_probabilities(after)[3]) - log_count(after.swappable().size());
  return finish(MoveKind::Swap, std::move(proposed), child, info, std::move(after), fwd, rev);
}

Proposal propose_move(const Tree& tree, const MoveContext& ctx, Rng& rng) {
  return propose_move(tree, TreeInfo(tree, ctx.z, ctx.candidates, ctx.prior), ctx, rng);
}

Proposal propose_move(const Tree& tree, const TreeInfo& info, const MoveContext& ctx, Rng& rng) {
  const auto probs = move_probabilities(info);
  if (!info.valid() || probs[0] + probs[1] + probs[2] + probs[3] <= 0.0) return stay(tree, MoveKind::Grow);

  const double u = rng.uniform();
  double acc = 0.0;
  int k = 0;
  for (; k < 3; ++k) {
    acc += probs[static_cast<std::size_t>(k)];
    if (u < acc) break;
  }
  while (probs[static_cast<std::size_t>(k)] <= 0.0) --k;  // guards u landing on rounding slack

  switch (static_cast<MoveKind>(k)) {
    case MoveKind::Grow: {
      const auto& leaves = info.growable_leaves();
      const int leaf = leaves[rng.index(leaves.size())];
      return make_grow(tree, info, ctx, leaf, draw_rule(info, ctx, leaf, rng));
    }
    case MoveKind::Prune: {
      const auto& nodes = info.prunable();
      return make_prune(tree, info, ctx, nodes[rng.index(nodes.size())]);
    }
    case MoveKind::Change: {
      const auto& nodes = info.internal();
      const int node = nodes[rng.index(nodes.size())];
      return make_change(tree, info, ctx, node, draw_rule(info, ctx, node, rng));
    }
    case MoveKind::Swap: {
      const auto& nodes = info.swappable();
      return make_swap(tree, info, ctx, nodes[rng.index(nodes.size())]);
    }
  }
  return stay(tree, MoveKind::Grow);
}

}  // namespace dbart
