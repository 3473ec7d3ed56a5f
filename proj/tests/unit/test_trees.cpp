#include <doctest.h>

#include <cmath>
#include <functional>

#include "dbart/trees.hpp"

using namespace dbart;

namespace {

// Covariates of n units; column j takes values in {0, ..., levels[j] - 1}.
Eigen::MatrixXd grid_covariates(Index n, const std::vector<int>& levels, Rng& rng) {
  Eigen::MatrixXd z(n, static_cast<Index>(levels.size()));
  for (Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < levels.size(); ++j) {
      // first rows cover every level so all thresholds exist
      z(i, static_cast<Index>(j)) = i < levels[j] ? static_cast<double>(i) : static_cast<double>(rng.index(levels[j]));
    }
  }
  return z;
}

Eigen::MatrixXd continuous_covariates(Index n, Index d, Rng& rng) {
  Eigen::MatrixXd z(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  }
  return z;
}

// Grows a random tree by repeatedly applying valid random GROW moves.
Tree random_tree(const MoveContext& ctx, int grows, Rng& rng) {
  Tree tree(ctx.z.cols());
  for (int g = 0; g < grows; ++g) {
    const TreeInfo info(tree, ctx.z, ctx.candidates, ctx.prior);
    if (info.growable_leaves().empty()) break;
    const int leaf = info.growable_leaves()[rng.index(info.growable_leaves().size())];
    std::vector<Index> vars;
    for (Index v = 0; v < ctx.z.cols(); ++v) {
      if (info.available_cuts(leaf, v) > 0) vars.push_back(v);
    }
    const Index var = vars[rng.index(vars.size())];
    const double t = ctx.candidates.nth_in(var, info.lower(leaf, var), rng.index(info.available_cuts(leaf, var)));
    const Proposal p = make_grow(tree, info, ctx, leaf, SplitRule{var, t});
    if (p.valid) tree = p.tree;
  }
  return tree;
}

// Whether z satisfies every rule on the path from the root to `leaf`.
bool in_region(const Tree& tree, int leaf, const Eigen::VectorXd& z) {
  int child = leaf;
  for (int id = tree.node(leaf).parent; id >= 0; child = id, id = tree.node(id).parent) {
    const Node& nd = tree.node(id);
    const bool goes_left = z[nd.rule.var] <= nd.rule.threshold;
    if (goes_left != (nd.left == child)) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("trees") {
  TEST_CASE("assign_region routing") {
    Tree stump(2);
    CHECK(assign_region(stump, Eigen::Vector2d(3.0, -1.0)) == 0);

    Tree t(1);
    t.grow(0, SplitRule{0, 0.5});
    CHECK(assign_region(t, Eigen::VectorXd::Constant(1, 0.2)) == 0);
    CHECK(assign_region(t, Eigen::VectorXd::Constant(1, 0.9)) == 1);

    Tree onehot(1);
    onehot.grow(0, SplitRule{0, 0.0});
    CHECK(assign_region(onehot, Eigen::VectorXd::Constant(1, 1.0)) == 1);
    CHECK(assign_region(onehot, Eigen::VectorXd::Constant(1, 0.0)) == 0);

    CHECK_THROWS_AS(assign_region(t, Eigen::Vector2d(0.0, 0.0)), std::domain_error);
  }

  TEST_CASE("log_tree_prior examples") {
    Tree stump(1);
    CHECK(log_tree_prior(stump, 0.95, 2.0) == doctest::Approx(std::log(0.05)).epsilon(1e-14));
    Tree t(1);
    t.grow(0, SplitRule{0, 0.0});
    CHECK(log_tree_prior(t, 0.95, 2.0) ==
          doctest::Approx(std::log(0.95) + 2.0 * std::log(0.7625)).epsilon(1e-14));
    // more splits, smaller prior as alpha shrinks
    Tree t2 = t;
    t2.grow(t.leaves()[0], SplitRule{0, -1.0});
    for (double a : {0.5, 0.1, 0.01}) {
      CHECK(log_tree_prior(t2, a, 2.0) < log_tree_prior(t, a, 2.0));
      CHECK(log_tree_prior(t, a, 2.0) < log_tree_prior(stump, a, 2.0));
    }
  }

  TEST_CASE("full binary tree bookkeeping") {
    Rng rng(4);
    const Eigen::MatrixXd z = continuous_covariates(200, 3, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};
    for (int rep = 0; rep < 50; ++rep) {
      const Tree t = random_tree(ctx, 8, rng);
      CHECK(t.leaf_count() == t.internal_count() + 1);
      CHECK(static_cast<int>(t.internal_nodes().size()) == t.internal_count());
    }
  }

  TEST_CASE("partition property") {
    Rng rng(5);
    const Eigen::MatrixXd z = continuous_covariates(300, 3, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};
    for (int rep = 0; rep < 20; ++rep) {
      const Tree t = random_tree(ctx, 10, rng);
      const auto leaves = t.leaves();
      for (int s = 0; s < 500; ++s) {
        Eigen::VectorXd q(3);
        for (Index j = 0; j < 3; ++j) q[j] = 1.5 * rng.normal();
        int hits = 0;
        for (int leaf : leaves) hits += in_region(t, leaf, q) ? 1 : 0;
        CHECK(hits == 1);
        CHECK(in_region(t, t.find_leaf(q), q));
      }
    }
  }

  TEST_CASE("grow then prune restores the tree with negated ratios") {
    Rng rng(6);
    const Eigen::MatrixXd z = continuous_covariates(150, 2, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};

    // depth-0 stump
    const Tree stump(2);
    const TreeInfo si(stump, z, cands, ctx.prior);
    const Proposal g = make_grow(stump, si, ctx, 0, SplitRule{0, cands.values(0)[70]});
    REQUIRE(g.valid);
    const TreeInfo gi(g.tree, z, cands, ctx.prior);
    const Proposal p = make_prune(g.tree, gi, ctx, 0);
    REQUIRE(p.valid);
    CHECK(same_structure(p.tree, stump));
    CHECK(g.log_proposal_ratio == doctest::Approx(-p.log_proposal_ratio).epsilon(1e-12));
    CHECK(g.log_prior_ratio == doctest::Approx(-p.log_prior_ratio).epsilon(1e-12));

    // random pairs
    int checked = 0;
    for (int rep = 0; rep < 300; ++rep) {
      const Tree t = random_tree(ctx, static_cast<int>(rng.index(6)), rng);
      const TreeInfo info(t, z, cands, ctx.prior);
      if (info.growable_leaves().empty()) continue;
      const int leaf = info.growable_leaves()[rng.index(info.growable_leaves().size())];
      const Index var = static_cast<Index>(rng.index(2));
      if (info.available_cuts(leaf, var) == 0) continue;
      const double th = cands.nth_in(var, info.lower(leaf, var), rng.index(info.available_cuts(leaf, var)));
      const Proposal gp = make_grow(t, info, ctx, leaf, SplitRule{var, th});
      if (!gp.valid) continue;
      const TreeInfo ginfo(gp.tree, z, cands, ctx.prior);
      const Proposal pp = make_prune(gp.tree, ginfo, ctx, leaf);
      REQUIRE(pp.valid);
      CHECK(same_structure(pp.tree, t));
      CHECK(gp.log_proposal_ratio + gp.log_prior_ratio ==
            doctest::Approx(-(pp.log_proposal_ratio + pp.log_prior_ratio)).epsilon(1e-10));
      ++checked;
    }
    CHECK(checked > 100);
  }

  TEST_CASE("change and swap ratios are antisymmetric") {
    Rng rng(7);
    const Eigen::MatrixXd z = continuous_covariates(150, 2, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};
    int checked = 0;
    for (int rep = 0; rep < 300; ++rep) {
      const Tree t = random_tree(ctx, 2 + static_cast<int>(rng.index(5)), rng);
      const TreeInfo info(t, z, cands, ctx.prior);
      const auto& internal = info.internal();
      if (internal.empty()) continue;
      const int node = internal[rng.index(internal.size())];
      const Index var = static_cast<Index>(rng.index(2));
      if (info.available_cuts(node, var) == 0) continue;
      const double th = cands.nth_in(var, info.lower(node, var), rng.index(info.available_cuts(node, var)));
      const Proposal c = make_change(t, info, ctx, node, SplitRule{var, th});
      if (!c.valid) continue;
      const TreeInfo cinfo(c.tree, z, cands, ctx.prior);
      const Proposal back = make_change(c.tree, cinfo, ctx, node, t.node(node).rule);
      REQUIRE(back.valid);
      CHECK(same_structure(back.tree, t));
      CHECK(c.log_proposal_ratio + c.log_prior_ratio ==
            doctest::Approx(-(back.log_proposal_ratio + back.log_prior_ratio)).epsilon(1e-10));
      ++checked;

      if (info.swappable().empty()) continue;
      const int child = info.swappable()[rng.index(info.swappable().size())];
      const Proposal s = make_swap(t, info, ctx, child);
      if (!s.valid) continue;
      const TreeInfo sinfo(s.tree, z, cands, ctx.prior);
      const Proposal sback = make_swap(s.tree, sinfo, ctx, child);
      if (!sback.valid) continue;
      CHECK(same_structure(sback.tree, t));
      CHECK(s.log_proposal_ratio + s.log_prior_ratio ==
            doctest::Approx(-(sback.log_proposal_ratio + sback.log_prior_ratio)).epsilon(1e-10));
    }
    CHECK(checked > 50);
  }

  TEST_CASE("prior normalization on an enumerable space") {
    // Exhaustive enumeration of all trees reachable under the truncated prior.
    auto total_mass = [](const Eigen::MatrixXd& z, int max_depth) {
      const SplitCandidates cands(z);
      const TreePrior prior{0.95, 2.0, max_depth};
      double mass = 0.0;
      int trees = 0;
      std::function<void(const Tree&, std::vector<int>)> expand = [&](const Tree& t, std::vector<int> pending) {
        if (pending.empty()) {
          const TreeInfo info(t, z, cands, prior);
          REQUIRE(info.valid());
          mass += std::exp(info.log_structure_prior() + info.log_rule_probability());
          ++trees;
          return;
        }
        const int leaf = pending.back();
        pending.pop_back();
        expand(t, pending);
        const TreeInfo info(t, z, cands, prior);
        if (!info.splittable(leaf)) return;
        for (Index v = 0; v < z.cols(); ++v) {
          for (std::size_t k = 0; k < info.available_cuts(leaf, v); ++k) {
            Tree g = t;
            g.grow(leaf, SplitRule{v, cands.nth_in(v, info.lower(leaf, v), k)});
            auto next = pending;
            next.push_back(g.node(leaf).left);
            next.push_back(g.node(leaf).right);
            expand(g, next);
          }
        }
      };
      expand(Tree(z.cols()), {0});
      return std::pair{mass, trees};
    };

    Rng rng(9);
    // 1 binary covariate, depth <= 1: stump + one split
    const auto [m1, n1] = total_mass(grid_covariates(8, {2}, rng), 1);
    CHECK(n1 == 2);
    CHECK(std::abs(m1 - 1.0) < 1e-10);
    // richer spaces
    const auto [m2, n2] = total_mass(grid_covariates(12, {4}, rng), 3);
    CHECK(n2 > 5);
    CHECK(std::abs(m2 - 1.0) < 1e-10);
    const auto [m3, n3] = total_mass(grid_covariates(12, {3, 2}, rng), 2);
    CHECK(n3 > 5);
    CHECK(std::abs(m3 - 1.0) < 1e-10);
  }

  TEST_CASE("stump proposals never prune") {
    Rng rng(10);
    const Eigen::MatrixXd z = continuous_covariates(50, 2, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};
    const Tree stump(2);
    const TreeInfo info(stump, z, cands, ctx.prior);
    const auto probs = move_probabilities(info);
    CHECK(probs[0] == 1.0);
    for (int s = 0; s < 2000; ++s) CHECK(propose_move(stump, ctx, rng).kind == MoveKind::Grow);
  }

  TEST_CASE("proposal frequencies, one binary covariate, depth <= 1") {
    Rng rng(11);
    const Eigen::MatrixXd z = grid_covariates(8, {2}, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{0.95, 2.0, 1}};
    Tree split(1);
    split.grow(0, SplitRule{0, 0.0});
    const TreeInfo info(split, z, cands, ctx.prior);
    const auto probs = move_probabilities(info);
    // grow and swap are impossible here: prune 0.25 and change 0.40 renormalized
    CHECK(probs[0] == 0.0);
    CHECK(probs[3] == 0.0);
    CHECK(probs[1] == doctest::Approx(0.25 / 0.65));
    CHECK(probs[2] == doctest::Approx(0.40 / 0.65));

    const int draws = 100000;
    std::array<int, 4> counts{};
    for (int s = 0; s < draws; ++s) ++counts[static_cast<std::size_t>(propose_move(split, info, ctx, rng).kind)];
    for (std::size_t k = 0; k < 4; ++k) {
      const double p = probs[k];
      const double se = std::sqrt(p * (1.0 - p) / draws);
      CHECK(std::abs(static_cast<double>(counts[k]) / draws - p) <= 3.0 * se + 1e-12);
    }
  }

  TEST_CASE("proposal frequencies on a deeper tree match move_probabilities") {
    Rng rng(12);
    const Eigen::MatrixXd z = continuous_covariates(200, 2, rng);
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};
    const Tree t = random_tree(ctx, 4, rng);
    const TreeInfo info(t, z, cands, ctx.prior);
    const auto probs = move_probabilities(info);
    const int draws = 100000;
    std::array<int, 4> counts{};
    for (int s = 0; s < draws; ++s) ++counts[static_cast<std::size_t>(propose_move(t, info, ctx, rng).kind)];
    double total = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      total += probs[k];
      const double se = std::sqrt(probs[k] * (1.0 - probs[k]) / draws);
      CHECK(std::abs(static_cast<double>(counts[k]) / draws - probs[k]) <= 3.0 * se + 1e-12);
    }
    CHECK(total == doctest::Approx(1.0));
  }

  TEST_CASE("empty-child proposals are stays") {
    Rng rng(13);
    Eigen::MatrixXd z(6, 1);
    z << 0, 0, 0, 1, 1, 1;
    const SplitCandidates cands(z);
    const MoveContext ctx{z, cands, TreePrior{}};
    const Tree stump(1);
    const TreeInfo info(stump, z, cands, ctx.prior);
    // threshold 1 sends everything left
    const Proposal p = make_grow(stump, info, ctx, 0, SplitRule{0, 1.0});
    CHECK_FALSE(p.valid);
  }
}
