#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "dbart/bart.hpp"
#include "dbart/data.hpp"
#include "dbart/locallinear.hpp"
#include "dbart/rng.hpp"

namespace dbart {

struct SamplerConfig {
  int q = 1;
  int m = 20;
  int n_iter = 5000;  // total sweeps, burn-in included
  int n_burn = 500;
  int thin = 1;
  double h = 1.0;
  double delta_multiplier = 0.1;  // elicitation window, in units of sd(x)
  double k = 2.0;
  double alpha = 0.95;
  double beta = 2.0;
  int max_depth = 10;
  std::optional<LocalLinearPrior> prior;  // defaults(q, d) when unset
  std::optional<LeafHyper> leaf_hyper;    // elicited from the data when unset
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;  // chain id for seed splitting

  void validate() const;
  int retained() const { return (n_iter - n_burn + thin - 1) / thin; }
};

struct AcceptanceCounts {
  std::array<long, 4> proposed{};
  std::array<long, 4> accepted{};
  long stays = 0;
};

struct PosteriorDraws {
  Eigen::MatrixXd tau;  // retained draws x targets
  std::vector<Eigen::MatrixXd> B;
  Eigen::VectorXd omega;
  std::vector<Index> eval_units;
  Eigen::MatrixXd eval_residuals;  // retained draws x eval units: y - W tau(z) - x'Bz~
  AcceptanceCounts acceptance;

  Index draws() const { return omega.size(); }
};

struct CateSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Backfitting Gibbs sampler over (trees, B, omega). Only in-window units enter
// the likelihood; among them only treated units inform the trees.
class GibbsSampler {
 public:
  // Initial state: m stumps with mean 0, B = M0, omega = nu0 / eta0.
  GibbsSampler(const SamplerConfig& config, const Dataset& ds);

  // One sweep: trees 1..m, then B, then omega.
  void step(Rng& rng);

  const SamplerConfig& config() const { return config_; }
  const ForestState& forest() const { return forest_; }
  const LocalLinearState& local_linear() const { return state_; }
  const LeafHyper& leaf_hyper() const { return hyper_; }
  const LocalLinearPrior& prior() const { return prior_; }
  const AcceptanceCounts& acceptance() const { return counts_; }
  int sweeps() const { return sweeps_; }

  // In-window unit indices and the cached residual y - W tau(z) - x'Bz~ on them.
  const std::vector<Index>& window() const { return window_; }
  const Eigen::VectorXd& residuals() const { return resid_; }

 private:
  void refresh_residuals();

  SamplerConfig config_;
  const Dataset* ds_;
  LeafHyper hyper_;
  LocalLinearPrior prior_;

  std::vector<Index> window_;
  std::vector<Index> tree_row_;  // window position -> TreeData row, or -1
  Eigen::VectorXd y_window_;
  Eigen::VectorXd y_treated_;
  std::optional<LocalDesign> design_;
  std::optional<TreeData> tree_data_;
  Eigen::VectorXd tree_weights_;
  std::vector<TreeInfo> infos_;

  ForestState forest_;
  LocalLinearState state_;
  Eigen::VectorXd xbz_;
  Eigen::VectorXd resid_;
  AcceptanceCounts counts_;
  int sweeps_ = 0;
};

// Runs one chain from a fresh initialization. tau is recorded at every target
// row; residuals at `eval_units` (any units of ds) are recorded for scoring.
PosteriorDraws run_chain(const SamplerConfig& config, const Dataset& ds, const Eigen::MatrixXd& targets,
                         const std::vector<Index>& eval_units = {});

// Posterior mean and equal-tailed interval per target; quantiles by linear
// interpolation between order statistics.
CateSummary summarize(const PosteriorDraws& draws, double level = 0.95);

// Linear-interpolation quantile of a sample, p in [0, 1].
double quantile(std::vector<double> values, double p);

}  // namespace dbart
