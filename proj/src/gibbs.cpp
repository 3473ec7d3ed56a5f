#include "dbart/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dbart/errors.hpp"

namespace dbart {

void SamplerConfig::validate() const {
  if (q < 1) throw ConfigError("gibbs", "q must be >= 1");
  if (m < 1) throw ConfigError("gibbs", "m must be >= 1");
  if (n_burn < 0 || n_iter <= n_burn) throw ConfigError("gibbs", "need n_iter > n_burn >= 0");
  if (thin < 1) throw ConfigError("gibbs", "thin must be >= 1");
  if (!(h > 0.0)) throw ConfigError("gibbs", "bandwidth must be positive");
  if (!(delta_multiplier > 0.0) || !(k > 0.0)) throw ConfigError("gibbs", "delta multiplier and k must be positive");
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta >= 0.0)) throw ConfigError("gibbs", "need alpha in (0,1), beta >= 0");
  if (max_depth < 1) throw ConfigError("gibbs", "max_depth must be >= 1");
  if (leaf_hyper && !(leaf_hyper->sigma_mu > 0.0)) throw ConfigError("gibbs", "sigma_mu must be positive");
}

GibbsSampler::GibbsSampler(const SamplerConfig& config, const Dataset& ds)
    : config_(config), ds_(&ds), forest_(config.m, ds.d(), 0) {
  config_.validate();
  prior_ = config_.prior ? *config_.prior : LocalLinearPrior::defaults(config_.q, ds.d());
  try {
    prior_.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError("gibbs", e.what());
  }
  if (prior_.rows() != 2 * config_.q + 1 || prior_.cols() != ds.d() + 1) {
    throw ConfigError("gibbs", "prior dimensions do not match q and d");
  }

  const Eigen::VectorXd k = kernel_weights(ds, config_.h);
  Index n_control = 0, n_treated = 0;
  std::vector<Index> treated;
  for (Index i = 0; i < ds.n(); ++i) {
    if (k[i] <= 0.0) continue;
    window_.push_back(i);
    if (ds.treated(i)) {
      ++n_treated;
      treated.push_back(i);
    } else {
      ++n_control;
    }
  }
  if (n_control == 0 || n_treated == 0) {
    throw ConfigError("gibbs", "bandwidth h=" + std::to_string(config_.h) +
                                   " leaves no in-window units on one side of the cutoff");
  }

  if (config_.leaf_hyper) {
    hyper_ = *config_.leaf_hyper;
  } else {
    hyper_ = elicit_leaf_prior(ds, config_.delta_multiplier * ds.sd_x(), config_.k, config_.m);
  }
  hyper_.m = config_.m;
  hyper_.alpha = config_.alpha;
  hyper_.beta = config_.beta;

  const auto nw = static_cast<Index>(window_.size());
  std::vector<DesignRow> rows;
  rows.reserve(window_.size());
  y_window_.resize(nw);
  tree_row_.assign(window_.size(), -1);
  Index t = 0;
  for (Index w = 0; w < nw; ++w) {
    const Index i = window_[static_cast<std::size_t>(w)];
    rows.push_back(design_row(ds, i, config_.q, config_.h));
    y_window_[w] = ds.y()[i];
    if (ds.treated(i)) tree_row_[static_cast<std::size_t>(w)] = t++;
  }
  design_.emplace(rows);

  Eigen::MatrixXd z_treated(n_treated, ds.d());
  y_treated_.resize(n_treated);
  for (Index r = 0; r < n_treated; ++r) {
    z_treated.row(r) = ds.z().row(treated[static_cast<std::size_t>(r)]);
    y_treated_[r] = ds.y()[treated[static_cast<std::size_t>(r)]];
  }
  tree_data_.emplace(std::move(z_treated), TreePrior{config_.alpha, config_.beta, config_.max_depth});
  tree_weights_ = Eigen::VectorXd::Ones(n_treated);

  forest_ = ForestState(config_.m, ds.d(), n_treated, 0.0);
  for (const Tree& tree : forest_.trees()) {
    infos_.emplace_back(tree, tree_data_->z, tree_data_->candidates, tree_data_->prior);
  }
  state_.B = prior_.M0;
  state_.omega = prior_.nu0 / prior_.eta0;
  xbz_ = design_->fitted(state_.B);
  refresh_residuals();
}

void GibbsSampler::refresh_residuals() {
  resid_ = y_window_ - xbz_;
  const Eigen::VectorXd& fit = forest_.fit();
  for (std::size_t w = 0; w < window_.size(); ++w) {
    const Index t = tree_row_[w];
    if (t >= 0) resid_[static_cast<Index>(w)] -= fit[t];
  }
}

void GibbsSampler::step(Rng& rng) {
  const TreeData& data = *tree_data_;
  const Index n_treated = y_treated_.size();

  Eigen::VectorXd xbz_treated(n_treated);
  for (std::size_t w = 0; w < window_.size(); ++w) {
    const Index t = tree_row_[w];
    if (t >= 0) xbz_treated[t] = xbz_[static_cast<Index>(w)];
  }

  Eigen::VectorXd partial(n_treated);
  for (int j = 0; j < forest_.size(); ++j) {
    partial = y_treated_ - forest_.fit() + forest_.contribution(j) - xbz_treated;
    Tree tree = forest_.tree(j);
    TreeInfo& info = infos_[static_cast<std::size_t>(j)];
    const MhResult mh = mh_tree_update(tree, info, data, partial, tree_weights_, hyper_, state_.omega, rng);
    const auto kind = static_cast<std::size_t>(mh.kind);
    if (mh.proposed) {
      ++counts_.proposed[kind];
      if (mh.accepted) ++counts_.accepted[kind];
    } else {
      ++counts_.stays;
    }
    sample_leaf_means(tree, info, partial, tree_weights_, hyper_, state_.omega, rng);
    forest_.replace(j, std::move(tree), data.z);
  }

  ++sweeps_;
  if (sweeps_ % 100 == 0) forest_.refresh(data.z);

  Eigen::VectorXd minus_tau = y_window_;
  const Eigen::VectorXd& fit = forest_.fit();
  for (std::size_t w = 0; w < window_.size(); ++w) {
    const Index t = tree_row_[w];
    if (t >= 0) minus_tau[static_cast<Index>(w)] -= fit[t];
  }
  state_.B = sample_B(minus_tau, *design_, state_.omega, prior_, rng);
  xbz_ = design_->fitted(state_.B);
  resid_ = minus_tau - xbz_;
  state_.omega = sample_omega(resid_, design_->weights(), prior_, rng);
}

PosteriorDraws run_chain(const SamplerConfig& config, const Dataset& ds, const Eigen::MatrixXd& targets,
                         const std::vector<Index>& eval_units) {
  if (targets.cols() != ds.d()) throw std::domain_error("gibbs: targets must have d columns");
  GibbsSampler sampler(config, ds);
  Rng rng(config.seed, config.stream);

  const int kept = config.retained();
  PosteriorDraws out;
  out.tau.resize(kept, targets.rows());
  out.omega.resize(kept);
  out.B.reserve(static_cast<std::size_t>(kept));
  out.eval_units = eval_units;
  out.eval_residuals.resize(kept, static_cast<Index>(eval_units.size()));

  std::vector<DesignRow> eval_rows;
  for (Index i : eval_units) {
    if (i < 0 || i >= ds.n()) throw std::domain_error("gibbs: evaluation unit out of range");
    eval_rows.push_back(design_row(ds, i, config.q, config.h));
  }

  int r = 0;
  for (int it = 0; it < config.n_iter; ++it) {
    sampler.step(rng);
    if (it < config.n_burn || (it - config.n_burn) % config.thin != 0) continue;
    const auto& trees = sampler.forest().trees();
    for (Index t = 0; t < targets.rows(); ++t) {
      double tau = 0.0;
      for (const Tree& tree : trees) tau += tree.predict(targets.row(t));
      out.tau(r, t) = tau;
    }
    const Eigen::MatrixXd& B = sampler.local_linear().B;
    const Eigen::Map<const Eigen::VectorXd> vec_b(B.data(), B.size());
    for (std::size_t e = 0; e < eval_units.size(); ++e) {
      const Index i = eval_units[e];
      double tau = 0.0;
      if (ds.treated(i)) {
        for (const Tree& tree : trees) tau += tree.predict(ds.z().row(i));
      }
      out.eval_residuals(r, static_cast<Index>(e)) = ds.y()[i] - tau - eval_rows[e].kron.dot(vec_b);
    }
    out.B.push_back(B);
    out.omega[r] = sampler.local_linear().omega;
    ++r;
  }
  out.acceptance = sampler.acceptance();
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::domain_error("gibbs: quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

CateSummary summarize(const PosteriorDraws& draws, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("gibbs: level must be in (0, 1)");
  if (draws.tau.rows() < 2) throw std::domain_error("gibbs: need at least 2 retained draws");
  const Index targets = draws.tau.cols();
  CateSummary out{Eigen::VectorXd(targets), Eigen::VectorXd(targets), Eigen::VectorXd(targets)};
  const double tail = (1.0 - level) / 2.0;
  std::vector<double> column(static_cast<std::size_t>(draws.tau.rows()));
  for (Index t = 0; t < targets; ++t) {
    for (Index r = 0; r < draws.tau.rows(); ++r) column[static_cast<std::size_t>(r)] = draws.tau(r, t);
    // centered on the first draw so a constant column averages exactly
    out.mean[t] = column.front() + (draws.tau.col(t).array() - column.front()).mean();
    out.lower[t] = quantile(column, tail);
    out.upper[t] = quantile(column, 1.0 - tail);
  }
  return out;
}

}  // namespace dbart
