#include "dbart/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dbart/errors.hpp"
#include "dbart/io.hpp"
#include "dbart/parallel.hpp"

namespace dbart {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct WindowRegression {
  Eigen::MatrixXd X;  // columns: W, 1, one-sided powers
  Eigen::VectorXd y;
  Index control = 0;
  Index treated = 0;
};

WindowRegression window_regression(const Dataset& ds, int q, double h) {
  const Eigen::VectorXd k = kernel_weights(ds, h);
  std::vector<Index> rows;
  WindowRegression reg;
  for (Index i = 0; i < ds.n(); ++i) {
    if (k[i] <= 0.0) continue;
    rows.push_back(i);
    (ds.treated(i) ? reg.treated : reg.control) += 1;
  }
  const Index p = 2 * q + 2;
  reg.X.resize(static_cast<Index>(rows.size()), p);
  reg.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index i = rows[r];
    const auto row = static_cast<Index>(r);
    reg.X(row, 0) = ds.treated(i) ? 1.0 : 0.0;
    reg.X.row(row).tail(p - 1) = polynomial_basis(ds.x()[i], ds.cutoff(), q).transpose();
    reg.y[row] = ds.y()[i];
  }
  return reg;
}

bool enough_units(const WindowRegression& reg, int q) { return reg.control >= q + 2 && reg.treated >= q + 2; }

}  // namespace

std::vector<double> lp_bandwidth_grid(const Dataset& ds, int points) {
  const double sd = ds.sd_x();
  if (!(sd > 0.0)) throw ConfigError("eval", "running variable has zero spread");
  std::vector<double> grid;
  const double lo = std::log(0.05), hi = std::log(2.0);
  for (int j = 0; j < points; ++j) {
    const double t = points == 1 ? 1.0 : static_cast<double>(j) / (points - 1);
    grid.push_back(sd * std::exp(lo + t * (hi - lo)));
  }
  return grid;
}

std::vector<Index> lp_cv_units(const Dataset& ds) {
  std::vector<Index> control, treated;
  for (Index i = 0; i < ds.n(); ++i) (ds.treated(i) ? treated : control).push_back(i);
  const double c = ds.cutoff();
  auto nearest_half = [&](std::vector<Index>& side) {
    std::stable_sort(side.begin(), side.end(),
                     [&](Index a, Index b) { return std::abs(ds.x()[a] - c) < std::abs(ds.x()[b] - c); });
    side.resize((side.size() + 1) / 2);
  };
  nearest_half(control);
  nearest_half(treated);
  std::vector<Index> out(control);
  out.insert(out.end(), treated.begin(), treated.end());
  std::sort(out.begin(), out.end());
  return out;
}

double lp_cv_score(const Dataset& ds, int q, double h) {
  if (!(h > 0.0)) return kInf;
  const Eigen::VectorXd& x = ds.x();
  double sse = 0.0;
  const std::vector<Index> units = lp_cv_units(ds);
  if (units.empty()) return kInf;
  for (Index i : units) {
    const bool right = ds.treated(i);
    // Neighbours on the far side of unit i from the cutoff, same arm.
    std::vector<Index> nb;
    for (Index j = 0; j < ds.n(); ++j) {
      if (j == i || ds.treated(j) != right) continue;
      const double dx = x[j] - x[i];
      if (right ? (dx > 0.0 && dx <= h) : (dx < 0.0 && -dx <= h)) nb.push_back(j);
    }
    if (static_cast<int>(nb.size()) < q + 2) return kInf;
    Eigen::MatrixXd X(static_cast<Index>(nb.size()), q + 1);
    Eigen::VectorXd y(static_cast<Index>(nb.size()));
    for (std::size_t r = 0; r < nb.size(); ++r) {
      const double u = x[nb[r]] - x[i];
      double p = 1.0;
      for (int k = 0; k <= q; ++k, p *= u) X(static_cast<Index>(r), k) = p;
      y[static_cast<Index>(r)] = ds.y()[nb[r]];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < q + 1) return kInf;
    const double e = ds.y()[i] - qr.solve(y)[0];
    sse += e * e;
  }
  return sse / static_cast<double>(units.size());
}

LpFit lp_fit_at(const Dataset& ds, int q, double h) {
  if (q < 0) throw ConfigError("eval", "LP order must be >= 0");
  if (!(h > 0.0)) throw ConfigError("eval", "LP bandwidth must be positive");
  const WindowRegression reg = window_regression(ds, q, h);
  if (!enough_units(reg, q)) {
    throw ConfigError("eval", "LP window h=" + io::format_double(h) + " has fewer than q+2 units on a side");
  }
  const Index n = reg.X.rows(), p = reg.X.cols();
  const Eigen::MatrixXd gram = reg.X.transpose() * reg.X;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.rank() < p) throw NumericError("eval", "LP design is rank deficient");
  const Eigen::MatrixXd gram_inv = lu.inverse();
  const Eigen::VectorXd beta = gram_inv * (reg.X.transpose() * reg.y);
  const Eigen::VectorXd e = reg.y - reg.X * beta;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (Index i = 0; i < n; ++i) meat.noalias() += e[i] * e[i] * reg.X.row(i).transpose() * reg.X.row(i);
  // HC1 small-sample factor.
  const double dof = n > p ? static_cast<double>(n) / static_cast<double>(n - p) : 1.0;
  const Eigen::MatrixXd v = dof * gram_inv * meat * gram_inv;

  LpFit fit;
  fit.tau_hat = beta[0];
  fit.se = std::sqrt(std::max(v(0, 0), 0.0));
  fit.h_lp = h;
  fit.lower = fit.tau_hat - 1.96 * fit.se;
  fit.upper = fit.tau_hat + 1.96 * fit.se;
  return fit;
}

LpFit lp_fit(const Dataset& ds, int q) {
  const std::vector<double> grid = lp_bandwidth_grid(ds);
  double best_h = 0.0, best = kInf;
  for (double h : grid) {
    const double s = lp_cv_score(ds, q, h);
    if (s < best) {
      best = s;
      best_h = h;
    }
  }
  if (!(best < kInf)) throw ConfigError("eval", "no feasible LP bandwidth on the grid");
  LpFit fit = lp_fit_at(ds, q, best_h);
  fit.cv_score = best;
  return fit;
}

double rmse(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truth) {
  if (estimates.size() != truth.size()) throw std::domain_error("eval: rmse length mismatch");
  if (estimates.size() == 0) throw std::domain_error("eval: rmse of an empty sample");
  return std::sqrt((estimates - truth).squaredNorm() / static_cast<double>(truth.size()));
}

double coverage(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth) {
  if (lower.size() != truth.size() || upper.size() != truth.size()) {
    throw std::domain_error("eval: coverage length mismatch");
  }
  if (truth.size() == 0) throw std::domain_error("eval: coverage of an empty sample");
  Index hit = 0;
  for (Index i = 0; i < truth.size(); ++i) hit += (lower[i] <= truth[i] && truth[i] <= upper[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

ScoreReport select_direct_bart_bandwidth(const Dataset& ds, const PipelineSettings& settings, LpFit* lp) {
  const LpFit anchor = lp_fit(ds, settings.lp_q);
  if (lp) *lp = anchor;
  SamplerConfig cfg = settings.sampler;
  cfg.n_iter = settings.bw_iter;
  cfg.n_burn = settings.bw_burn;
  cfg.thin = 1;
  cfg.h = anchor.h_lp;
  cfg.stream = derive_seed(settings.sampler.stream, 1);
  cfg.validate();
  return select_bandwidth(ds, cfg, candidate_grid(anchor.h_lp, settings.grid_size), settings.threads);
}

DirectBartFit fit_direct_bart(const Dataset& ds, const PipelineSettings& settings, const Eigen::MatrixXd& targets) {
  DirectBartFit out;
  out.bandwidth = select_direct_bart_bandwidth(ds, settings, &out.lp);
  out.config = settings.sampler;
  out.config.h = out.bandwidth.selected;
  out.config.stream = derive_seed(settings.sampler.stream, 2);
  out.draws = run_chain(out.config, ds, targets);
  out.summary = summarize(out.draws, settings.level);
  return out;
}

std::string method_name(Method m) { return m == Method::DirectBart ? "direct-bart" : "lp"; }

Method parse_method(const std::string& name) {
  if (name == "direct-bart") return Method::DirectBart;
  if (name == "lp") return Method::Lp;
  throw ConfigError("eval", "unknown method '" + name + "' (expected direct-bart or lp)");
}

std::string ExperimentSpec::scenario_case() const {
  if (scenario == 1) return variability == Variability::Small ? "scenario1-small" : "scenario1-large";
  return "scenario2-rho" + io::format_double(rho);
}

void ExperimentSpec::validate() const {
  if (scenario != 1 && scenario != 2) throw ConfigError("eval", "scenario must be 1 or 2");
  if (!(sigma2 > 0.0)) throw ConfigError("eval", "sigma2 must be positive");
  if (scenario == 2 && !(std::abs(rho) < 1.0)) throw ConfigError("eval", "rho must satisfy |rho| < 1");
  if (replications < 1) throw ConfigError("eval", "replications must be >= 1");
  if (n < 0 || (scenario == 1 && n % 2 != 0)) throw ConfigError("eval", "scenario 1 needs an even n");
  if (methods.empty()) throw ConfigError("eval", "no methods requested");
  if (pipeline.sampler.q < 0) throw ConfigError("eval", "q must be >= 1, or 0 for the scenario default");
  if (calibration_draws < 100000) throw ConfigError("eval", "calibration needs at least 1e5 draws");
  if (pipeline.grid_size < 1) throw ConfigError("eval", "grid size must be >= 1");
  if (pipeline.bw_burn < 0 || pipeline.bw_iter <= pipeline.bw_burn) {
    throw ConfigError("eval", "need bw_iter > bw_burn >= 0");
  }
}

const MetricsRow* MetricsTable::find(Method method, const std::string& sample) const {
  for (const auto& r : rows) {
    if (r.method == method && r.sample == sample) return &r;
  }
  return nullptr;
}

void calibrate(ExperimentSpec& spec) {
  if (spec.scenario == 1 && !spec.scenario1_constants) {
    spec.scenario1_constants = calibrate_scenario1(spec.variability, spec.calibration_draws, spec.calibration_seed);
  }
  if (spec.scenario == 2 && !spec.scenario2_constants) {
    spec.scenario2_constants = calibrate_scenario2(spec.rho, spec.calibration_draws, spec.calibration_seed);
  }
}

SimulatedData simulate_replication(const ExperimentSpec& spec, int replication) {
  const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(replication);
  if (spec.scenario == 1) {
    if (!spec.scenario1_constants) throw std::domain_error("eval: scenario 1 constants not calibrated");
    Scenario1Spec s;
    if (spec.n > 0) s.n = spec.n;
    s.variability = spec.variability;
    s.sigma2 = spec.sigma2;
    s.seed = seed;
    return generate_scenario1(s, *spec.scenario1_constants);
  }
  if (!spec.scenario2_constants) throw std::domain_error("eval: scenario 2 constants not calibrated");
  Scenario2Spec s;
  if (spec.n > 0) s.n = spec.n;
  s.rho = spec.rho;
  s.sigma2 = spec.sigma2;
  s.seed = seed;
  return generate_scenario2(s, *spec.scenario2_constants);
}

namespace {

std::vector<Method> canonical_methods(std::vector<Method> methods) {
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  return methods;
}

void failed_records(std::vector<ReplicationRecord>& out, int r, Method m, const std::string& what) {
  for (const char* sample : {"in", "out"}) {
    ReplicationRecord rec;
    rec.replication = r;
    rec.method = m;
    rec.sample = sample;
    rec.rmse = std::numeric_limits<double>::quiet_NaN();
    rec.coverage = std::numeric_limits<double>::quiet_NaN();
    rec.failed = true;
    rec.error = what;
    out.push_back(std::move(rec));
  }
}

std::vector<ReplicationRecord> run_replication(const ExperimentSpec& spec, int r) {
  std::vector<ReplicationRecord> out;
  const SimulatedData sim = simulate_replication(spec, r);
  const Dataset& ds = sim.data;
  const std::vector<Index> near = near_cutoff_units(ds, 0.1);
  const Index n_in = static_cast<Index>(near.size());
  Eigen::VectorXd truth_in(n_in);
  for (Index j = 0; j < n_in; ++j) truth_in[j] = sim.true_tau[near[static_cast<std::size_t>(j)]];

  auto push = [&](Method m, const Eigen::VectorXd& est, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                  const Eigen::VectorXd& truth, const char* sample) {
    ReplicationRecord rec;
    rec.replication = r;
    rec.method = m;
    rec.sample = sample;
    rec.rmse = rmse(est, truth);
    rec.coverage = 100.0 * coverage(lo, hi, truth);
    out.push_back(std::move(rec));
  };

  for (Method m : canonical_methods(spec.methods)) {
    try {
      if (n_in == 0) throw ConfigError("eval", "no units near the cutoff");
      if (m == Method::Lp) {
        const LpFit lp = lp_fit(ds, spec.pipeline.lp_q);
        for (const char* sample : {"in", "out"}) {
          const Eigen::VectorXd& truth = sample[0] == 'i' ? truth_in : sim.target_tau;
          const Index k = truth.size();
          push(m, Eigen::VectorXd::Constant(k, lp.tau_hat), Eigen::VectorXd::Constant(k, lp.lower),
               Eigen::VectorXd::Constant(k, lp.upper), truth, sample);
        }
      } else {
        PipelineSettings settings = spec.pipeline;
        settings.threads = 1;
        if (settings.sampler.q == 0) settings.sampler.q = spec.scenario == 1 ? 2 : 1;
        settings.sampler.seed = spec.base_seed + static_cast<std::uint64_t>(r);
        Eigen::MatrixXd targets(n_in + sim.targets.rows(), ds.d());
        for (Index j = 0; j < n_in; ++j) targets.row(j) = ds.z().row(near[static_cast<std::size_t>(j)]);
        targets.bottomRows(sim.targets.rows()) = sim.targets;
        const DirectBartFit fit = fit_direct_bart(ds, settings, targets);
        const CateSummary& s = fit.summary;
        const Index n_out = sim.targets.rows();
        push(m, s.mean.head(n_in), s.lower.head(n_in), s.upper.head(n_in), truth_in, "in");
        push(m, s.mean.tail(n_out), s.lower.tail(n_out), s.upper.tail(n_out), sim.target_tau, "out");
      }
    } catch (const std::exception& e) {
      // Drop any partial records of this method before marking it failed.
      out.erase(std::remove_if(out.begin(), out.end(), [&](const ReplicationRecord& x) { return x.method == m; }),
                out.end());
      failed_records(out, r, m, e.what());
    }
  }
  return out;
}

}  // namespace

MetricsTable run_experiment(ExperimentSpec spec, int threads) {
  spec.validate();
  calibrate(spec);
  MetricsTable table;
  if (spec.scenario == 1) {
    table.calibration = calibration_entries(spec.scenario_case(), *spec.scenario1_constants, spec.calibration_seed);
  } else {
    table.calibration = calibration_entries(spec.scenario_case(), *spec.scenario2_constants, spec.calibration_seed);
  }

  std::vector<std::vector<ReplicationRecord>> per_rep(static_cast<std::size_t>(spec.replications));
  parallel_for(per_rep.size(), threads,
               [&](std::size_t r) { per_rep[r] = run_replication(spec, static_cast<int>(r)); });
  for (auto& recs : per_rep) {
    for (auto& rec : recs) table.details.push_back(std::move(rec));
  }

  for (Method m : canonical_methods(spec.methods)) {
    for (const char* sample : {"in", "out"}) {
      MetricsRow row;
      row.method = m;
      row.scenario_case = spec.scenario_case();
      row.sigma2 = spec.sigma2;
      row.sample = sample;
      double sum_rmse = 0.0, sum_cov = 0.0;
      for (const auto& rec : table.details) {
        if (rec.method != m || rec.sample != sample) continue;
        if (rec.failed) {
          ++row.failed;
          continue;
        }
        ++row.replications;
        sum_rmse += rec.rmse;
        sum_cov += rec.coverage;
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.rmse = row.replications > 0 ? sum_rmse / row.replications : nan;
      row.coverage = row.replications > 0 ? sum_cov / row.replications : nan;
      table.rows.push_back(row);
    }
  }
  return table;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("eval", "cannot write '" + path.string() + "'");
  out << "method,scenario_case,sigma2,sample,rmse,coverage,replications,failed\n";
  for (const auto& r : table.rows) {
    out << method_name(r.method) << ',' << r.scenario_case << ',' << io::format_double(r.sigma2) << ',' << r.sample
        << ',' << io::format_double(r.rmse) << ',' << io::format_double(r.coverage) << ',' << r.replications << ','
        << r.failed << '\n';
  }
}

void write_replications_csv(const std::filesystem::path& path, const MetricsTable& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("eval", "cannot write '" + path.string() + "'");
  out << "replication,method,sample,rmse,coverage\n";
  for (const auto& r : table.details) {
    out << r.replication << ',' << method_name(r.method) << ',' << r.sample << ',' << io::format_double(r.rmse) << ','
        << io::format_double(r.coverage) << '\n';
  }
}

}  // namespace dbart
