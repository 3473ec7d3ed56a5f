#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbart/bandwidth.hpp"
#include "dbart/data.hpp"
#include "dbart/dgp.hpp"
#include "dbart/gibbs.hpp"

namespace dbart {

// ---------------------------------------------------------------------------
// Local polynomial baseline: a constant jump estimate with a sandwich interval.

struct LpFit {
  double tau_hat = 0.0;
  double se = 0.0;
  double h_lp = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double cv_score = 0.0;
};

// 20 geometric points spanning [0.05, 2] * sd(x).
std::vector<double> lp_bandwidth_grid(const Dataset& ds, int points = 20);

// Units scored by the bandwidth cross-validation: the half of each arm
// nearest the cutoff.
std::vector<Index> lp_cv_units(const Dataset& ds);

// Mean squared leave-one-out error at h. Each scored unit is predicted by a
// degree-q fit on same-arm neighbours within h on its far side from the
// cutoff, mimicking estimation at a boundary. +inf when some unit has fewer
// than q + 2 such neighbours.
double lp_cv_score(const Dataset& ds, int q, double h);

// Least squares of y on (1, W, one-sided powers of x - c up to q) over the
// uniform window at h.
LpFit lp_fit_at(const Dataset& ds, int q, double h);

// Bandwidth by LOO-CV over lp_bandwidth_grid, then lp_fit_at.
LpFit lp_fit(const Dataset& ds, int q = 1);

// ---------------------------------------------------------------------------
// Metrics.

double rmse(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truth);
// Fraction of closed intervals containing the truth.
double coverage(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth);

// ---------------------------------------------------------------------------
// The full Direct-BART pipeline on one dataset.

struct PipelineSettings {
  SamplerConfig sampler;  // q, m, chain lengths, seed of the full chain
  int bw_iter = 1000;
  int bw_burn = 500;
  int grid_size = 6;
  int lp_q = 1;
  double level = 0.95;
  int threads = 1;
};

struct DirectBartFit {
  LpFit lp;
  ScoreReport bandwidth;
  SamplerConfig config;  // resolved configuration of the full chain
  PosteriorDraws draws;
  CateSummary summary;
};

// LP anchor -> candidate grid -> Hyvarinen selection -> full chain at the
// selected bandwidth, summarized at the target rows.
DirectBartFit fit_direct_bart(const Dataset& ds, const PipelineSettings& settings, const Eigen::MatrixXd& targets);

// Selection only: LP anchor, grid and scores.
ScoreReport select_direct_bart_bandwidth(const Dataset& ds, const PipelineSettings& settings, LpFit* lp = nullptr);

// ---------------------------------------------------------------------------
// Replication experiment.

enum class Method { DirectBart, Lp };
std::string method_name(Method m);
Method parse_method(const std::string& name);

struct ExperimentSpec {
  int scenario = 1;  // 1 or 2
  Variability variability = Variability::Small;
  double rho = 0.0;
  double sigma2 = 0.25;
  int n = 0;  // 0: scenario default
  int replications = 15;
  std::uint64_t base_seed = 1;
  std::vector<Method> methods{Method::DirectBart, Method::Lp};
  // sampler.q == 0 picks the scenario default (2 for scenario 1, 1 for scenario 2)
  PipelineSettings pipeline = [] {
    PipelineSettings p;
    p.sampler.q = 0;
    return p;
  }();
  long calibration_draws = 1000000;
  std::uint64_t calibration_seed = 20240601;
  std::optional<Scenario1Constants> scenario1_constants;
  std::optional<Scenario2Constants> scenario2_constants;

  // "scenario1-small", "scenario1-large" or "scenario2-rho0.25".
  std::string scenario_case() const;
  void validate() const;
};

struct ReplicationRecord {
  int replication = 0;
  Method method = Method::DirectBart;
  std::string sample;  // "in" | "out"
  double rmse = 0.0;
  double coverage = 0.0;  // percent
  bool failed = false;
  std::string error;
};

struct MetricsRow {
  Method method = Method::DirectBart;
  std::string scenario_case;
  double sigma2 = 0.0;
  std::string sample;
  double rmse = 0.0;      // mean over successful replications
  double coverage = 0.0;  // mean percent
  int replications = 0;   // successful replications
  int failed = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<ReplicationRecord> details;
  std::vector<CalibrationEntry> calibration;

  const MetricsRow* find(Method method, const std::string& sample) const;
};

// Resolves the calibration constants (computed unless already present).
void calibrate(ExperimentSpec& spec);
SimulatedData simulate_replication(const ExperimentSpec& spec, int replication);

// Replications run on up to `threads` workers; results are independent of
// the worker count and of the method order in spec.methods.
MetricsTable run_experiment(ExperimentSpec spec, int threads = 1);

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table);
void write_replications_csv(const std::filesystem::path& path, const MetricsTable& table);

}  // namespace dbart
