#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dbart/data.hpp"
#include "dbart/rng.hpp"

namespace dbart {

struct SimulatedData {
  Dataset data;
  Eigen::VectorXd baseline;    // mu(x_i, z_i)
  Eigen::VectorXd true_tau;    // tau(z_i)
  Eigen::MatrixXd targets;     // fresh draws of Z | X = 0, encoded like data.z()
  Eigen::VectorXd target_tau;  // tau at the targets
};

// ---------------------------------------------------------------------------
// Scenario 1: four correlated continuous covariates shifted by X and one
// three-level categorical covariate drawn from X-dependent logits.

enum class Variability { Small, Large };

struct Scenario1Spec {
  int n = 1200;
  Variability variability = Variability::Small;
  double sigma2 = 0.25;
  std::uint64_t seed = 1;
  int n_targets = 200;
};

struct Scenario1Constants {
  double alpha_mu = 1.0;
  double alpha_tau = 1.0;
};

namespace scenario1 {

constexpr double kGamma0 = -1.0;
constexpr double kGamma1 = 0.55;

struct Covariates {
  std::array<double, 4> z{};
  int z5 = 1;  // level in {1, 2, 3}
};

// Sigma_jk = 1 / (1 + |j - k|).
Eigen::Matrix4d covariance();
// Target Var(mu(0, Z) | X = 0) of the variability case.
double baseline_variance(Variability v);

// Draws Z | X = x.
Covariates draw_covariates(double x, Rng& rng);

double g_int_unscaled(const Covariates& c);
double g_slope(const Covariates& c);
double f(double x);
double tau_unscaled(const Covariates& c);

double mu(double x, const Covariates& c, const Scenario1Constants& k);
double tau(const Covariates& c, const Scenario1Constants& k);

// (z1, z2, z3, z4, 1{z5=1}, 1{z5=2}); level 3 is the reference.
Eigen::VectorXd encode(const Covariates& c);

}  // namespace scenario1

// Monte Carlo calibration of alpha_mu and alpha_tau on Z | X = 0.
Scenario1Constants calibrate_scenario1(Variability variability, long n_mc, std::uint64_t seed);
SimulatedData generate_scenario1(const Scenario1Spec& spec, const Scenario1Constants& constants);

// ---------------------------------------------------------------------------
// Scenario 2: Gaussian covariates with Toeplitz covariance; X | Z Gaussian
// with mean 1 + gamma'Z.

struct Scenario2Spec {
  int n = 600;
  double rho = 0.0;
  double sigma2 = 0.5;
  std::uint64_t seed = 1;
  int n_targets = 200;
};

struct Scenario2Constants {
  double gamma = 0.0;  // every component of the coefficient vector
  double nu = 1.0;     // Var(X | Z)
  double beta_mu = 1.0;
  double alpha_tau = 0.0;
  double beta_tau = 1.0;
};

namespace scenario2 {

constexpr double kGamma0 = 1.0;

// First row (2, 4/3, 2/3, 0).
Eigen::Matrix4d covariance();
// gamma and nu in closed form from Var(X) = 1 and Cor(X, gamma'Z) = rho.
Scenario2Constants moment_constants(double rho);

// Exact Gaussian conditional Z | X = x.
Eigen::Vector4d conditional_mean(const Scenario2Constants& k, double x);
Eigen::Matrix4d conditional_covariance(const Scenario2Constants& k);

double z_star(const Eigen::Vector4d& z);
double mu_unscaled(double x, const Eigen::Vector4d& z);
double tau_unscaled(const Eigen::Vector4d& z);
double tau(const Eigen::Vector4d& z, const Scenario2Constants& k);

}  // namespace scenario2

Scenario2Constants calibrate_scenario2(double rho, long n_mc, std::uint64_t seed);
SimulatedData generate_scenario2(const Scenario2Spec& spec, const Scenario2Constants& constants);

// Calibration constants file: scenario,parameter,value,calibration_seed.
struct CalibrationEntry {
  std::string scenario;
  std::string parameter;
  double value = 0.0;
  std::uint64_t calibration_seed = 0;
};
void write_calibration_csv(const std::filesystem::path& path, const std::vector<CalibrationEntry>& entries);
std::vector<CalibrationEntry> read_calibration_csv(const std::filesystem::path& path);

std::vector<CalibrationEntry> calibration_entries(const std::string& scenario, const Scenario1Constants& k,
                                                  std::uint64_t seed);
std::vector<CalibrationEntry> calibration_entries(const std::string& scenario, const Scenario2Constants& k,
                                                  std::uint64_t seed);

}  // namespace dbart
