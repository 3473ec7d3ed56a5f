#include "dbart/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "dbart/errors.hpp"
#include "dbart/io.hpp"

namespace dbart {

namespace {

constexpr double kPi = std::numbers::pi;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

// Two-pass sample variance.
double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

Eigen::Vector4d draw_mvn(const Eigen::Vector4d& mean, const Eigen::Matrix4d& chol_l, Rng& rng) {
  Eigen::Vector4d xi;
  for (int j = 0; j < 4; ++j) xi[j] = rng.normal();
  return mean + chol_l * xi;
}

void require_mc(long n_mc) {
  if (n_mc < 100000) throw std::domain_error("dgp: calibration needs at least 1e5 Monte Carlo draws");
}

}  // namespace

namespace scenario1 {

Eigen::Matrix4d covariance() {
  Eigen::Matrix4d s;
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) s(j, k) = 1.0 / (1.0 + std::abs(j - k));
  }
  return s;
}

double baseline_variance(Variability v) { return v == Variability::Small ? 1.0 : 15.0; }

Covariates draw_covariates(double x, Rng& rng) {
  static const Eigen::Matrix4d chol = covariance().llt().matrixL();
  Covariates c;
  const Eigen::Vector4d z = draw_mvn(Eigen::Vector4d::Constant(kGamma0 + kGamma1 * x), chol, rng);
  for (int j = 0; j < 4; ++j) c.z[static_cast<std::size_t>(j)] = z[j];
  const double eta1 = 0.8 * x + 0.5 * c.z[0] - 0.3 * c.z[1];
  const double eta2 = -0.4 * x + 0.2 * c.z[0] + 0.4 * c.z[1];
  const double e1 = std::exp(eta1), e2 = std::exp(eta2), e3 = 1.0;
  const double u = rng.uniform() * (e1 + e2 + e3);
  c.z5 = u < e1 ? 1 : (u < e1 + e2 ? 2 : 3);
  return c;
}

double g_int_unscaled(const Covariates& c) {
  return 1.0 + norm_cdf((c.z[0] + 1.0) / 2.0) + 0.1 * std::sin(kPi * c.z[0]) + std::atan(c.z[1] - 1.0) / kPi +
         0.5 * (c.z5 == 1 ? 1.0 : 0.0) + (c.z5 == 3 ? 1.0 : 0.0);
}

double g_slope(const Covariates& c) {
  return 2.0 + 1.0 / (1.0 + std::exp(-c.z[0])) + (c.z[2] < 0.0 ? std::sqrt(std::abs(c.z[2])) : 0.0) +
         std::max(0.0, c.z[3]) + (c.z5 == 3 ? 1.0 : 0.0);
}

double f(double x) { return x + std::sin(2.0 * kPi * x); }

double tau_unscaled(const Covariates& c) {
  return 1.0 + 0.5 * std::cos(2.0 * kPi * c.z[0]) + 0.6 * c.z[1] * c.z[2] + 0.4 * c.z[3] -
         0.5 * (c.z5 == 2 ? 1.0 : 0.0);
}

double mu(double x, const Covariates& c, const Scenario1Constants& k) {
  return k.alpha_mu * g_int_unscaled(c) + g_slope(c) * f(x);
}

double tau(const Covariates& c, const Scenario1Constants& k) { return k.alpha_tau * tau_unscaled(c); }

Eigen::VectorXd encode(const Covariates& c) {
  Eigen::VectorXd z(6);
  z << c.z[0], c.z[1], c.z[2], c.z[3], c.z5 == 1 ? 1.0 : 0.0, c.z5 == 2 ? 1.0 : 0.0;
  return z;
}

}  // namespace scenario1

Scenario1Constants calibrate_scenario1(Variability variability, long n_mc, std::uint64_t seed) {
  require_mc(n_mc);
  Rng rng(seed, 0x5c1);
  std::vector<double> g(static_cast<std::size_t>(n_mc)), t(static_cast<std::size_t>(n_mc));
  for (long r = 0; r < n_mc; ++r) {
    const auto c = scenario1::draw_covariates(0.0, rng);
    g[static_cast<std::size_t>(r)] = scenario1::g_int_unscaled(c);
    t[static_cast<std::size_t>(r)] = scenario1::tau_unscaled(c);
  }
  Scenario1Constants k;
  k.alpha_mu = std::sqrt(scenario1::baseline_variance(variability) / sample_variance(g));
  k.alpha_tau = std::sqrt(0.5 / sample_variance(t));
  return k;
}

SimulatedData generate_scenario1(const Scenario1Spec& spec, const Scenario1Constants& k) {
  if (spec.n < 2 || spec.n % 2 != 0) throw std::domain_error("dgp: scenario 1 needs an even n >= 2");
  if (spec.sigma2 < 0.0) throw std::domain_error("dgp: sigma2 must be non-negative");
  Rng rng(spec.seed, 0x5c1da7a);
  const double sigma = std::sqrt(spec.sigma2);
  const Index n = spec.n;
  Eigen::VectorXd y(n), x(n), base(n), tau(n);
  Eigen::MatrixXd z(n, 6);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    x[i] = i < n / 2 ? u - 1.0 : u;
    const auto c = scenario1::draw_covariates(x[i], rng);
    z.row(i) = scenario1::encode(c).transpose();
    base[i] = scenario1::mu(x[i], c, k);
    tau[i] = scenario1::tau(c, k);
    y[i] = base[i] + (x[i] >= 0.0 ? tau[i] : 0.0) + sigma * rng.normal();
  }
  Eigen::MatrixXd targets(spec.n_targets, 6);
  Eigen::VectorXd target_tau(spec.n_targets);
  for (Index t = 0; t < spec.n_targets; ++t) {
    const auto c = scenario1::draw_covariates(0.0, rng);
    targets.row(t) = scenario1::encode(c).transpose();
    target_tau[t] = scenario1::tau(c, k);
  }
  return SimulatedData{Dataset(std::move(y), std::move(x), std::move(z), 0.0, {"z1", "z2", "z3", "z4", "z5=1", "z5=2"}),
                       std::move(base), std::move(tau), std::move(targets), std::move(target_tau)};
}

namespace scenario2 {

Eigen::Matrix4d covariance() {
  const double row[4] = {2.0, 4.0 / 3.0, 2.0 / 3.0, 0.0};
  Eigen::Matrix4d s;
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) s(j, k) = row[std::abs(j - k)];
  }
  return s;
}

Scenario2Constants moment_constants(double rho) {
  if (!(std::abs(rho) < 1.0)) throw std::domain_error("dgp: need |rho| < 1");
  Scenario2Constants k;
  const double s = covariance().sum();  // 1' Sigma 1
  k.gamma = rho / std::sqrt(s);
  k.nu = 1.0 - rho * rho;
  return k;
}

Eigen::Vector4d conditional_mean(const Scenario2Constants& k, double x) {
  const Eigen::Vector4d gamma = Eigen::Vector4d::Constant(k.gamma);
  const Eigen::Vector4d cov_zx = covariance() * gamma;
  const double var_x = gamma.dot(cov_zx) + k.nu;
  return cov_zx * (x - kGamma0) / var_x;
}

Eigen::Matrix4d conditional_covariance(const Scenario2Constants& k) {
  const Eigen::Vector4d gamma = Eigen::Vector4d::Constant(k.gamma);
  const Eigen::Matrix4d s = covariance();
  const Eigen::Vector4d cov_zx = s * gamma;
  const double var_x = gamma.dot(cov_zx) + k.nu;
  return s - cov_zx * cov_zx.transpose() / var_x;
}

double z_star(const Eigen::Vector4d& z) { return z.sum() / 2.0; }

double mu_unscaled(double x, const Eigen::Vector4d& z) {
  const double a = x + 1.0;
  const double sign = a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
  const double zs = z_star(z) + 2.0;
  return a * a * a + zs * zs * sign * std::sqrt(std::abs(a));
}

double tau_unscaled(const Eigen::Vector4d& z) { return 0.5 * norm_cdf(2.0 * z[0] + 3.0) + norm_pdf(z[0]); }

double tau(const Eigen::Vector4d& z, const Scenario2Constants& k) { return k.alpha_tau + k.beta_tau * tau_unscaled(z); }

}  // namespace scenario2

namespace {

// Cholesky factor of a PSD matrix; a rank-deficient conditional covariance
// (rho near 1) falls back to an eigen square root.
Eigen::Matrix4d psd_factor(const Eigen::Matrix4d& s) {
  Eigen::LLT<Eigen::Matrix4d> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(s);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

Scenario2Constants calibrate_scenario2(double rho, long n_mc, std::uint64_t seed) {
  require_mc(n_mc);
  Scenario2Constants k = scenario2::moment_constants(rho);
  const Eigen::Vector4d mean = scenario2::conditional_mean(k, 0.0);
  const Eigen::Matrix4d chol = psd_factor(scenario2::conditional_covariance(k));
  Rng rng(seed, 0x5c2);
  std::vector<double> m(static_cast<std::size_t>(n_mc)), t(static_cast<std::size_t>(n_mc));
  double t_min = std::numeric_limits<double>::infinity();
  for (long r = 0; r < n_mc; ++r) {
    const Eigen::Vector4d z = draw_mvn(mean, chol, rng);
    m[static_cast<std::size_t>(r)] = scenario2::mu_unscaled(0.0, z);
    t[static_cast<std::size_t>(r)] = scenario2::tau_unscaled(z);
    t_min = std::min(t_min, t[static_cast<std::size_t>(r)]);
  }
  k.beta_mu = 1.0 / std::sqrt(sample_variance(m));
  k.beta_tau = 1.0 / std::sqrt(sample_variance(t));
  k.alpha_tau = -k.beta_tau * t_min;
  return k;
}

SimulatedData generate_scenario2(const Scenario2Spec& spec, const Scenario2Constants& k) {
  if (spec.n < 2) throw std::domain_error("dgp: scenario 2 needs n >= 2");
  if (!(std::abs(spec.rho) < 1.0)) throw std::domain_error("dgp: need |rho| < 1");
  if (spec.sigma2 < 0.0) throw std::domain_error("dgp: sigma2 must be non-negative");
  Rng rng(spec.seed, 0x5c2da7a);
  const double sigma = std::sqrt(spec.sigma2);
  static const Eigen::Matrix4d chol = scenario2::covariance().llt().matrixL();
  const Eigen::Vector4d gamma = Eigen::Vector4d::Constant(k.gamma);
  const Index n = spec.n;
  Eigen::VectorXd y(n), x(n), base(n), tau(n);
  Eigen::MatrixXd z(n, 4);
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector4d zi = draw_mvn(Eigen::Vector4d::Zero(), chol, rng);
    x[i] = scenario2::kGamma0 + gamma.dot(zi) + std::sqrt(k.nu) * rng.normal();
    z.row(i) = zi.transpose();
    base[i] = k.beta_mu * scenario2::mu_unscaled(x[i], zi);
    tau[i] = scenario2::tau(zi, k);
    y[i] = base[i] + (x[i] >= 0.0 ? tau[i] : 0.0) + sigma * rng.normal();
  }
  const Eigen::Vector4d mean0 = scenario2::conditional_mean(k, 0.0);
  const Eigen::Matrix4d chol0 = psd_factor(scenario2::conditional_covariance(k));
  Eigen::MatrixXd targets(spec.n_targets, 4);
  Eigen::VectorXd target_tau(spec.n_targets);
  for (Index t = 0; t < spec.n_targets; ++t) {
    const Eigen::Vector4d zt = draw_mvn(mean0, chol0, rng);
    targets.row(t) = zt.transpose();
    target_tau[t] = scenario2::tau(zt, k);
  }
  return SimulatedData{Dataset(std::move(y), std::move(x), std::move(z), 0.0, {"z1", "z2", "z3", "z4"}),
                       std::move(base), std::move(tau), std::move(targets), std::move(target_tau)};
}

void write_calibration_csv(const std::filesystem::path& path, const std::vector<CalibrationEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw ConfigError("dgp", "cannot write '" + path.string() + "'");
  out << "scenario,parameter,value,calibration_seed\n";
  for (const auto& e : entries) {
    out << e.scenario << ',' << e.parameter << ',' << io::format_double(e.value) << ',' << e.calibration_seed << '\n';
  }
}

std::vector<CalibrationEntry> read_calibration_csv(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  const int cs = table.column("scenario"), cp = table.column("parameter"), cv = table.column("value"),
            cseed = table.column("calibration_seed");
  if (cs < 0 || cp < 0 || cv < 0 || cseed < 0) throw DataError("dgp", "calibration file has the wrong columns");
  std::vector<CalibrationEntry> out;
  for (const auto& row : table.rows) {
    CalibrationEntry e{row[static_cast<std::size_t>(cs)], row[static_cast<std::size_t>(cp)]};
    if (!io::parse_double(row[static_cast<std::size_t>(cv)], e.value)) {
      throw DataError("dgp", "bad calibration value '" + row[static_cast<std::size_t>(cv)] + "'");
    }
    e.calibration_seed = std::stoull(row[static_cast<std::size_t>(cseed)]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CalibrationEntry> calibration_entries(const std::string& scenario, const Scenario1Constants& k,
                                                  std::uint64_t seed) {
  return {{scenario, "alpha_mu", k.alpha_mu, seed}, {scenario, "alpha_tau", k.alpha_tau, seed}};
}

std::vector<CalibrationEntry> calibration_entries(const std::string& scenario, const Scenario2Constants& k,
                                                  std::uint64_t seed) {
  return {{scenario, "gamma", k.gamma, seed},
          {scenario, "nu", k.nu, seed},
          {scenario, "beta_mu", k.beta_mu, seed},
          {scenario, "alpha_tau", k.alpha_tau, seed},
          {scenario, "beta_tau", k.beta_tau, seed}};
}

}  // namespace dbart
