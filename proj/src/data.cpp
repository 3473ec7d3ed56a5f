#include "dbart/data.hpp"

#include <cmath>
#include <stdexcept>

#include "dbart/errors.hpp"
#include "dbart/io.hpp"

namespace dbart {

Dataset::Dataset(Eigen::VectorXd y, Eigen::VectorXd x, Eigen::MatrixXd z, double cutoff,
                 std::vector<std::string> covariate_names)
    : y_(std::move(y)), x_(std::move(x)), z_(std::move(z)), cutoff_(cutoff),
      names_(std::move(covariate_names)) {
  if (y_.size() < 2) throw DataError("data", "dataset needs at least 2 rows");
  if (x_.size() != y_.size() || z_.rows() != y_.size()) {
    throw DataError("data", "y, x and z must have the same number of rows");
  }
  if (z_.cols() < 1) throw DataError("data", "dataset needs at least one covariate");
  if (!y_.allFinite() || !x_.allFinite() || !z_.allFinite() || !std::isfinite(cutoff_)) {
    throw DataError("data", "dataset contains non-finite values");
  }
  if (names_.empty()) {
    for (Index j = 0; j < z_.cols(); ++j) names_.push_back("z" + std::to_string(j + 1));
  }
  if (static_cast<Index>(names_.size()) != z_.cols()) {
    throw DataError("data", "covariate name count does not match z");
  }
}

double Dataset::sd_x() const {
  const double mean = x_.mean();
  return std::sqrt((x_.array() - mean).square().sum() / static_cast<double>(n() - 1));
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  const io::CsvTable table = io::read_csv(path);

  auto require_column = [&](const std::string& name) {
    const int col = table.column(name);
    if (col < 0) throw DataError("data", "column '" + name + "' not found in '" + path.string() + "'");
    return col;
  };
  auto numeric_cell = [&](std::size_t row, int col) {
    double v = 0.0;
    if (!io::parse_double(table.rows[row][col], v)) {
      throw DataError("data", "row " + std::to_string(row + 1) + ", column '" + table.header[col] +
                                  "': non-numeric value '" + table.rows[row][col] + "'");
    }
    return v;
  };

  if (!std::isfinite(schema.cutoff)) throw ConfigError("data", "cutoff must be finite");
  const int y_col = require_column(schema.outcome);
  const int x_col = require_column(schema.running);

  const std::size_t n = table.rows.size();
  Eigen::Index d = 0;
  std::vector<std::string> names;
  for (const auto& cov : schema.covariates) {
    if (cov.kind == CovariateSpec::Kind::Continuous) {
      ++d;
      names.push_back(cov.name);
      continue;
    }
    if (cov.levels.size() < 2) {
      throw DataError("data", "categorical column '" + cov.name + "' needs at least two levels");
    }
    const std::string ref = cov.reference.empty() ? cov.levels.back() : cov.reference;
    bool has_ref = false;
    for (const auto& level : cov.levels) {
      if (level == ref) {
        has_ref = true;
        continue;
      }
      ++d;
      names.push_back(cov.name + "=" + level);
    }
    if (!has_ref) {
      throw DataError("data", "reference level '" + ref + "' is not a level of '" + cov.name + "'");
    }
  }

  Eigen::VectorXd y(n), x(n);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = numeric_cell(i, y_col);
    x[i] = numeric_cell(i, x_col);
  }
  Eigen::Index offset = 0;
  for (const auto& cov : schema.covariates) {
    const int col = require_column(cov.name);
    if (cov.kind == CovariateSpec::Kind::Continuous) {
      for (std::size_t i = 0; i < n; ++i) z(i, offset) = numeric_cell(i, col);
      ++offset;
      continue;
    }
    const std::string ref = cov.reference.empty() ? cov.levels.back() : cov.reference;
    std::vector<std::string> encoded;
    for (const auto& level : cov.levels) {
      if (level != ref) encoded.push_back(level);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::string value = io::trim(table.rows[i][col]);
      bool known = value == ref;
      for (std::size_t l = 0; l < encoded.size(); ++l) {
        if (value == encoded[l]) {
          z(i, offset + static_cast<Eigen::Index>(l)) = 1.0;
          known = true;
        }
      }
      if (!known) {
        throw DataError("data", "row " + std::to_string(i + 1) + ", column '" + cov.name +
                                    "': unknown level '" + value + "'");
      }
    }
    offset += static_cast<Eigen::Index>(encoded.size());
  }
  return Dataset(std::move(y), std::move(x), std::move(z), schema.cutoff, std::move(names));
}

Eigen::VectorXd kernel_weights(const Dataset& ds, double h) {
  if (!(h > 0.0)) throw std::domain_error("data: bandwidth must be positive");
  const double c = ds.cutoff();
  return ds.x().unaryExpr([=](double x) { return std::abs(x - c) <= h ? 1.0 : 0.0; });
}

Eigen::VectorXd polynomial_basis(double x, double c, int q) {
  if (q < 1) throw std::domain_error("data: polynomial order must be >= 1");
  Eigen::VectorXd basis(2 * q + 1);
  const double u = x - c;
  const double neg = u < 0.0 ? u : 0.0;
  const double pos = u >= 0.0 ? u : 0.0;
  basis[0] = 1.0;
  double pn = 1.0, pp = 1.0;
  for (int p = 1; p <= q; ++p) {
    pn *= neg;
    pp *= pos;
    basis[2 * p - 1] = pn;
    basis[2 * p] = pp;
  }
  return basis;
}

std::vector<Index> near_cutoff_units(const Dataset& ds, double multiplier) {
  if (!(multiplier > 0.0)) throw std::domain_error("data: multiplier must be positive");
  const double radius = multiplier * ds.sd_x();
  std::vector<Index> out;
  for (Index i = 0; i < ds.n(); ++i) {
    if (std::abs(ds.x()[i] - ds.cutoff()) <= radius) out.push_back(i);
  }
  return out;
}

DesignRow design_row(const Dataset& ds, Index i, int q, double h) {
  if (!(h > 0.0)) throw std::domain_error("data: bandwidth must be positive");
  DesignRow row;
  row.x_basis = polynomial_basis(ds.x()[i], ds.cutoff(), q);
  row.z_tilde.resize(ds.d() + 1);
  row.z_tilde[0] = 1.0;
  row.z_tilde.tail(ds.d()) = ds.z().row(i).transpose();
  const Index p = row.x_basis.size();
  row.kron.resize(p * row.z_tilde.size());
  for (Index a = 0; a < row.z_tilde.size(); ++a) {
    row.kron.segment(a * p, p) = row.z_tilde[a] * row.x_basis;
  }
  row.weight = std::abs(ds.x()[i] - ds.cutoff()) <= h ? 1.0 : 0.0;
  return row;
}

std::vector<DesignRow> design_rows(const Dataset& ds, int q, double h) {
  std::vector<DesignRow> rows;
  rows.reserve(static_cast<std::size_t>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) rows.push_back(design_row(ds, i, q, h));
  return rows;
}

Dataset subset(const Dataset& ds, const std::vector<Index>& rows) {
  const auto m = static_cast<Index>(rows.size());
  Eigen::VectorXd y(m), x(m);
  Eigen::MatrixXd z(m, ds.d());
  for (Index r = 0; r < m; ++r) {
    y[r] = ds.y()[rows[r]];
    x[r] = ds.x()[rows[r]];
    z.row(r) = ds.z().row(rows[r]);
  }
  return Dataset(std::move(y), std::move(x), std::move(z), ds.cutoff(), ds.covariate_names());
}

}  // namespace dbart
