#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace dbart {

using Index = Eigen::Index;

// Declared role and type of one covariate column in an input file.
struct CovariateSpec {
  enum class Kind { Continuous, Categorical };

  std::string name;
  Kind kind = Kind::Continuous;
  std::vector<std::string> levels;  // categorical only
  std::string reference;            // dropped level; defaults to the last one
};

struct Schema {
  std::string outcome;
  std::string running;
  std::vector<CovariateSpec> covariates;
  double cutoff = 0.0;
};

// Immutable input of every fit: outcome y, running variable x, covariates z
// (categoricals already one-hot encoded) and the cutoff c. The treatment
// indicator W = 1{x >= c} is derived on demand.
class Dataset {
 public:
  Dataset(Eigen::VectorXd y, Eigen::VectorXd x, Eigen::MatrixXd z, double cutoff,
          std::vector<std::string> covariate_names = {});

  Index n() const { return y_.size(); }
  Index d() const { return z_.cols(); }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::MatrixXd& z() const { return z_; }
  double cutoff() const { return cutoff_; }
  bool treated(Index i) const { return x_[i] >= cutoff_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  // Sample standard deviation of x (divisor n - 1).
  double sd_x() const;

 private:
  Eigen::VectorXd y_;
  Eigen::VectorXd x_;
  Eigen::MatrixXd z_;
  double cutoff_;
  std::vector<std::string> names_;
};

// One row of the local polynomial design at bandwidth h.
struct DesignRow {
  Eigen::VectorXd x_basis;  // length 2q+1
  Eigen::VectorXd z_tilde;  // (1, z), length d+1
  Eigen::VectorXd kron;     // z_tilde (x) x_basis, matches column-stacked vec(B)
  double weight = 0.0;
};

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);

// Uniform kernel weights k_i = 1{|x_i - c| <= h}.
Eigen::VectorXd kernel_weights(const Dataset& ds, double h);

// (1, (u)_-, (u)_+, ..., (u)_-^q, (u)_+^q) with u = x - c, signed parts.
Eigen::VectorXd polynomial_basis(double x, double c, int q);

// Units with |x_i - c| <= multiplier * sd(x), ascending.
std::vector<Index> near_cutoff_units(const Dataset& ds, double multiplier = 0.1);

DesignRow design_row(const Dataset& ds, Index i, int q, double h);
std::vector<DesignRow> design_rows(const Dataset& ds, int q, double h);

// Returns a dataset restricted to the given rows (same cutoff and names).
Dataset subset(const Dataset& ds, const std::vector<Index>& rows);

}  // namespace dbart
