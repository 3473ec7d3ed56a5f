#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dbart/data.hpp"
#include "dbart/rng.hpp"

namespace dbart {

// B ~ MN(M0, V0, U0) with row covariance V0 and column covariance U0;
// omega ~ Ga(nu0, eta0) (shape, rate).
struct LocalLinearPrior {
  Eigen::MatrixXd M0;
  Eigen::MatrixXd V0;
  Eigen::MatrixXd U0;
  double nu0 = 1.0;
  double eta0 = 1.0;

  // M0 = 0, V0 = 100 I, U0 = I, nu0 = eta0 = 1.
  static LocalLinearPrior defaults(int q, Index d);

  Index rows() const { return M0.rows(); }
  Index cols() const { return M0.cols(); }
  // Prior precision of vec(B): (U0 (x) V0)^{-1}.
  Eigen::MatrixXd vec_precision() const;
  void validate() const;
};

struct LocalLinearState {
  Eigen::MatrixXd B;
  double omega = 1.0;
};

// Stacked kron rows and weights of a fixed design, with the weighted Gram
// matrix sum_i k_i kron_i kron_i^T precomputed.
class LocalDesign {
 public:
  explicit LocalDesign(const std::vector<DesignRow>& rows);

  Index size() const { return kron_.rows(); }
  Index dim() const { return kron_.cols(); }
  const Eigen::MatrixXd& kron() const { return kron_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::MatrixXd& gram() const { return gram_; }

  // x_basis^T B z_tilde for every row.
  Eigen::VectorXd fitted(const Eigen::MatrixXd& B) const;

 private:
  Eigen::MatrixXd kron_;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd gram_;
};

// Gaussian full conditional of vec(B): mean and Cholesky factor of the
// posterior precision.
struct BConditional {
  Eigen::VectorXd mean;
  Eigen::LLT<Eigen::MatrixXd> factor;

  Eigen::MatrixXd mean_matrix(Index rows) const {
    return Eigen::Map<const Eigen::MatrixXd>(mean.data(), rows, mean.size() / rows);
  }
};

BConditional b_conditional(const Eigen::VectorXd& residuals_minus_tau, const LocalDesign& design, double omega,
                           const LocalLinearPrior& prior);

// Draws B from its Gaussian full conditional given residuals y - W tau(z).
Eigen::MatrixXd sample_B(const Eigen::VectorXd& residuals_minus_tau, const LocalDesign& design, double omega,
                         const LocalLinearPrior& prior, Rng& rng);
Eigen::MatrixXd sample_B(const Eigen::VectorXd& residuals_minus_tau, const std::vector<DesignRow>& rows,
                         double omega, const LocalLinearPrior& prior, Rng& rng);

// Draws omega from Ga(nu0 + sum k_i / 2, eta0 + sum k_i r_i^2 / 2).
double sample_omega(const Eigen::VectorXd& full_residuals, const Eigen::VectorXd& weights,
                    const LocalLinearPrior& prior, Rng& rng);

}  // namespace dbart
