#include "dbart/locallinear.hpp"

#include <cmath>
#include <stdexcept>

#include "dbart/errors.hpp"

namespace dbart {

LocalLinearPrior LocalLinearPrior::defaults(int q, Index d) {
  const Index p = 2 * q + 1;
  LocalLinearPrior prior;
  prior.M0 = Eigen::MatrixXd::Zero(p, d + 1);
  prior.V0 = 100.0 * Eigen::MatrixXd::Identity(p, p);
  prior.U0 = Eigen::MatrixXd::Identity(d + 1, d + 1);
  return prior;
}

Eigen::MatrixXd LocalLinearPrior::vec_precision() const {
  const Eigen::MatrixXd v_inv = V0.llt().solve(Eigen::MatrixXd::Identity(V0.rows(), V0.cols()));
  const Eigen::MatrixXd u_inv = U0.llt().solve(Eigen::MatrixXd::Identity(U0.rows(), U0.cols()));
  // (U0 (x) V0)^{-1} = U0^{-1} (x) V0^{-1}
  const Index p = v_inv.rows();
  Eigen::MatrixXd out(u_inv.rows() * p, u_inv.cols() * p);
  for (Index a = 0; a < u_inv.rows(); ++a) {
    for (Index b = 0; b < u_inv.cols(); ++b) out.block(a * p, b * p, p, p) = u_inv(a, b) * v_inv;
  }
  return out;
}

void LocalLinearPrior::validate() const {
  if (V0.rows() != M0.rows() || V0.cols() != M0.rows() || U0.rows() != M0.cols() || U0.cols() != M0.cols()) {
    throw std::domain_error("locallinear: prior dimensions are inconsistent");
  }
  if (!(nu0 > 0.0) || !(eta0 > 0.0)) throw std::domain_error("locallinear: nu0 and eta0 must be positive");
  for (const Eigen::MatrixXd* m : {&V0, &U0}) {
    if (!m->isApprox(m->transpose()) || m->llt().info() != Eigen::Success) {
      throw std::domain_error("locallinear: V0 and U0 must be symmetric positive definite");
    }
  }
}

LocalDesign::LocalDesign(const std::vector<DesignRow>& rows) {
  if (rows.empty()) throw std::domain_error("locallinear: empty design");
  const auto n = static_cast<Index>(rows.size());
  const Index p = rows.front().kron.size();
  kron_.resize(n, p);
  weights_.resize(n);
  for (Index i = 0; i < n; ++i) {
    kron_.row(i) = rows[static_cast<std::size_t>(i)].kron.transpose();
    weights_[i] = rows[static_cast<std::size_t>(i)].weight;
  }
  gram_ = kron_.transpose() * weights_.asDiagonal() * kron_;
}

Eigen::VectorXd LocalDesign::fitted(const Eigen::MatrixXd& B) const {
  return kron_ * Eigen::Map<const Eigen::VectorXd>(B.data(), B.size());
}

BConditional b_conditional(const Eigen::VectorXd& residuals_minus_tau, const LocalDesign& design, double omega,
                           const LocalLinearPrior& prior) {
  if (!(omega > 0.0)) throw std::domain_error("locallinear: omega must be positive");
  if (residuals_minus_tau.size() != design.size() || design.dim() != prior.M0.size()) {
    throw std::domain_error("locallinear: residual/design/prior dimensions disagree");
  }
  const Eigen::MatrixXd prior_prec = prior.vec_precision();
  const Eigen::Map<const Eigen::VectorXd> m0(prior.M0.data(), prior.M0.size());

  Eigen::MatrixXd precision = omega * design.gram() + prior_prec;
  const Eigen::VectorXd rhs =
      omega * (design.kron().transpose() * design.weights().cwiseProduct(residuals_minus_tau)) + prior_prec * m0;
  if (!rhs.allFinite()) throw NumericError("locallinear", "non-finite residuals in B update");

  BConditional out;
  out.factor.compute(precision);
  if (out.factor.info() != Eigen::Success) {
    precision.diagonal().array() += 1e-10;
    out.factor.compute(precision);
    if (out.factor.info() != Eigen::Success) {
      throw NumericError("locallinear", "posterior precision of B is not positive definite");
    }
  }
  out.mean = out.factor.solve(rhs);
  return out;
}

Eigen::MatrixXd sample_B(const Eigen::VectorXd& residuals_minus_tau, const LocalDesign& design, double omega,
                         const LocalLinearPrior& prior, Rng& rng) {
  const BConditional cond = b_conditional(residuals_minus_tau, design, omega, prior);
  // precision = L L^T, so mean + L^{-T} xi has covariance precision^{-1}
  Eigen::VectorXd xi(cond.mean.size());
  for (Index k = 0; k < xi.size(); ++k) xi[k] = rng.normal();
  const Eigen::VectorXd draw = cond.mean + cond.factor.matrixU().solve(xi);
  return Eigen::Map<const Eigen::MatrixXd>(draw.data(), prior.M0.rows(), prior.M0.cols());
}

Eigen::MatrixXd sample_B(const Eigen::VectorXd& residuals_minus_tau, const std::vector<DesignRow>& rows,
                         double omega, const LocalLinearPrior& prior, Rng& rng) {
  return sample_B(residuals_minus_tau, LocalDesign(rows), omega, prior, rng);
}

double sample_omega(const Eigen::VectorXd& full_residuals, const Eigen::VectorXd& weights,
                    const LocalLinearPrior& prior, Rng& rng) {
  if (full_residuals.size() != weights.size()) throw std::domain_error("locallinear: residual/weight size mismatch");
  if (!full_residuals.allFinite()) throw NumericError("locallinear", "non-finite residuals in omega update");
  const double shape = prior.nu0 + 0.5 * weights.sum();
  const double rate = prior.eta0 + 0.5 * weights.dot(full_residuals.cwiseAbs2());
  return rng.gamma(shape, rate);
}

}  // namespace dbart
