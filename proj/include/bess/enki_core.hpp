#pragma once

// Dimension-agnostic ensemble Kalman inversion algebra. Ensembles are stored
// column-wise: parameters are p x N, measurements m x N.

#include "bess/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace bess {

template <typename Scalar>
struct EnsembleMoments {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Column = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Column theta_mean;
  Column y_mean;
  Matrix cov_theta;  // p x p
  Matrix cov_y;      // m x m
  Matrix cross_cov;  // p x m
};

// Sample means and unbiased (1/(N-1)) covariances.
template <typename DerivedT, typename DerivedY>
EnsembleMoments<typename DerivedT::Scalar> ensemble_moments(const Eigen::MatrixBase<DerivedT>& thetas,
                                                            const Eigen::MatrixBase<DerivedY>& ys) {
  using Scalar = typename DerivedT::Scalar;
  const Eigen::Index n = thetas.cols();
  if (n < 2) throw DegenerateInput("ensemble statistics need at least two members");
  if (ys.cols() != n) throw DimensionMismatch("parameter and measurement ensembles differ in size");

  EnsembleMoments<Scalar> m;
  m.theta_mean = thetas.rowwise().mean();
  m.y_mean = ys.rowwise().mean();
  const auto dt = (thetas.colwise() - m.theta_mean).eval();
  const auto dy = (ys.colwise() - m.y_mean).eval();
  const Scalar norm = Scalar(1) / Scalar(n - 1);
  m.cov_theta = norm * dt * dt.transpose();
  m.cov_y = norm * dy * dy.transpose();
  m.cross_cov = norm * dt * dy.transpose();
  return m;
}

// Factorization of the innovation covariance  Sigma_y + (R / alpha + jitter) I.
template <typename Scalar>
class InnovationSolver {
 public:
  using Matrix = typename EnsembleMoments<Scalar>::Matrix;

  InnovationSolver(const EnsembleMoments<Scalar>& m, Scalar alpha, Scalar noise_variance,
                   Scalar jitter)
      : moments_(m) {
    if (!(alpha > Scalar(0)) || alpha > Scalar(1)) {
      throw DegenerateInput("tempering factor must lie in (0, 1]");
    }
    if (!m.cov_y.allFinite() || !m.cross_cov.allFinite()) {
      throw DivergenceError("non-finite ensemble measurements");
    }
    Matrix a = m.cov_y;
    a.diagonal().array() += noise_variance / alpha + jitter;
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) {
      throw DivergenceError("innovation covariance is not positive definite");
    }
  }

  // K (target - y) for every column of `ys`, K = Sigma_ty (Sigma_y + R/alpha)^-1.
  template <typename DerivedY, typename DerivedTarget>
  Matrix increments(const Eigen::MatrixBase<DerivedY>& ys,
                    const Eigen::MatrixBase<DerivedTarget>& target) const {
    const Matrix innovation = (-ys).colwise() + target;
    return moments_.cross_cov * llt_.solve(innovation);
  }

  template <typename DerivedTarget>
  typename EnsembleMoments<Scalar>::Column mean_increment(
      const Eigen::MatrixBase<DerivedTarget>& target) const {
    return moments_.cross_cov * llt_.solve((target - moments_.y_mean).eval());
  }

 private:
  const EnsembleMoments<Scalar>& moments_;
  Eigen::LLT<Matrix> llt_;
};

}  // namespace bess
