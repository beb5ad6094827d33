#pragma once

// Two-parameter power-sharing policy
//
//   mu_j = theta1 * lq_j + theta2 * lT_j + (1 - theta1 - theta2) * lR_j
//
// where every weight vector is normalized to sum to one, so mu is a convex
// combination of three points of the probability simplex.

#include "bess/errors.hpp"
#include "bess/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bess {

struct PolicyTheta {
  double theta1 = 0.0;
  double theta2 = 0.0;

  double theta3() const { return 1.0 - theta1 - theta2; }
  Eigen::Vector2d vec() const { return {theta1, theta2}; }
  static PolicyTheta from_vec(const Eigen::Vector2d& v) { return {v(0), v(1)}; }

  bool feasible(double tol = 0.0) const {
    return theta1 >= -tol && theta2 >= -tol && theta1 + theta2 <= 1.0 + tol;
  }
  friend bool operator==(const PolicyTheta&, const PolicyTheta&) = default;
};

struct PolicyHyper {
  double beta1 = 8.0;
  double beta2 = 12.0;

  void validate() const {
    if (!(beta1 > 0.0) || !(beta2 > 0.0) || !std::isfinite(beta1) || !std::isfinite(beta2)) {
      throw ConfigError("policy exponents beta1, beta2 must be positive");
    }
  }
};

// w_j = x_j^p / sum_i x_i^p evaluated in log space. Requires x >= 0 and, for
// p < 0, x > 0.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> power_law_weights(
    const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar exponent) {
  using Scalar = typename Derived::Scalar;
  using Out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (x.size() == 0) throw DimensionMismatch("weights of an empty pack");
  if ((x.array() < Scalar(0)).any() || !x.allFinite()) {
    throw DegenerateInput("power-law weights need finite nonnegative inputs");
  }
  if (exponent < Scalar(0) && (x.array() == Scalar(0)).any()) {
    throw DegenerateInput("zero input with a negative exponent");
  }
  Out logw = exponent * x.array().log().matrix();
  const Scalar top = logw.maxCoeff();
  if (!std::isfinite(static_cast<double>(top))) {
    throw DegenerateInput("power-law weights: all inputs are zero");
  }
  Out w = (logw.array() - top).exp().matrix();
  return w / w.sum();
}

// SoC weights: discharge favors high-SoC cells (q^beta1), charge favors
// low-SoC cells (q^-beta1). `p_out_sign` is +1 for P_out >= 0, else -1.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> weights_soc(
    const Eigen::MatrixBase<Derived>& socs, typename Derived::Scalar beta1, int p_out_sign) {
  return power_law_weights(socs, p_out_sign >= 0 ? beta1 : -beta1);
}

// Hotter cells get a smaller share: T^-beta2, normalized.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> weights_temp(
    const Eigen::MatrixBase<Derived>& temps, typename Derived::Scalar beta2) {
  if ((temps.array() <= 0).any()) throw DegenerateInput("temperatures must be positive");
  return power_law_weights(temps, -beta2);
}

// Harmonic weights R_j^-1 / sum_i R_i^-1, the unconstrained loss minimizer
// for equal cell voltages.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> weights_resistance(
    const Eigen::MatrixBase<Derived>& resistances) {
  if (resistances.size() == 0) throw DimensionMismatch("weights of an empty pack");
  if ((resistances.array() <= 0).any() || !resistances.allFinite()) {
    throw DegenerateInput("resistances must be positive and finite");
  }
  const auto inv = resistances.array().inverse().matrix().eval();
  return inv / inv.sum();
}

// Policy evaluation given a precomputed resistance weight vector.
Vec policy_mix(const PolicyTheta& theta, const PolicyHyper& hyper, const PackState& pack,
               const Vec& resistance_weights, double p_out);

Vec policy_eval(const PolicyTheta& theta, const PolicyHyper& hyper, const PackState& pack,
                const Vec& resistances, double p_out);

// Euclidean projection onto {theta1 >= 0, theta2 >= 0, theta1 + theta2 <= 1}.
PolicyTheta project_theta(double raw1, double raw2);
inline PolicyTheta project_theta(const Eigen::Vector2d& raw) { return project_theta(raw(0), raw(1)); }

}  // namespace bess
