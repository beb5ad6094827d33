#include "bess/policy.hpp"

namespace bess {

Vec policy_mix(const PolicyTheta& theta, const PolicyHyper& hyper, const PackState& pack,
               const Vec& resistance_weights, double p_out) {
  if (resistance_weights.size() != pack.soc.size()) {
    throw DimensionMismatch("policy: resistance weights and pack size differ");
  }
  // No demand: allocation is irrelevant, fall back to the loss-optimal split.
  if (p_out == 0.0) return resistance_weights;

  Vec mu = theta.theta3() * resistance_weights;
  if (theta.theta1 != 0.0) mu += theta.theta1 * weights_soc(pack.soc, hyper.beta1, p_out > 0.0 ? 1 : -1);
  if (theta.theta2 != 0.0) mu += theta.theta2 * weights_temp(pack.temperature, hyper.beta2);
  return mu;
}

Vec policy_eval(const PolicyTheta& theta, const PolicyHyper& hyper, const PackState& pack,
                const Vec& resistances, double p_out) {
  if (!theta.feasible(1e-12)) throw DegenerateInput("policy parameters outside the simplex");
  return policy_mix(theta, hyper, pack, weights_resistance(resistances), p_out);
}

PolicyTheta project_theta(double raw1, double raw2) {
  const double a = std::max(raw1, 0.0);
  const double b = std::max(raw2, 0.0);
  if (a + b <= 1.0) return {a, b};
  // Onto the edge theta1 + theta2 = 1, clipped to its end points.
  const double shift = 0.5 * (raw1 + raw2 - 1.0);
  const double t1 = std::clamp(raw1 - shift, 0.0, 1.0);
  return {t1, 1.0 - t1};
}

}  // namespace bess
