#pragma once

// Stage cost, constraint residuals and the penalized virtual measurement
//
//   y[t] = J[t] / |P_out[t]| + sum_r psi(g_r[t]) + v[t]
//
// whose target value is zero. Residuals are "<= 0 means satisfied" and are
// emitted in this fixed order, n = pack size:
//
//   [0, 2n)       SoC box, per cell: q_min - q_j, q_j - q_max
//   [2n, 4n)      current, per cell (only when P_out != 0):
//                   u_j i_min / |P| - s mu_j, s mu_j - u_j i_max / |P|
//   next n        SoC balance |q_j - q_avg| - dq
//   next n        temperature balance |T_j - T_avg| - dT
//   last          power balance |sum_j (mu_j - s loss_j / |P|) - 1| - tol
//
// with s = +1 when discharging (P_out > 0) and -1 when charging.

#include "bess/model.hpp"
#include "bess/policy.hpp"

#include <span>
#include <vector>

namespace bess {

struct LimitsSpec {
  double soc_min = 0.05;
  double soc_max = 0.95;
  double current_min = -5.0;
  double current_max = 5.0;
  double delta_soc = 0.01;
  double delta_temp = 0.75;
  double power_balance_tol = 0.01;

  void validate() const;
};

enum class BarrierMode { softplus, hard };

inline constexpr double kHardBarrierPenalty = 1e12;

struct BarrierConfig {
  double sharpness = 50.0;  // beta inside exp(beta x)
  double scale = 0.1;       // 1/alpha in front of the log
  BarrierMode mode = BarrierMode::softplus;

  void validate() const;
};

struct VirtualMeasurement {
  double value = 0.0;
  double stage_loss = 0.0;  // W
  double penalty = 0.0;
  Vec residuals;
};

std::size_t residual_count(std::size_t n, double p_out);

double stage_loss(const PackState& pack, const PackParams& params, const Vec& mu, double p_out);

Vec constraint_residuals(const PackState& pack, const PackParams& params, const Vec& mu,
                         double p_out, const LimitsSpec& limits);

// Overload with u(q) already evaluated.
Vec constraint_residuals(const PackState& pack, const PackParams& params, const Vec& mu,
                         double p_out, const LimitsSpec& limits, const Vec& ocv);

// softplus: scale * ln(1 + exp(sharpness x)); hard: 0 for x <= 0, else
// kHardBarrierPenalty.
double barrier(double residual, const BarrierConfig& cfg);

double total_penalty(const Vec& residuals, const BarrierConfig& cfg);

// Shares handed to the plant: pi_theta(x), optionally rescaled by
// supply_scale so the pack covers its own losses.
Vec applied_shares(const PolicyTheta& theta, const PolicyHyper& hyper, const PackState& pack,
                   const PackParams& params, const Vec& resistance_weights, double p_out,
                   const Vec& ocv, bool balance_supply);

VirtualMeasurement virtual_measure(const PackState& pack, const PackParams& params,
                                   const PolicyTheta& theta, const PolicyHyper& hyper,
                                   double p_out, const LimitsSpec& limits,
                                   const BarrierConfig& cfg, double noise,
                                   bool balance_supply = false);

// Everything that defines one receding-horizon subproblem starting at step k.
// `power` holds P_out for t = k..k+H, so horizon() == power.size() - 1.
struct ControlProblem {
  PackState state;
  PackParams params;
  PolicyHyper hyper;
  LimitsSpec limits;
  BarrierConfig barrier;
  std::vector<double> power;
  double dt = 1.0;
  bool balance_supply = true;  // apply supply_scale to the policy output

  int horizon() const { return static_cast<int>(power.size()) - 1; }
  void validate() const;
};

// Closed-loop rollout under pi_theta for t = k..k+H. `noise` must hold H+1
// values (added to each measurement) or be empty for a noise-free rollout.
Vec rollout_measurements(const ControlProblem& problem, const PolicyTheta& theta,
                         std::span<const double> noise = {});

// Noise-free sum_t h(x[t], pi_theta(x[t])) over the horizon.
double rollout_cost(const ControlProblem& problem, const PolicyTheta& theta);

// Largest residual seen along the noise-free rollout (<= 0: feasible).
double rollout_max_residual(const ControlProblem& problem, const PolicyTheta& theta);

}  // namespace bess
