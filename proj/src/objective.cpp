#include "bess/objective.hpp"

#include "bess/errors.hpp"

#include <cmath>
#include <string>

namespace bess {

void LimitsSpec::validate() const {
  if (!(soc_min < soc_max)) throw ConfigError("limits: soc_min must be below soc_max");
  if (!(current_min < current_max)) throw ConfigError("limits: current_min must be below current_max");
  if (!(delta_soc > 0.0)) throw ConfigError("limits: delta_soc must be positive");
  if (!(delta_temp > 0.0)) throw ConfigError("limits: delta_temp must be positive");
  if (!(power_balance_tol >= 0.0)) throw ConfigError("limits: power_balance_tol must be >= 0");
}

void BarrierConfig::validate() const {
  if (!(sharpness > 0.0) || !(scale > 0.0)) {
    throw ConfigError("barrier: sharpness and scale must be positive");
  }
}

void ControlProblem::validate() const {
  state.validate();
  params.validate();
  if (state.size() != params.size()) throw DimensionMismatch("state and parameters sizes differ");
  hyper.validate();
  limits.validate();
  barrier.validate();
  if (power.size() < 2) throw ConfigError("horizon must span at least one step");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
}

namespace {

// Visits every residual in the documented order.
template <typename Sink>
void visit_residuals(const PackState& pack, const PackParams& params, const Vec& mu, double p_out,
                     const LimitsSpec& limits, const Vec& ocv, Sink&& sink) {
  const Eigen::Index n = pack.soc.size();
  if (mu.size() != n || ocv.size() != n || static_cast<Eigen::Index>(params.size()) != n) {
    throw DimensionMismatch("residuals: mu, state and parameters must all have length n");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    sink(limits.soc_min - pack.soc(j));
    sink(pack.soc(j) - limits.soc_max);
  }
  const double mag = std::abs(p_out);
  const double s = p_out > 0.0 ? 1.0 : -1.0;
  if (mag > 0.0) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double scale = ocv(j) / mag;
      sink(scale * limits.current_min - s * mu(j));
      sink(s * mu(j) - scale * limits.current_max);
    }
  }
  const double q_avg = pack.soc.mean();
  for (Eigen::Index j = 0; j < n; ++j) sink(std::abs(pack.soc(j) - q_avg) - limits.delta_soc);
  const double t_avg = pack.temperature.mean();
  for (Eigen::Index j = 0; j < n; ++j) {
    sink(std::abs(pack.temperature(j) - t_avg) - limits.delta_temp);
  }
  double delivered = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = params.cells[static_cast<std::size_t>(j)].series_resistance();
    delivered += mu(j) - s * r * mu(j) * mu(j) * mag / (ocv(j) * ocv(j));
  }
  sink(std::abs(delivered - 1.0) - limits.power_balance_tol);
}

double stage_loss_with(const PackParams& params, const Vec& mu, double p_out, const Vec& ocv) {
  double loss = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double current = mu(j) * p_out / ocv(j);
    loss += params.cells[static_cast<std::size_t>(j)].series_resistance() * current * current;
  }
  return loss;
}

double barrier_sum(const Eigen::ArrayXd& x, const BarrierConfig& cfg) {
  if (cfg.mode == BarrierMode::hard) {
    return static_cast<double>((x > 0.0).count()) * kHardBarrierPenalty;
  }
  // ln(1 + e^z) = max(z, 0) + ln(1 + e^-|z|), written without select so
  // Eigen vectorizes exp and log
  const Eigen::ArrayXd z = cfg.sharpness * x;
  return cfg.scale * (z.max(0.0) + ((-z.abs()).exp() + 1.0).log()).sum();
}

struct StageValue {
  double loss;
  double penalty;
  double max_residual;
};

// Array form of visit_residuals + barrier, used inside rollouts.
StageValue stage_value(const PackState& pack, const Eigen::ArrayXd& series_r, const Vec& mu,
                       double p_out, const LimitsSpec& limits, const BarrierConfig& cfg,
                       const Vec& ocv) {
  const auto q = pack.soc.array();
  const auto temp = pack.temperature.array();
  const auto m = mu.array();
  const auto u = ocv.array();
  const double mag = std::abs(p_out);
  const double s = p_out > 0.0 ? 1.0 : -1.0;

  const Eigen::ArrayXd cur2 = (m * p_out / u).square();
  StageValue v{(series_r * cur2).sum(), 0.0, -HUGE_VAL};
  auto block = [&](const Eigen::ArrayXd& r) {
    v.penalty += barrier_sum(r, cfg);
    v.max_residual = std::max(v.max_residual, r.maxCoeff());
  };
  block(limits.soc_min - q);
  block(q - limits.soc_max);
  if (mag > 0.0) {
    block(u * (limits.current_min / mag) - s * m);
    block(s * m - u * (limits.current_max / mag));
  }
  block((q - q.mean()).abs() - limits.delta_soc);
  block((temp - temp.mean()).abs() - limits.delta_temp);
  const double delivered = mag > 0.0 ? m.sum() - s * (series_r * cur2).sum() / mag : m.sum();
  const double pb = std::abs(delivered - 1.0) - limits.power_balance_tol;
  v.penalty += barrier(pb, cfg);
  v.max_residual = std::max(v.max_residual, pb);
  return v;
}

double normalized(double loss, double p_out) {
  return p_out == 0.0 ? 0.0 : loss / std::abs(p_out);
}

// Walks the closed-loop horizon and hands each stage to `on_stage`.
template <typename OnStage>
void rollout(const ControlProblem& problem, const PolicyTheta& theta, OnStage&& on_stage) {
  if (problem.power.size() < 2) throw ConfigError("horizon must span at least one step");
  if (problem.state.size() != problem.params.size() ||
      problem.state.temperature.size() != problem.state.soc.size()) {
    throw DimensionMismatch("rollout: state and parameters sizes differ");
  }
  const Vec lr = weights_resistance(problem.params.internal_resistances());
  const Eigen::ArrayXd series_r = problem.params.series_resistances().array();
  PackState x = problem.state;
  const std::size_t last = problem.power.size() - 1;
  for (std::size_t t = 0; t <= last; ++t) {
    const double p_out = problem.power[t];
    const Vec ocv = open_circuit_voltages(x, problem.params);
    const Vec mu = applied_shares(theta, problem.hyper, x, problem.params, lr, p_out, ocv,
                                  problem.balance_supply);
    on_stage(t, stage_value(x, series_r, mu, p_out, problem.limits, problem.barrier, ocv), p_out);
    if (t < last) {
      x = pack_step(x, problem.params, mu, p_out, problem.dt, ocv).state;
      if (!x.soc.allFinite() || !x.temperature.allFinite()) {
        throw DivergenceError("rollout produced a non-finite pack state");
      }
    }
  }
}

}  // namespace

std::size_t residual_count(std::size_t n, double p_out) {
  return (p_out != 0.0 ? 6 * n : 4 * n) + 1;
}

double stage_loss(const PackState& pack, const PackParams& params, const Vec& mu, double p_out) {
  if (mu.size() != pack.soc.size() || params.size() != pack.size()) {
    throw DimensionMismatch("stage_loss: mu, state and parameters must all have length n");
  }
  return stage_loss_with(params, mu, p_out, open_circuit_voltages(pack, params));
}

Vec constraint_residuals(const PackState& pack, const PackParams& params, const Vec& mu,
                         double p_out, const LimitsSpec& limits) {
  return constraint_residuals(pack, params, mu, p_out, limits, open_circuit_voltages(pack, params));
}

Vec constraint_residuals(const PackState& pack, const PackParams& params, const Vec& mu,
                         double p_out, const LimitsSpec& limits, const Vec& ocv) {
  Vec out(static_cast<Eigen::Index>(residual_count(pack.size(), p_out)));
  Eigen::Index i = 0;
  visit_residuals(pack, params, mu, p_out, limits, ocv, [&](double r) { out(i++) = r; });
  return out;
}

double barrier(double residual, const BarrierConfig& cfg) {
  if (cfg.mode == BarrierMode::hard) return residual <= 0.0 ? 0.0 : kHardBarrierPenalty;
  const double z = cfg.sharpness * residual;
  if (z > 30.0) return cfg.scale * z;
  return cfg.scale * std::log1p(std::exp(z));
}

double total_penalty(const Vec& residuals, const BarrierConfig& cfg) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) sum += barrier(residuals(i), cfg);
  return sum;
}

Vec applied_shares(const PolicyTheta& theta, const PolicyHyper& hyper, const PackState& pack,
                   const PackParams& params, const Vec& resistance_weights, double p_out,
                   const Vec& ocv, bool balance_supply) {
  Vec mu = policy_mix(theta, hyper, pack, resistance_weights, p_out);
  if (balance_supply && p_out != 0.0) mu *= supply_scale(mu, params, ocv, p_out);
  return mu;
}

VirtualMeasurement virtual_measure(const PackState& pack, const PackParams& params,
                                   const PolicyTheta& theta, const PolicyHyper& hyper,
                                   double p_out, const LimitsSpec& limits,
                                   const BarrierConfig& cfg, double noise, bool balance_supply) {
  if (!theta.feasible(1e-12)) throw DegenerateInput("policy parameters outside the simplex");
  const Vec ocv = open_circuit_voltages(pack, params);
  const Vec mu = applied_shares(theta, hyper, pack, params,
                                weights_resistance(params.internal_resistances()), p_out, ocv,
                                balance_supply);
  VirtualMeasurement m;
  m.stage_loss = stage_loss_with(params, mu, p_out, ocv);
  m.residuals = constraint_residuals(pack, params, mu, p_out, limits, ocv);
  m.penalty = total_penalty(m.residuals, cfg);
  m.value = normalized(m.stage_loss, p_out) + m.penalty + noise;
  return m;
}

Vec rollout_measurements(const ControlProblem& problem, const PolicyTheta& theta,
                         std::span<const double> noise) {
  if (!noise.empty() && noise.size() != problem.power.size()) {
    throw DimensionMismatch("rollout: expected one noise value per horizon instant (H+1)");
  }
  if (!theta.feasible(1e-12)) throw DegenerateInput("policy parameters outside the simplex");
  Vec y(static_cast<Eigen::Index>(problem.power.size()));
  rollout(problem, theta, [&](std::size_t t, const StageValue& v, double p_out) {
    const double v_t = noise.empty() ? 0.0 : noise[t];
    y(static_cast<Eigen::Index>(t)) = normalized(v.loss, p_out) + v.penalty + v_t;
  });
  return y;
}

double rollout_cost(const ControlProblem& problem, const PolicyTheta& theta) {
  return rollout_measurements(problem, theta).sum();
}

double rollout_max_residual(const ControlProblem& problem, const PolicyTheta& theta) {
  double worst = -HUGE_VAL;
  rollout(problem, theta, [&](std::size_t, const StageValue& v, double) {
    worst = std::max(worst, v.max_residual);
  });
  return worst;
}

}  // namespace bess
