#include "bess/oracle.hpp"

#include "bess/errors.hpp"
#include "bess/parallel.hpp"

#include <array>
#include <cmath>

namespace bess {

double relative_gap(double cost_enki, double cost_best) {
  return (cost_enki - cost_best) / std::max(cost_best, 1e-12);
}

std::vector<PolicyTheta> simplex_grid(int resolution) {
  if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
  const int last = resolution - 1;
  const double h = 1.0 / last;
  std::vector<PolicyTheta> out;
  out.reserve(static_cast<std::size_t>(resolution) * (resolution + 1) / 2);
  for (int i = 0; i <= last; ++i) {
    for (int j = 0; i + j <= last; ++j) out.push_back({i * h, j * h});
  }
  return out;
}

OracleReport grid_search_theta(const ControlProblem& problem, const GridSpec& grid,
                               std::optional<PolicyTheta> theta_enki, int threads) {
  problem.validate();
  const auto points = simplex_grid(grid.resolution);
  std::vector<double> cost(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) { cost[i] = rollout_cost(problem, points[i]); });

  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (cost[i] < cost[best]) best = i;
  }
  OracleReport report;
  report.theta_best = points[best];
  report.cost_best = cost[best];
  report.evaluated = points.size();
  if (theta_enki) {
    report.cost_enki = rollout_cost(problem, *theta_enki);
    report.relative_gap = relative_gap(report.cost_enki, report.cost_best);
  }
  return report;
}

MuOracleResult brute_force_mu(const PackState& pack, const PackParams& params, double p_out,
                              const LimitsSpec& limits, int grid_per_mu, double dt,
                              bool balance_supply) {
  const std::size_t n = pack.size();
  if (n < 1 || n > 3) throw ConfigError("brute_force_mu enumerates packs of 1 to 3 cells only");
  if (params.size() != n) throw DimensionMismatch("state and parameters sizes differ");
  if (grid_per_mu < 2) throw ConfigError("grid_per_mu must be at least 2");

  std::array<double, 3> u{}, loss_coef{}, soc_rate{}, heat_coef{}, cool{}, q{}, temp{};
  const double mag = std::abs(p_out);
  const double s = p_out > 0.0 ? 1.0 : -1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = params.cells[j];
    const auto e = static_cast<Eigen::Index>(j);
    q[j] = pack.soc(e);
    temp[j] = pack.temperature(e);
    u[j] = params.curve(j)(q[j]);
    loss_coef[j] = c.series_resistance() * p_out * p_out / (u[j] * u[j]);
    soc_rate[j] = dt * p_out / (c.capacity_coulombs * u[j]);
    heat_coef[j] = dt * c.r_internal * p_out * p_out / (u[j] * u[j] * c.c_thermal);
    cool[j] = temp[j] - dt * (temp[j] - pack.env_temperature) / (c.r_convection * c.c_thermal);
  }

  auto mean_dev_ok = [&](const std::array<double, 3>& v, double band) {
    double avg = 0.0;
    for (std::size_t j = 0; j < n; ++j) avg += v[j];
    avg /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(v[j] - avg) - band > 0.0) return false;
    }
    return true;
  };
  auto box_ok = [&](const std::array<double, 3>& v) {
    for (std::size_t j = 0; j < n; ++j) {
      if (limits.soc_min - v[j] > 0.0 || v[j] - limits.soc_max > 0.0) return false;
    }
    return true;
  };
  // Constraints that do not depend on mu.
  const bool state_ok = box_ok(q) && mean_dev_ok(q, limits.delta_soc) && mean_dev_ok(temp, limits.delta_temp);

  // Scale solving sum_j (k w_j - s c_j k^2 w_j^2) = 1, c_j = loss_coef_j / |P|.
  auto scale_of = [&](const std::array<double, 3>& w) {
    if (!balance_supply || mag == 0.0) return 1.0;
    double b = 0.0;
    for (std::size_t j = 0; j < n; ++j) b += loss_coef[j] * w[j] * w[j] / mag;
    if (b == 0.0) return 1.0;
    if (s > 0.0) {
      const double disc = 1.0 - 4.0 * b;
      return disc < 0.0 ? 1.0 / (2.0 * b) : (1.0 - std::sqrt(disc)) / (2.0 * b);
    }
    return (std::sqrt(1.0 + 4.0 * b) - 1.0) / (2.0 * b);
  };

  auto evaluate = [&](const std::array<double, 3>& mu) {
    double j_cost = 0.0;
    double delivered = 0.0;
    bool ok = state_ok;
    std::array<double, 3> q_next{}, t_next{};
    for (std::size_t j = 0; j < n; ++j) {
      j_cost += loss_coef[j] * mu[j] * mu[j];
      delivered += mu[j] - (mag > 0.0 ? s * loss_coef[j] * mu[j] * mu[j] / mag : 0.0);
      if (mag > 0.0) {
        const double scale = u[j] / mag;
        if (scale * limits.current_min - s * mu[j] > 0.0) ok = false;
        if (s * mu[j] - scale * limits.current_max > 0.0) ok = false;
      }
      q_next[j] = q[j] - soc_rate[j] * mu[j];
      t_next[j] = cool[j] + heat_coef[j] * mu[j] * mu[j];
    }
    if (std::abs(delivered - 1.0) - limits.power_balance_tol > 0.0) ok = false;
    if (!box_ok(q_next) || !mean_dev_ok(q_next, limits.delta_soc) ||
        !mean_dev_ok(t_next, limits.delta_temp)) {
      ok = false;
    }
    return std::pair{j_cost + (ok ? 0.0 : kHardBarrierPenalty), ok};
  };

  const int last = grid_per_mu - 1;
  const double h = 1.0 / last;
  MuOracleResult best;
  best.grid_cell = h;
  best.cost = HUGE_VAL;
  std::array<double, 3> best_w{}, best_mu{};
  auto consider = [&](const std::array<double, 3>& w) {
    const double k = scale_of(w);
    const std::array<double, 3> mu{k * w[0], k * w[1], k * w[2]};
    const auto [cost, ok] = evaluate(mu);
    if (cost < best.cost) {
      best.cost = cost;
      best.feasible = ok;
      best_w = w;
      best_mu = mu;
    }
  };

  if (n == 1) {
    consider({1.0, 0.0, 0.0});
  } else if (n == 2) {
    for (int i = 0; i <= last; ++i) consider({i * h, (last - i) * h, 0.0});
  } else {
    for (int i = 0; i <= last; ++i) {
      for (int k = 0; i + k <= last; ++k) consider({i * h, k * h, (last - i - k) * h});
    }
  }
  best.shares.resize(static_cast<Eigen::Index>(n));
  best.mu.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    best.shares(static_cast<Eigen::Index>(j)) = best_w[j];
    best.mu(static_cast<Eigen::Index>(j)) = best_mu[j];
  }
  return best;
}

HarmonicSplitReport verify_harmonic_split(const PackState& pack, const PackParams& params, double p_out,
                             const LimitsSpec& limits, int grid_per_mu, bool balance_supply) {
  HarmonicSplitReport r;
  r.policy_mu = policy_eval({0.0, 0.0}, PolicyHyper{}, pack, params.internal_resistances(), p_out);
  const MuOracleResult oracle =
      brute_force_mu(pack, params, p_out, limits, grid_per_mu, 1.0, balance_supply);
  r.oracle_mu = oracle.shares;
  r.oracle_feasible = oracle.feasible;
  r.grid_cell = oracle.grid_cell;
  r.max_gap = (r.policy_mu - r.oracle_mu).cwiseAbs().maxCoeff();
  r.passed = oracle.feasible && r.max_gap <= r.grid_cell * (1.0 + 1e-9);
  return r;
}

}  // namespace bess
