#include "bess/errors.hpp"
#include "bess/harness.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <optional>

namespace bess {

double generate_profile(const PowerProfile& profile, double t) {
  if (t < 0.0) throw DegenerateInput("profile queried at negative time");
  if (profile.kind == ProfileKind::square_wave) {
    const auto segment = static_cast<long long>(std::floor(t / profile.half_period + 1e-12));
    return segment % 2 == 0 ? profile.amplitude : -profile.amplitude;
  }
  const auto index = static_cast<std::size_t>(std::floor(t / profile.sample_dt + 1e-12));
  if (index >= profile.samples.size()) {
    throw ConfigError("profile has no sample at t = " + std::to_string(t) + " s");
  }
  return profile.samples[index];
}

std::vector<double> horizon_power(const PowerProfile& profile, int k, int horizon, double dt) {
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  std::vector<double> power(static_cast<std::size_t>(horizon) + 1);
  for (int h = 0; h <= horizon; ++h) power[static_cast<std::size_t>(h)] = generate_profile(profile, (k + h) * dt);
  return power;
}

InitialPack init_pack(const SimConfig& cfg, std::mt19937_64& rng) {
  const auto& spec = cfg.pack;
  if (spec.size < 1) throw ConfigError("pack.size must be at least 1");
  InitialPack out;
  const auto n = static_cast<Eigen::Index>(spec.size);
  out.state.soc.resize(n);
  out.state.temperature.resize(n);
  out.state.env_temperature = spec.env_temperature;
  out.params.ocv = {spec.ocv};
  out.params.cells.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    CellParams c;
    c.capacity_coulombs = spec.capacity_ah * kSecondsPerHour;
    c.r_internal = spec.r_internal.draw(rng);
    c.r_converter = spec.r_converter.draw(rng);
    c.c_thermal = spec.c_thermal.draw(rng);
    c.r_convection = spec.r_convection.draw(rng);
    out.params.cells.push_back(c);
    out.state.soc(j) = spec.initial_soc.draw(rng);
    out.state.temperature(j) = spec.initial_temperature.draw(rng);
  }
  out.params.validate();
  out.state.validate();
  return out;
}

ControlProblem make_problem(const SimConfig& cfg, const PackState& state, const PackParams& params,
                            int k) {
  ControlProblem p;
  p.state = state;
  p.params = params;
  p.hyper = cfg.hyper;
  p.limits = cfg.limits;
  p.barrier = cfg.barrier;
  p.power = horizon_power(cfg.profile, k, cfg.horizon, cfg.dt);
  p.dt = cfg.dt;
  p.balance_supply = cfg.balance_supply;
  return p;
}

namespace {

double max_deviation(const Vec& v) { return (v.array() - v.mean()).abs().maxCoeff(); }

// Prior for the next control step: centred on the last solution, with the
// posterior spread floored at `floor` along every principal axis.
Eigen::Matrix2d warm_prior_cov(const Eigen::Matrix2d& posterior, double floor) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(0.5 * (posterior + posterior.transpose()));
  const Eigen::Vector2d lambda = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

constexpr double kWarmCovFloor = 0.04;

}  // namespace

std::vector<StepRecord> run_simulation(const SimConfig& cfg, const SimulationHooks& hooks) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  auto [state, params] = init_pack(cfg, rng);
  const Vec lr = weights_resistance(params.internal_resistances());

  EnkiConfig enki = cfg.enki;
  std::optional<PolicyTheta> previous;
  std::vector<StepRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.steps()));

  for (int k = 0; k < cfg.steps(); ++k) {
    const ControlProblem problem = make_problem(cfg, state, params, k);
    enki.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(k), 0x656e6b69ULL);

    DiagnosticsSink sink;
    if (hooks.on_iteration) sink = [&](const IterationDiagnostics& d) { hooks.on_iteration(k, d); };

    const auto start = std::chrono::steady_clock::now();
    const EnkiResult result = solve(problem, enki, sink);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    StepRecord rec;
    rec.t = k * cfg.dt;
    rec.converged = result.converged;
    rec.theta_star = (result.converged || !previous) ? result.theta_star : *previous;
    rec.enki_iterations = result.iterations;
    rec.solve_time = elapsed;
    rec.p_out = problem.power.front();

    const Vec ocv = open_circuit_voltages(state, params);
    rec.mu = applied_shares(rec.theta_star, cfg.hyper, state, params, lr, rec.p_out, ocv,
                            cfg.balance_supply);
    rec.socs = state.soc;
    rec.temps = state.temperature;
    rec.max_soc_dev = max_deviation(state.soc);
    rec.max_temp_dev = max_deviation(state.temperature);
    rec.total_loss = stage_loss(state, params, rec.mu, rec.p_out);
    const Vec residuals = constraint_residuals(state, params, rec.mu, rec.p_out, cfg.limits, ocv);
    rec.power_balance_residual = residuals(residuals.size() - 1) + cfg.limits.power_balance_tol;
    rec.infeasible = rollout_max_residual(problem, rec.theta_star) > 0.0;

    if (cfg.warm_start) {
      enki.prior_mean = rec.theta_star;
      enki.prior_cov = warm_prior_cov(result.posterior_cov, kWarmCovFloor);
    }
    previous = rec.theta_star;

    state = pack_step(state, params, rec.mu, rec.p_out, cfg.dt, ocv).state;
    if (!state.soc.allFinite() || !state.temperature.allFinite()) {
      records.push_back(rec);
      throw DivergenceError("plant state became non-finite after t = " + std::to_string(rec.t) + " s");
    }
    if (hooks.on_step) hooks.on_step(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<BenchEntry> bench(const SimConfig& base, const std::vector<int>& pack_sizes,
                              const std::vector<int>& ensemble_sizes, int steps) {
  if (steps < 1) throw ConfigError("bench needs at least one step");
  std::vector<BenchEntry> out;
  for (int n : pack_sizes) {
    for (int members : ensemble_sizes) {
      SimConfig cfg = base;
      cfg.pack.size = n;
      // same watts per cell as the base pack, otherwise small packs run
      // against the current limits and just burn iterations
      const double per_cell = static_cast<double>(n) / base.pack.size;
      cfg.profile.amplitude *= per_cell;
      for (double& p : cfg.profile.samples) p *= per_cell;
      cfg.enki.ensemble_size = members;
      cfg.duration = steps * cfg.dt;
      const auto records = run_simulation(cfg);
      BenchEntry e{n, members, steps, 0.0, 0.0, 0.0, 0.0};
      for (const auto& r : records) {
        e.mean_solve_time += r.solve_time;
        e.max_solve_time = std::max(e.max_solve_time, r.solve_time);
        e.mean_iterations += r.enki_iterations;
      }
      e.time_per_iteration = e.mean_solve_time / std::max(e.mean_iterations, 1.0);
      e.mean_solve_time /= static_cast<double>(records.size());
      e.mean_iterations /= static_cast<double>(records.size());
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace bess
