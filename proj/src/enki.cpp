#include "bess/enki.hpp"

#include "bess/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace bess {

void EnkiConfig::validate() const {
  if (ensemble_size < 2) throw ConfigError("enki: ensemble_size must be at least 2");
  if (!(tolerance > 0.0)) throw ConfigError("enki: tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("enki: max_iterations must be at least 1");
  if (!(noise_variance > 0.0)) throw ConfigError("enki: noise_variance must be positive");
  if (!(step_cap > 0.0)) throw ConfigError("enki: step_cap must be positive");
  if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw ConfigError("enki: alpha0 must lie in (0, 1]");
  if (!(jitter >= 0.0)) throw ConfigError("enki: jitter must be nonnegative");
  if (!prior_mean.feasible(1e-12)) throw ConfigError("enki: prior mean outside the simplex");
  try {
    covariance_factor(prior_cov);
  } catch (const DegenerateInput& e) {
    throw ConfigError(std::string("enki: ") + e.what());
  }
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer chained over the three words
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

Eigen::Matrix2d covariance_factor(const Eigen::Matrix2d& cov) {
  if (!cov.allFinite()) throw DegenerateInput("prior covariance is not finite");
  if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    throw DegenerateInput("prior covariance is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d lambda = eig.eigenvalues();
  if (lambda.minCoeff() < -1e-12 * (1.0 + lambda.cwiseAbs().maxCoeff())) {
    throw DegenerateInput("prior covariance is not positive semidefinite");
  }
  return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Ensemble init_ensemble(const EnkiConfig& cfg, std::mt19937_64& rng) {
  if (cfg.ensemble_size < 1) throw ConfigError("enki: ensemble_size must be positive");
  const Eigen::Matrix2d factor = covariance_factor(cfg.prior_cov);
  const Eigen::Vector2d mean = cfg.prior_mean.vec();
  std::normal_distribution<double> normal(0.0, 1.0);

  Ensemble ens;
  ens.thetas.resize(2, cfg.ensemble_size);
  for (int i = 0; i < cfg.ensemble_size; ++i) {
    Eigen::Vector2d z;
    z(0) = normal(rng);
    z(1) = normal(rng);
    ens.thetas.col(i) = project_theta(Eigen::Vector2d(mean + factor * z)).vec();
  }
  return ens;
}

void evaluate_ensemble(Ensemble& ens, const ControlProblem& problem, const EnkiConfig& cfg) {
  const auto members = static_cast<std::size_t>(ens.size());
  const auto instants = problem.power.size();
  ens.predictions.resize(static_cast<Eigen::Index>(instants), ens.size());
  ens.measurements.resize(static_cast<Eigen::Index>(instants), ens.size());
  parallel_for(members, cfg.threads, [&](std::size_t i) {
    std::mt19937_64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(ens.iteration), i));
    std::normal_distribution<double> normal(0.0, std::sqrt(cfg.noise_variance));
    Vec noise(static_cast<Eigen::Index>(instants));
    for (double& v : noise) v = normal(rng);
    const auto col = static_cast<Eigen::Index>(i);
    ens.predictions.col(col) = rollout_measurements(problem, PolicyTheta::from_vec(ens.thetas.col(col)));
    ens.measurements.col(col) = ens.predictions.col(col) + noise;
  });
  if (!ens.predictions.allFinite()) {
    throw DivergenceError("ensemble produced non-finite measurements at iteration " +
                          std::to_string(ens.iteration));
  }
}

EnkiStats ensemble_stats(const Ensemble& ens) {
  if (ens.predictions.cols() != ens.thetas.cols()) {
    throw DimensionMismatch("ensemble has not been evaluated");
  }
  return ensemble_moments(ens.thetas, ens.predictions);
}

Ensemble kalman_update(const Ensemble& ens, const EnkiStats& stats, double alpha,
                       const EnkiConfig& cfg) {
  if (!ens.measurements.allFinite() || ens.measurements.cols() != ens.thetas.cols()) {
    throw DivergenceError("missing or non-finite measurements at iteration " +
                          std::to_string(ens.iteration));
  }
  const InnovationSolver<double> solver(stats, alpha, cfg.noise_variance, cfg.jitter);
  const Eigen::VectorXd target = Eigen::VectorXd::Zero(ens.measurements.rows());
  const Eigen::MatrixXd delta = solver.increments(ens.measurements, target);

  Ensemble next;
  next.iteration = ens.iteration + 1;
  next.thetas.resize(2, ens.size());
  for (Eigen::Index i = 0; i < ens.size(); ++i) {
    next.thetas.col(i) = project_theta(Eigen::Vector2d(ens.thetas.col(i) + delta.col(i))).vec();
  }
  return next;
}

double bisect_alpha(const std::function<double(double)>& step_norm, double step_cap) {
  if (!(step_norm(1.0) > step_cap)) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo >= 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (step_norm(mid) <= step_cap) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo > 0.0 ? lo : hi;
}

double select_alpha(const Ensemble& ens, const EnkiStats& stats, const EnkiConfig& cfg) {
  if (cfg.alpha_mode == AlphaMode::fixed_schedule) {
    return std::min(1.0, cfg.alpha0 * std::ldexp(1.0, std::min(ens.iteration, 60)));
  }
  if (!std::isfinite(cfg.step_cap)) return 1.0;
  const Eigen::VectorXd target = Eigen::VectorXd::Zero(stats.y_mean.size());
  return bisect_alpha(
      [&](double alpha) {
        return InnovationSolver<double>(stats, alpha, cfg.noise_variance, cfg.jitter)
            .mean_increment(target)
            .norm();
      },
      cfg.step_cap);
}

EnkiResult solve(const ControlProblem& problem, const EnkiConfig& cfg,
                 const DiagnosticsSink& diagnostics) {
  cfg.validate();
  problem.validate();

  std::mt19937_64 rng(cfg.seed);
  Ensemble ens = init_ensemble(cfg, rng);

  EnkiResult result;
  Eigen::Vector2d mean = ens.thetas.rowwise().mean();
  for (int it = 0; it < cfg.max_iterations; ++it) {
    evaluate_ensemble(ens, problem, cfg);
    const EnkiStats stats = ensemble_stats(ens);
    const double alpha = select_alpha(ens, stats, cfg);
    const double misfit = ens.predictions.colwise().squaredNorm().mean();
    ens = kalman_update(ens, stats, alpha, cfg);

    const Eigen::Vector2d next_mean = ens.thetas.rowwise().mean();
    result.final_step_norm = (next_mean - mean).norm();
    result.iterations = it + 1;
    mean = next_mean;
    if (diagnostics) diagnostics({it, alpha, misfit, mean, result.final_step_norm});
    if (result.final_step_norm < cfg.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.theta_star = project_theta(mean);
  const Eigen::Matrix2Xd centered = ens.thetas.colwise() - mean;
  result.posterior_cov = centered * centered.transpose() / static_cast<double>(ens.size() - 1);
  return result;
}

}  // namespace bess
