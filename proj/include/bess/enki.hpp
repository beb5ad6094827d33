#pragma once

// Ensemble Kalman inversion over the two policy weights. Each iteration rolls
// the ensemble through the horizon, forms sample moments, picks a tempering
// factor alpha and moves every member toward the zero observation:
//
//   theta_i <- P( theta_i + S_ty (S_y + R/alpha I)^-1 (0 - y_i) )
//
// with P the projection onto the feasible simplex.

#include "bess/enki_core.hpp"
#include "bess/objective.hpp"
#include "bess/policy.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace bess {

enum class AlphaMode { bisection, fixed_schedule };

struct EnkiConfig {
  int ensemble_size = 50;
  double tolerance = 1e-4;
  int max_iterations = 100;
  double noise_variance = 1e-2;
  PolicyTheta prior_mean{1.0 / 3.0, 1.0 / 3.0};
  Eigen::Matrix2d prior_cov = 0.25 * Eigen::Matrix2d::Identity();
  AlphaMode alpha_mode = AlphaMode::bisection;
  double step_cap = 0.2;
  double alpha0 = 0.1;  // first factor of the fixed schedule
  double jitter = 1e-10;
  std::uint64_t seed = 0;
  int threads = 1;  // 0: hardware concurrency

  void validate() const;
};

struct Ensemble {
  Eigen::Matrix2Xd thetas;
  Eigen::MatrixXd predictions;   // (H+1) x N noise-free h along each rollout
  Eigen::MatrixXd measurements;  // predictions plus the member's noise draw
  int iteration = 0;

  Eigen::Index size() const { return thetas.cols(); }
};

using EnkiStats = EnsembleMoments<double>;

struct EnkiResult {
  PolicyTheta theta_star;
  int iterations = 0;
  double final_step_norm = 0.0;
  bool converged = false;
  Eigen::Matrix2d posterior_cov = Eigen::Matrix2d::Zero();
};

struct IterationDiagnostics {
  int iteration;
  double alpha;
  double misfit;  // mean over members of the noise-free ||h_i||^2
  Eigen::Vector2d theta_mean;
  double step_norm;
};

using DiagnosticsSink = std::function<void(const IterationDiagnostics&)>;

// Independent stream for (seed, a, b); used to give every ensemble member its
// own measurement noise regardless of evaluation order.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

// Factor L with L L^T = cov; accepts positive semidefinite covariances.
Eigen::Matrix2d covariance_factor(const Eigen::Matrix2d& cov);

Ensemble init_ensemble(const EnkiConfig& cfg, std::mt19937_64& rng);

// Rolls out every member and stores its noise-free and noisy measurement
// vectors. Noise for member i comes from stream_seed(cfg.seed, iteration, i).
void evaluate_ensemble(Ensemble& ens, const ControlProblem& problem, const EnkiConfig& cfg);

// Moments of (thetas, predictions). The noise enters through the innovation
// only, so R is not counted twice.
EnkiStats ensemble_stats(const Ensemble& ens);

Ensemble kalman_update(const Ensemble& ens, const EnkiStats& stats, double alpha,
                       const EnkiConfig& cfg);

// Largest alpha in (0, 1] with step_norm(alpha) <= step_cap, by bisection.
double bisect_alpha(const std::function<double(double)>& step_norm, double step_cap);

double select_alpha(const Ensemble& ens, const EnkiStats& stats, const EnkiConfig& cfg);

EnkiResult solve(const ControlProblem& problem, const EnkiConfig& cfg,
                 const DiagnosticsSink& diagnostics = {});

}  // namespace bess
