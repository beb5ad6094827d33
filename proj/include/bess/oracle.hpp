#pragma once

// Brute-force baselines used to certify the solver at desk scale.

#include "bess/objective.hpp"
#include "bess/policy.hpp"

#include <optional>
#include <vector>

namespace bess {

struct GridSpec {
  int resolution = 101;  // points per theta axis, end points included
};

struct OracleReport {
  PolicyTheta theta_best;
  double cost_best = 0.0;
  double cost_enki = 0.0;
  double relative_gap = 0.0;
  std::size_t evaluated = 0;
};

double relative_gap(double cost_enki, double cost_best);

// Feasible simplex points (i, j) / (resolution - 1) with i + j <= resolution - 1,
// ordered lexicographically by (i, j).
std::vector<PolicyTheta> simplex_grid(int resolution);

// Exact minimizer of the noise-free rollout cost over the grid; ties keep the
// lexicographically first grid point. When `theta_enki` is given its cost and
// the relative gap are filled in.
OracleReport grid_search_theta(const ControlProblem& problem, const GridSpec& grid,
                               std::optional<PolicyTheta> theta_enki = std::nullopt,
                               int threads = 1);

struct MuOracleResult {
  bool feasible = false;
  Vec shares;  // grid point, sums to 1
  Vec mu;      // shares as applied (scaled when balancing supply)
  double cost = 0.0;  // J + hard penalties, W
  double grid_cell = 0.0;
};

// One-step (H = 1) minimization over raw shares for n <= 3 cells. The last
// share is eliminated through sum = 1 and the others are enumerated on a
// grid of `grid_per_mu` points in [0, 1]. With `balance_supply` each grid
// point is rescaled so the pack covers its losses exactly, as the plant
// does. Constraints use hard-barrier semantics: current, power balance and
// SoC/balance at step k, SoC box and balance on the state one dt later.
MuOracleResult brute_force_mu(const PackState& pack, const PackParams& params, double p_out,
                              const LimitsSpec& limits, int grid_per_mu, double dt = 1.0,
                              bool balance_supply = true);

struct HarmonicSplitReport {
  Vec policy_mu;
  Vec oracle_mu;
  double max_gap = 0.0;
  double grid_cell = 0.0;
  bool oracle_feasible = false;
  bool passed = false;
};

// Compares the theta = (0, 0) policy against the shares found by
// brute_force_mu. The two agree exactly only for equal cell voltages and zero
// converter resistance.
HarmonicSplitReport verify_harmonic_split(const PackState& pack, const PackParams& params, double p_out,
                             const LimitsSpec& limits = {}, int grid_per_mu = 2001,
                             bool balance_supply = true);

}  // namespace bess
