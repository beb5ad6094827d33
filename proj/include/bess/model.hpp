#pragma once

// Electro-thermal Rint model of a pack of independently converter-coupled
// cells. Power-sharing ratios mu_j are nonnegative shares of |P_out|; the
// signed cell power is mu_j * P_out, so positive P_out discharges.

#include <Eigen/Dense>

#include <cstddef>
#include <utility>
#include <vector>

namespace bess {

using Vec = Eigen::VectorXd;

inline constexpr double kSecondsPerHour = 3600.0;

struct CellParams {
  double capacity_coulombs = 2.5 * kSecondsPerHour;
  double r_internal = 0.030;
  double r_converter = 0.010;
  double c_thermal = 40.23;
  double r_convection = 41.05;

  static CellParams from_amp_hours(double amp_hours, double r_internal, double r_converter,
                                   double c_thermal, double r_convection) {
    return {amp_hours * kSecondsPerHour, r_internal, r_converter, c_thermal, r_convection};
  }

  double series_resistance() const { return r_internal + r_converter; }
  double thermal_time_constant() const { return r_convection * c_thermal; }

  // Throws ConfigError unless every field is strictly positive and finite.
  void validate() const;
};

// Piecewise-linear open-circuit voltage u(q), clamped to the end values
// outside the breakpoint range.
class OcvCurve {
 public:
  using Breakpoint = std::pair<double, double>;  // (soc, volts)

  OcvCurve() = default;
  explicit OcvCurve(std::vector<Breakpoint> breakpoints);

  // {(0,3.0), (0.1,3.4), (0.5,3.6), (0.9,4.0), (1,4.2)} V
  static OcvCurve default_li_ion();

  double operator()(double soc) const;

  bool empty() const { return soc_.empty(); }
  std::vector<Breakpoint> breakpoints() const;

 private:
  std::vector<double> soc_;
  std::vector<double> volts_;
};

struct CellState {
  double soc = 0.0;
  double temperature = 298.0;
};

// Structure-of-arrays pack state: x = [q_1..q_n, T_1..T_n] plus ambient.
struct PackState {
  Vec soc;
  Vec temperature;
  double env_temperature = 298.0;

  std::size_t size() const { return static_cast<std::size_t>(soc.size()); }
  CellState cell(std::size_t j) const {
    return {soc(static_cast<Eigen::Index>(j)), temperature(static_cast<Eigen::Index>(j))};
  }
  void validate() const;
};

// Static per-cell constants. `ocv` holds either one curve shared by every
// cell or one curve per cell.
struct PackParams {
  std::vector<CellParams> cells;
  std::vector<OcvCurve> ocv;

  std::size_t size() const { return cells.size(); }
  const OcvCurve& curve(std::size_t j) const { return ocv.size() == 1 ? ocv.front() : ocv[j]; }

  Vec internal_resistances() const;
  Vec series_resistances() const;
  void validate() const;
};

double ocv_eval(const OcvCurve& curve, double soc);

// i = mu * P_out / u(q); positive is discharging.
double cell_current(const CellState& state, const CellParams& params, const OcvCurve& curve,
                    double mu, double p_out);

// v = u(q) - R i
double cell_terminal_voltage(const CellState& state, const CellParams& params,
                             const OcvCurve& curve, double current);

// (R + R_C) mu^2 P_out^2 / u^2(q): cell plus converter loss.
double power_loss(const CellState& state, const CellParams& params, const OcvCurve& curve,
                  double mu, double p_out);

struct SocUpdate {
  double soc;
  bool clamped;
};

SocUpdate soc_step(const CellState& state, const CellParams& params, const OcvCurve& curve,
                   double mu, double p_out, double dt);

// Forward-Euler lumped thermal step. Only R_j heats the cell; converter loss
// is dissipated elsewhere.
double temp_step(const CellState& state, const CellParams& params, const OcvCurve& curve,
                 double mu, double p_out, double t_env, double dt);

struct PackUpdate {
  PackState state;
  std::size_t clamped_cells = 0;
};

Vec open_circuit_voltages(const PackState& pack, const PackParams& params);

PackUpdate pack_step(const PackState& pack, const PackParams& params, const Vec& mu, double p_out,
                     double dt);

// Same as above with u(q) already evaluated for `pack`.
PackUpdate pack_step(const PackState& pack, const PackParams& params, const Vec& mu, double p_out,
                     double dt, const Vec& ocv);

// Factor kappa >= 0 such that the shares kappa * mu deliver exactly |P_out|
// to the load after cell and converter losses:
//
//   sum_j (kappa mu_j - s (R_j + R_C) kappa^2 mu_j^2 |P_out| / u_j^2) = 1
//
// with s = +1 discharging, -1 charging. When discharge demand exceeds what
// the pack can deliver the power-maximizing factor is returned instead.
double supply_scale(const Vec& mu, const PackParams& params, const Vec& ocv, double p_out);

}  // namespace bess
