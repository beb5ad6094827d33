#include "bess/model.hpp"

#include "bess/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bess {

namespace {

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void CellParams::validate() const {
  if (!positive_finite(capacity_coulombs) || !positive_finite(r_internal) ||
      !positive_finite(r_converter) || !positive_finite(c_thermal) ||
      !positive_finite(r_convection)) {
    throw ConfigError("cell parameters must be strictly positive and finite");
  }
}

OcvCurve::OcvCurve(std::vector<Breakpoint> breakpoints) {
  if (breakpoints.empty()) throw ConfigError("OCV curve has no breakpoints");
  soc_.reserve(breakpoints.size());
  volts_.reserve(breakpoints.size());
  for (const auto& [soc, volts] : breakpoints) {
    if (!std::isfinite(soc) || !positive_finite(volts)) {
      throw ConfigError("OCV breakpoint must have finite soc and positive voltage");
    }
    if (!soc_.empty()) {
      if (soc <= soc_.back()) throw ConfigError("OCV breakpoints must be strictly increasing in soc");
      if (volts < volts_.back()) throw ConfigError("OCV curve must be non-decreasing in soc");
    }
    soc_.push_back(soc);
    volts_.push_back(volts);
  }
}

OcvCurve OcvCurve::default_li_ion() {
  return OcvCurve({{0.0, 3.00}, {0.1, 3.40}, {0.5, 3.60}, {0.9, 4.00}, {1.0, 4.20}});
}

double OcvCurve::operator()(double soc) const {
  if (soc_.empty()) throw ConfigError("OCV curve has no breakpoints");
  if (soc <= soc_.front()) return volts_.front();
  if (soc >= soc_.back()) return volts_.back();
  const auto hi = static_cast<std::size_t>(
      std::upper_bound(soc_.begin(), soc_.end(), soc) - soc_.begin());
  const std::size_t lo = hi - 1;
  const double w = (soc - soc_[lo]) / (soc_[hi] - soc_[lo]);
  return volts_[lo] + w * (volts_[hi] - volts_[lo]);
}

std::vector<OcvCurve::Breakpoint> OcvCurve::breakpoints() const {
  std::vector<Breakpoint> out;
  out.reserve(soc_.size());
  for (std::size_t i = 0; i < soc_.size(); ++i) out.emplace_back(soc_[i], volts_[i]);
  return out;
}

void PackState::validate() const {
  if (soc.size() == 0) throw ConfigError("pack must contain at least one cell");
  if (temperature.size() != soc.size()) {
    throw DimensionMismatch("pack state: soc and temperature lengths differ");
  }
  if (!positive_finite(env_temperature)) throw ConfigError("ambient temperature must be positive");
  for (Eigen::Index j = 0; j < soc.size(); ++j) {
    if (!(soc(j) >= 0.0 && soc(j) <= 1.0)) {
      throw ConfigError("cell " + std::to_string(j) + ": soc outside [0, 1]");
    }
    if (!positive_finite(temperature(j))) {
      throw ConfigError("cell " + std::to_string(j) + ": temperature must be positive");
    }
  }
}

Vec PackParams::internal_resistances() const {
  Vec r(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t j = 0; j < cells.size(); ++j) r(static_cast<Eigen::Index>(j)) = cells[j].r_internal;
  return r;
}

Vec PackParams::series_resistances() const {
  Vec r(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t j = 0; j < cells.size(); ++j) {
    r(static_cast<Eigen::Index>(j)) = cells[j].series_resistance();
  }
  return r;
}

void PackParams::validate() const {
  if (cells.empty()) throw ConfigError("pack must contain at least one cell");
  if (ocv.size() != 1 && ocv.size() != cells.size()) {
    throw ConfigError("expected one shared OCV curve or one per cell");
  }
  for (const auto& c : cells) c.validate();
  for (const auto& c : ocv) {
    if (c.empty()) throw ConfigError("OCV curve has no breakpoints");
  }
}

double ocv_eval(const OcvCurve& curve, double soc) { return curve(soc); }

double cell_current(const CellState& state, const CellParams&, const OcvCurve& curve, double mu,
                    double p_out) {
  const double u = curve(state.soc);
  if (!(u > 0.0)) throw DegenerateInput("open-circuit voltage must be positive");
  return mu * p_out / u;
}

double cell_terminal_voltage(const CellState& state, const CellParams& params,
                             const OcvCurve& curve, double current) {
  return curve(state.soc) - params.r_internal * current;
}

double power_loss(const CellState& state, const CellParams& params, const OcvCurve& curve,
                  double mu, double p_out) {
  const double u = curve(state.soc);
  if (!(u > 0.0)) throw DegenerateInput("open-circuit voltage must be positive");
  const double current = mu * p_out / u;
  return params.series_resistance() * current * current;
}

SocUpdate soc_step(const CellState& state, const CellParams& params, const OcvCurve& curve,
                   double mu, double p_out, double dt) {
  const double current = mu * p_out / curve(state.soc);
  const double next = state.soc - dt * current / params.capacity_coulombs;
  const double clamped = std::clamp(next, 0.0, 1.0);
  return {clamped, clamped != next};
}

double temp_step(const CellState& state, const CellParams& params, const OcvCurve& curve,
                 double mu, double p_out, double t_env, double dt) {
  const double current = mu * p_out / curve(state.soc);
  const double heat = params.r_internal * current * current;
  const double convection = (state.temperature - t_env) / params.r_convection;
  return state.temperature + dt * (heat - convection) / params.c_thermal;
}

Vec open_circuit_voltages(const PackState& pack, const PackParams& params) {
  Vec u(pack.soc.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    u(j) = params.curve(static_cast<std::size_t>(j))(pack.soc(j));
  }
  return u;
}

PackUpdate pack_step(const PackState& pack, const PackParams& params, const Vec& mu, double p_out,
                     double dt) {
  return pack_step(pack, params, mu, p_out, dt, open_circuit_voltages(pack, params));
}

PackUpdate pack_step(const PackState& pack, const PackParams& params, const Vec& mu, double p_out,
                     double dt, const Vec& ocv) {
  const Eigen::Index n = pack.soc.size();
  if (mu.size() != n || ocv.size() != n || pack.temperature.size() != n ||
      static_cast<Eigen::Index>(params.size()) != n) {
    throw DimensionMismatch("pack_step: mu, state and parameters must all have length n");
  }
  PackUpdate out{pack, 0};
  for (Eigen::Index j = 0; j < n; ++j) {
    const CellParams& c = params.cells[static_cast<std::size_t>(j)];
    const double current = mu(j) * p_out / ocv(j);
    const double next = pack.soc(j) - dt * current / c.capacity_coulombs;
    const double clamped = std::clamp(next, 0.0, 1.0);
    if (clamped != next) ++out.clamped_cells;
    out.state.soc(j) = clamped;
    const double heat = c.r_internal * current * current;
    const double convection = (pack.temperature(j) - pack.env_temperature) / c.r_convection;
    out.state.temperature(j) = pack.temperature(j) + dt * (heat - convection) / c.c_thermal;
  }
  return out;
}

double supply_scale(const Vec& mu, const PackParams& params, const Vec& ocv, double p_out) {
  if (mu.size() != ocv.size() || static_cast<std::size_t>(mu.size()) != params.size()) {
    throw DimensionMismatch("supply_scale: mu, ocv and parameters must all have length n");
  }
  const double mag = std::abs(p_out);
  const double a = mu.sum();
  double b = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    b += params.cells[static_cast<std::size_t>(j)].series_resistance() * mu(j) * mu(j) * mag /
         (ocv(j) * ocv(j));
  }
  if (!(a > 0.0)) throw DegenerateInput("supply_scale: shares sum to zero");
  if (b == 0.0) return 1.0 / a;
  if (p_out > 0.0) {
    // b k^2 - a k + 1 = 0, smaller root
    const double disc = a * a - 4.0 * b;
    if (disc < 0.0) return a / (2.0 * b);
    return 2.0 / (a + std::sqrt(disc));
  }
  // b k^2 + a k - 1 = 0, positive root
  return 2.0 / (a + std::sqrt(a * a + 4.0 * b));
}

}  // namespace bess
