#include "doctest.h"

#include "bess/errors.hpp"
#include "bess/objective.hpp"

#include <cmath>
#include <random>

using namespace bess;
using doctest::Approx;

namespace {

PackParams uniform_params(int n, double r, double rc, OcvCurve curve) {
  PackParams p;
  for (int j = 0; j < n; ++j) {
    CellParams c;
    c.r_internal = r;
    c.r_converter = rc;
    p.cells.push_back(c);
  }
  p.ocv = {std::move(curve)};
  return p;
}

OcvCurve flat(double v) { return OcvCurve({{0.0, v}, {1.0, v}}); }

PackState pack_of(Vec soc, double temp = 298.0) {
  PackState p;
  p.temperature = Vec::Constant(soc.size(), temp);
  p.soc = std::move(soc);
  return p;
}

ControlProblem random_problem(std::mt19937_64& rng, int n, int horizon) {
  std::uniform_real_distribution<double> q(0.6, 0.8), t(298.0, 299.0), r(0.03, 0.04);
  ControlProblem p;
  p.params = uniform_params(n, 0.03, 0.01, OcvCurve::default_li_ion());
  p.state.soc.resize(n);
  p.state.temperature.resize(n);
  for (int j = 0; j < n; ++j) {
    p.params.cells[static_cast<std::size_t>(j)].r_internal = r(rng);
    p.state.soc(j) = q(rng);
    p.state.temperature(j) = t(rng);
  }
  p.power.assign(static_cast<std::size_t>(horizon) + 1, 10.0 * n);
  if (horizon >= 2) p.power.back() = -10.0 * n;
  return p;
}

}  // namespace

TEST_CASE("stage loss") {
  const auto params = uniform_params(2, 0.03, 0.01, flat(3.6));
  const PackState pack = pack_of(Vec{{0.5, 0.5}});
  CHECK(stage_loss(pack, params, Vec{{0.5, 0.5}}, 1000.0) ==
        Approx(1543.2098765432097).epsilon(1e-14));
  CHECK(stage_loss(pack, params, Vec::Zero(2), 1000.0) == 0.0);

  const auto one = uniform_params(1, 0.03, 0.01, flat(3.6));
  const PackState p1 = pack_of(Vec{{0.5}});
  CHECK(stage_loss(p1, one, Vec{{1.0}}, 700.0) ==
        power_loss(p1.cell(0), one.cells[0], one.curve(0), 1.0, 700.0));
  CHECK_THROWS_AS(stage_loss(pack, params, Vec{{1.0}}, 1000.0), DimensionMismatch);
}

TEST_CASE("residual layout and examples") {
  const auto params = uniform_params(2, 0.03, 0.01, flat(3.6));
  const PackState pack = pack_of(Vec{{0.72, 0.70}});
  LimitsSpec lim;
  const Vec mu{{0.02, 0.98}};
  const Vec g = constraint_residuals(pack, params, mu, 1000.0, lim);
  REQUIRE(g.size() == 13);
  CHECK(residual_count(2, 1000.0) == 13);
  CHECK(residual_count(2, 0.0) == 9);

  CHECK(g(0) == Approx(0.05 - 0.72));
  CHECK(g(1) == Approx(0.72 - 0.95));
  CHECK(g(2) == Approx(0.05 - 0.70));
  // current pairs: u i_min / |P| - mu, mu - u i_max / |P|
  CHECK(g(4) == Approx(3.6 * -5.0 / 1000.0 - 0.02));
  CHECK(g(5) == Approx(0.002));
  CHECK(g(5) > 0.0);
  // SoC balance sits exactly on the boundary
  CHECK(g(8) == Approx(0.0).epsilon(1e-12));
  CHECK(g(9) == Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(g(8)) < 1e-12);
  CHECK(g(10) == Approx(-0.75));
  CHECK(g(11) == Approx(-0.75));

  // charging flips the sign on mu
  const Vec gc = constraint_residuals(pack, params, mu, -1000.0, lim);
  CHECK(gc(4) == Approx(3.6 * -5.0 / 1000.0 + 0.02));
  CHECK(gc(5) == Approx(-0.02 - 0.018));

  const Vec g0 = constraint_residuals(pack, params, mu, 0.0, lim);
  CHECK(g0.size() == 9);
}

TEST_CASE("power balance residual") {
  LimitsSpec lim;
  lim.power_balance_tol = 0.0;
  const auto lossless = uniform_params(3, 1e-300, 0.0, flat(3.6));
  const PackState pack = pack_of(Vec::Constant(3, 0.5));
  const Vec mu = Vec::Constant(3, 1.0 / 3.0);
  const Vec g = constraint_residuals(pack, lossless, mu, 100.0, lim);
  CHECK(std::abs(g(g.size() - 1)) < 1e-15);

  // with losses and sum(mu) = 1 the lhs misses 1 by exactly the loss fraction
  const auto lossy = uniform_params(3, 0.03, 0.01, flat(3.6));
  const double frac = stage_loss(pack, lossy, mu, 100.0) / 100.0;
  const Vec g2 = constraint_residuals(pack, lossy, mu, 100.0, lim);
  CHECK(g2(g2.size() - 1) == Approx(frac).epsilon(1e-12));
  const Vec g3 = constraint_residuals(pack, lossy, mu, -100.0, lim);
  CHECK(g3(g3.size() - 1) == Approx(frac).epsilon(1e-12));

  // supply-scaled shares close it
  const Vec u = open_circuit_voltages(pack, lossy);
  for (double p : {100.0, -100.0}) {
    const Vec scaled = mu * supply_scale(mu, lossy, u, p);
    const Vec gs = constraint_residuals(pack, lossy, scaled, p, lim);
    CHECK(std::abs(gs(gs.size() - 1)) < 1e-14);
  }
}

TEST_CASE("barrier values") {
  const BarrierConfig soft;
  CHECK(barrier(-1.0, soft) < 1e-20);
  CHECK(barrier(0.0, soft) == Approx(0.06931471805599453).epsilon(1e-15));
  CHECK(barrier(0.5, soft) == Approx(2.5).epsilon(1e-12));
  CHECK(barrier(1e6, soft) == Approx(5e6));
  CHECK(std::isfinite(barrier(1e300, soft)));

  BarrierConfig hard;
  hard.mode = BarrierMode::hard;
  CHECK(barrier(0.0, hard) == 0.0);
  CHECK(barrier(-1.0, hard) == 0.0);
  CHECK(barrier(1e-12, hard) == kHardBarrierPenalty);
}

TEST_CASE("softplus barrier is increasing and convex") {
  const BarrierConfig soft;
  double prev = barrier(-2.0, soft);
  double prev_slope = 0.0;
  for (double x = -2.0 + 1e-3; x < 2.0; x += 1e-3) {
    const double v = barrier(x, soft);
    const double slope = (v - prev) / 1e-3;
    REQUIRE(v >= prev);
    REQUIRE(slope >= prev_slope - 1e-9);
    prev = v;
    prev_slope = slope;
  }
}

TEST_CASE("hard and softplus agree on feasibility") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> d(0.0, 0.3);
  BarrierConfig soft, hard;
  hard.mode = BarrierMode::hard;
  for (int i = 0; i < 500; ++i) {
    Vec g(9);
    for (int k = 0; k < 9; ++k) g(k) = d(rng);
    const bool finite = total_penalty(g, hard) < kHardBarrierPenalty;
    bool below = true;
    for (int k = 0; k < 9; ++k) {
      if (!(g(k) <= 0.0) || barrier(g(k), soft) > soft.scale * std::log(2.0)) below = false;
    }
    REQUIRE(finite == below);
  }
}

TEST_CASE("virtual measurement") {
  const auto params = uniform_params(2, 0.03, 0.01, flat(3.6));
  const PackState pack = pack_of(Vec{{0.72, 0.70}});
  const LimitsSpec lim;
  const BarrierConfig soft;
  const PolicyHyper hyper;
  const PolicyTheta th{0.2, 0.3};

  const auto m = virtual_measure(pack, params, th, hyper, 500.0, lim, soft, 0.0);
  const Vec mu = policy_eval(th, hyper, pack, params.internal_resistances(), 500.0);
  CHECK(m.stage_loss == stage_loss(pack, params, mu, 500.0));
  CHECK(m.residuals == constraint_residuals(pack, params, mu, 500.0, lim));
  CHECK(m.penalty == total_penalty(m.residuals, soft));
  CHECK(m.value == m.stage_loss / 500.0 + m.penalty);
  CHECK(virtual_measure(pack, params, th, hyper, 500.0, lim, soft, 0.25).value == m.value + 0.25);
  const auto again = virtual_measure(pack, params, th, hyper, 500.0, lim, soft, 0.0);
  CHECK(again.value == m.value);

  // ideal limit: no losses, wide margins
  LimitsSpec wide;
  wide.delta_soc = 1.0;
  wide.delta_temp = 100.0;
  wide.power_balance_tol = 0.5;
  const auto ideal = uniform_params(2, 1e-300, 0.0, flat(3.6));
  const auto z = virtual_measure(pack_of(Vec{{0.5, 0.5}}), ideal, th, hyper, 1.0, wide, soft, 0.0);
  CHECK(z.value < 1e-10);

  BarrierConfig hard;
  hard.mode = BarrierMode::hard;
  // 0.72/0.70 with delta_soc 0.005 violates balance
  LimitsSpec tight = lim;
  tight.delta_soc = 0.005;
  CHECK(virtual_measure(pack, params, th, hyper, 500.0, tight, hard, 0.0).value >= kHardBarrierPenalty);

  CHECK_THROWS_AS(virtual_measure(pack, params, {0.9, 0.9}, hyper, 500.0, lim, soft, 0.0),
                  DegenerateInput);
}

TEST_CASE("lower resistance lowers the measurement of a balanced pack") {
  const PackState pack = pack_of(Vec::Constant(4, 0.6));
  double last = HUGE_VAL;
  for (double r = 0.08; r > 0.005; r -= 0.005) {
    const auto params = uniform_params(4, r, 0.0, OcvCurve::default_li_ion());
    const double v =
        virtual_measure(pack, params, {0.3, 0.3}, {}, 40.0, {}, {}, 0.0).value;
    REQUIRE(v < last);
    last = v;
  }
}

TEST_CASE("rollout: single cell, H = 1 composes virtual measurements") {
  ControlProblem p;
  p.params = uniform_params(1, 0.03, 0.01, OcvCurve::default_li_ion());
  p.state = pack_of(Vec{{0.7}});
  p.power = {50.0, -30.0};
  p.balance_supply = false;
  const Vec y = rollout_measurements(p, {0.0, 0.0});
  REQUIRE(y.size() == 2);
  const auto m0 = virtual_measure(p.state, p.params, {0, 0}, p.hyper, 50.0, p.limits, p.barrier, 0.0);
  const PackState x1 = pack_step(p.state, p.params, Vec{{1.0}}, 50.0, 1.0).state;
  const auto m1 = virtual_measure(x1, p.params, {0, 0}, p.hyper, -30.0, p.limits, p.barrier, 0.0);
  CHECK(y(0) == Approx(m0.value).epsilon(1e-13));
  CHECK(y(1) == Approx(m1.value).epsilon(1e-13));

  const std::vector<double> noise{0.5, -0.25};
  const Vec yn = rollout_measurements(p, {0.0, 0.0}, noise);
  CHECK(yn(0) == y(0) + 0.5);
  CHECK(yn(1) == y(1) - 0.25);
  CHECK_THROWS_AS(rollout_measurements(p, {0.0, 0.0}, std::vector<double>{1.0}), DimensionMismatch);
}

TEST_CASE("rollout: zero power leaves only penalties") {
  std::mt19937_64 rng(2);
  ControlProblem p = random_problem(rng, 3, 4);
  std::fill(p.power.begin(), p.power.end(), 0.0);
  const Vec y = rollout_measurements(p, {0.4, 0.4});
  PackState x = p.state;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const Vec mu = weights_resistance(p.params.internal_resistances());
    const Vec g = constraint_residuals(x, p.params, mu, 0.0, p.limits);
    CHECK(y(t) == Approx(total_penalty(g, p.barrier)).epsilon(1e-12));
    x = pack_step(x, p.params, mu, 0.0, 1.0).state;
  }
}

TEST_CASE("rollout: two cells, H = 2, hand propagation with supply scaling") {
  std::mt19937_64 rng(9);
  const ControlProblem p = random_problem(rng, 2, 2);
  const PolicyTheta th{0.35, 0.4};
  const Vec y = rollout_measurements(p, th);

  PackState x = p.state;
  const Vec rs = p.params.internal_resistances();
  for (int t = 0; t <= 2; ++t) {
    const double pw = p.power[static_cast<std::size_t>(t)];
    const Vec lq = weights_soc(x.soc, p.hyper.beta1, pw > 0 ? 1 : -1);
    const Vec lt = weights_temp(x.temperature, p.hyper.beta2);
    const Vec lr = weights_resistance(rs);
    Vec mu = th.theta1 * lq + th.theta2 * lt + th.theta3() * lr;
    Vec u(2);
    for (int j = 0; j < 2; ++j) u(j) = p.params.curve(0)(x.soc(j));
    mu *= supply_scale(mu, p.params, u, pw);

    double loss = 0.0;
    for (int j = 0; j < 2; ++j) {
      loss += p.params.cells[j].series_resistance() * std::pow(mu(j) * pw / u(j), 2);
    }
    const Vec g = constraint_residuals(x, p.params, mu, pw, p.limits);
    CHECK(y(t) == Approx(loss / std::abs(pw) + total_penalty(g, p.barrier)).epsilon(1e-12));

    PackState next = x;
    for (int j = 0; j < 2; ++j) {
      const auto& c = p.params.cells[j];
      const double i = mu(j) * pw / u(j);
      next.soc(j) = x.soc(j) - i / c.capacity_coulombs;
      next.temperature(j) = x.temperature(j) +
                            (c.r_internal * i * i - (x.temperature(j) - x.env_temperature) / c.r_convection) /
                                c.c_thermal;
    }
    x = next;
  }
}

TEST_CASE("rollout cost and worst residual") {
  std::mt19937_64 rng(4);
  const ControlProblem p = random_problem(rng, 5, 6);
  CHECK(rollout_cost(p, {0.1, 0.2}) == rollout_measurements(p, {0.1, 0.2}).sum());
  CHECK(rollout_cost(p, {0.1, 0.2}) == rollout_cost(p, {0.1, 0.2}));
  // initial SoC spread 0.6..0.8 breaks the 1% balance band
  CHECK(rollout_max_residual(p, {0.1, 0.2}) > 0.0);
  CHECK_THROWS_AS(rollout_cost(p, {-0.5, 0.2}), DegenerateInput);
}
