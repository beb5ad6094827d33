#include "doctest.h"

#include "bess/policy.hpp"

#include <random>

using namespace bess;
using doctest::Approx;

namespace {

PackState two_cells() {
  PackState p;
  p.soc = Vec{{0.8, 0.7}};
  p.temperature = Vec{{300.0, 298.0}};
  return p;
}

// Brute-force projection: minimize distance over a fine boundary/interior check.
PolicyTheta slow_projection(double a, double b) {
  if (a >= 0 && b >= 0 && a + b <= 1) return {a, b};
  auto best = PolicyTheta{0.0, 0.0};
  double best_d = 1e300;
  auto try_point = [&](double x, double y) {
    const double d = (x - a) * (x - a) + (y - b) * (y - b);
    if (d < best_d) {
      best_d = d;
      best = {x, y};
    }
  };
  // closest point on each edge of the triangle
  try_point(std::clamp(a, 0.0, 1.0), 0.0);
  try_point(0.0, std::clamp(b, 0.0, 1.0));
  const double t = std::clamp(0.5 * (a - b + 1.0), 0.0, 1.0);
  try_point(t, 1.0 - t);
  return best;
}

}  // namespace

TEST_CASE("soc weights") {
  const Vec q{{0.8, 0.7}};
  const Vec dis = weights_soc(q, 8.0, +1);
  CHECK(dis(0) == Approx(0.74426419).epsilon(1e-7));
  CHECK(dis(1) == Approx(0.25573581).epsilon(1e-7));
  const Vec chg = weights_soc(q, 8.0, -1);
  CHECK(chg(0) == Approx(dis(1)).epsilon(1e-14));
  CHECK(chg(1) == Approx(dis(0)).epsilon(1e-14));

  const Vec eq = weights_soc(Vec::Constant(5, 0.6), 8.0, +1);
  CHECK((eq.array() - 0.2).abs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(weights_soc(Vec{{0.5, 0.0}}, 8.0, -1), DegenerateInput);
  // discharge with an empty cell is fine: it just gets no share
  const Vec z = weights_soc(Vec{{0.5, 0.0}}, 8.0, +1);
  CHECK(z(1) == 0.0);
  CHECK(z(0) == 1.0);
}

TEST_CASE("temperature weights") {
  const Vec t = weights_temp(Vec{{300.0, 298.0}}, 12.0);
  // (1/300^12) / (1/300^12 + 1/298^12)
  CHECK(t(0) == Approx(0.4799438).epsilon(1e-6));
  CHECK(t(1) == Approx(0.5200562).epsilon(1e-6));
  CHECK(weights_temp(Vec{{310.0}}, 12.0)(0) == 1.0);
  const Vec eq = weights_temp(Vec::Constant(4, 301.0), 12.0);
  CHECK((eq.array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("resistance weights") {
  const Vec a = weights_resistance(Vec{{0.03, 0.06}});
  CHECK(a(0) == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(a(1) == Approx(1.0 / 3.0).epsilon(1e-15));
  const Vec b = weights_resistance(Vec{{0.03, 0.03, 0.06}});
  CHECK(b(0) == Approx(0.4).epsilon(1e-15));
  CHECK(b(1) == Approx(0.4).epsilon(1e-15));
  CHECK(b(2) == Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(weights_resistance(Vec{{0.03, 0.0}}), DegenerateInput);
}

TEST_CASE("policy eval examples") {
  const PackState pack = two_cells();
  const Vec r{{0.03, 0.06}};
  const PolicyHyper hyper;
  const Vec lq = weights_soc(pack.soc, 8.0, +1);
  const Vec lt = weights_temp(pack.temperature, 12.0);
  const Vec lr = weights_resistance(r);

  CHECK(policy_eval({0.0, 0.0}, hyper, pack, r, 1000.0) == lr);
  CHECK(policy_eval({1.0, 0.0}, hyper, pack, r, 1000.0) == lq);
  const Vec mix = policy_eval({0.5, 0.25}, hyper, pack, r, 1000.0);
  CHECK(mix(0) == Approx(0.65878471).epsilon(1e-7));
  CHECK(mix(1) == Approx(0.34121529).epsilon(1e-7));
  CHECK((mix - (0.5 * lq + 0.25 * lt + 0.25 * lr)).cwiseAbs().maxCoeff() < 1e-15);

  // no demand: loss-optimal split regardless of theta
  CHECK(policy_eval({1.0, 0.0}, hyper, pack, r, 0.0) == lr);
  CHECK_THROWS_AS(policy_eval({0.8, 0.5}, hyper, pack, r, 1000.0), DegenerateInput);
}

TEST_CASE("project theta examples") {
  CHECK(project_theta(0.2, 0.3) == PolicyTheta{0.2, 0.3});
  const auto p = project_theta(0.8, 0.5);
  CHECK(p.theta1 == Approx(0.65));
  CHECK(p.theta2 == Approx(0.35));
  CHECK(project_theta(-0.1, 0.4) == PolicyTheta{0.0, 0.4});
  CHECK(project_theta(2.0, -1.0) == PolicyTheta{1.0, 0.0});
  CHECK(project_theta(-3.0, -3.0) == PolicyTheta{0.0, 0.0});
}

TEST_CASE("project theta: matches slow projection, idempotent, non-expansive") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-2.0, 3.0);
  for (int i = 0; i < 5000; ++i) {
    const double a = d(rng), b = d(rng), c = d(rng), e = d(rng);
    const PolicyTheta p = project_theta(a, b);
    const PolicyTheta ref = slow_projection(a, b);
    REQUIRE(p.feasible(1e-15));
    REQUIRE(p.theta1 == Approx(ref.theta1).epsilon(1e-12));
    REQUIRE(p.theta2 == Approx(ref.theta2).epsilon(1e-12));
    REQUIRE(project_theta(p.theta1, p.theta2) == p);
    const PolicyTheta q = project_theta(c, e);
    const double dp = (p.vec() - q.vec()).norm();
    const double draw = (Eigen::Vector2d(a, b) - Eigen::Vector2d(c, e)).norm();
    REQUIRE(dp <= draw + 1e-12);
  }
}

TEST_CASE("weights: normalization, permutation equivariance, monotone differentiation") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> q(0.05, 0.95), t(290.0, 320.0), r(0.02, 0.06), u(0.0, 1.0);
  const PolicyHyper hyper;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 20;
    PackState pack;
    pack.soc.resize(n);
    pack.temperature.resize(n);
    Vec res(n);
    for (int j = 0; j < n; ++j) {
      pack.soc(j) = q(rng);
      pack.temperature(j) = t(rng);
      res(j) = r(rng);
    }
    const double a = u(rng);
    const PolicyTheta th{a, (1.0 - a) * u(rng)};
    const Vec lq = weights_soc(pack.soc, 8.0, +1);
    const Vec lt = weights_temp(pack.temperature, 12.0);
    const Vec lr = weights_resistance(res);
    const Vec mu = policy_eval(th, hyper, pack, res, 500.0);
    for (const Vec* w : {&lq, &lt, &lr, &mu}) {
      REQUIRE(std::abs(w->sum() - 1.0) <= 1e-12);
      REQUIRE(w->minCoeff() >= 0.0);
    }

    // reversing the cells reverses the weights
    const Vec lq_rev = weights_soc(Vec(pack.soc.reverse()), 8.0, +1);
    REQUIRE((lq_rev - Vec(lq.reverse())).cwiseAbs().maxCoeff() < 1e-15);

    for (int a_ = 0; a_ < n; ++a_) {
      for (int b_ = 0; b_ < n; ++b_) {
        if (pack.soc(a_) > pack.soc(b_)) REQUIRE(lq(a_) > lq(b_));
        if (pack.temperature(a_) > pack.temperature(b_)) REQUIRE(lt(a_) < lt(b_));
        if (res(a_) > res(b_)) REQUIRE(lr(a_) < lr(b_));
      }
    }
  }
}

TEST_CASE("larger beta1 differentiates more") {
  const Vec q{{0.74, 0.71}};
  double last = 1.0;
  for (double beta = 0.5; beta <= 30.0; beta += 0.5) {
    const Vec w = weights_soc(q, beta, +1);
    const double ratio = w(0) / w(1);
    REQUIRE(ratio > last);
    last = ratio;
  }
}
