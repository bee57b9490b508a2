#include <doctest.h>

#include <cmath>
#include <set>

#include "glpanel/dgp.hpp"
#include "glpanel/quadrature.hpp"
#include "helpers.hpp"

using namespace glpanel;

namespace {

DgpSpec finite_spec(int T, std::vector<double> lambda, GammaLaw gamma) {
  DgpSpec s;
  s.T = T;
  s.beta0 = vec({0.8, -0.4});
  s.dist = GenLogistic(FamilyType::First, lambda, std::vector<double>(lambda.size(), 1.0));
  std::vector<SupportPoint> sup;
  const double v[4][3][2] = {{{0.2, 1.0}, {-0.7, 0.1}, {1.3, -0.6}},
                             {{1.1, -0.2}, {0.4, 0.9}, {-1.5, 0.3}},
                             {{-0.3, -1.2}, {0.8, 0.5}, {0.0, 1.4}},
                             {{0.6, 0.6}, {-1.0, -0.8}, {0.9, -1.1}}};
  for (const auto& p : v) {
    Traj x(T, 2);
    for (int t = 0; t < T; ++t) x.row(t) << p[t][0], p[t][1];
    sup.push_back({x, 0.25});
  }
  s.xlaw = XLaw::finite(sup);
  s.gamma = std::move(gamma);
  return s;
}

}  // namespace

TEST_CASE("Gauss-Hermite rule reproduces normal moments") {
  const auto& r = gauss_hermite(32);
  double m2 = 0, m4 = 0, ee = 0, w = 0;
  for (std::size_t i = 0; i < r.node.size(); ++i) {
    w += r.weight[i];
    m2 += r.weight[i] * r.node[i] * r.node[i];
    m4 += r.weight[i] * std::pow(r.node[i], 4);
    ee += r.weight[i] * std::exp(r.node[i]);
  }
  CHECK(w == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(ee == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
}

TEST_CASE("integrate_gamma matches the lognormal mean") {
  DgpSpec s = finite_spec(3, {1.0, 2.0}, GammaLaw::gaussian(-0.3, 0.5, 0, 0.7));
  const TrajRef x = s.xlaw.support[1].x;
  const double mu = -0.3 + 0.5 * x.col(0).mean();
  const auto r = integrate_gamma(s, x, [](double g) { return vec({std::exp(g)}); });
  CHECK(r.converged);
  CHECK(r.value(0) == doctest::Approx(std::exp(mu + 0.5 * 0.49)).epsilon(1e-10));
}

TEST_CASE("outcome enumeration and probabilities") {
  const auto ys = all_outcomes(3);
  REQUIRE(ys.size() == 8);
  CHECK(ys[1](0) == 1);
  CHECK(ys[1](1) == 0);
  CHECK(ys[6](0) == 0);
  CHECK(ys[6](2) == 1);
  const GenLogistic d(FamilyType::First, {1.0, 2.0}, {1.0, 0.5});
  const Traj x = traj({{0.3}, {-0.2}, {1.0}});
  double total = 0;
  for (const auto& y : ys) total += cond_prob_y(y, x, 0.4, vec({0.9}), d);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  // independent periods
  const double p = cond_prob_y(outcome({1, 0, 1}), x, 0.4, vec({0.9}), d);
  CHECK(p == doctest::Approx(d.cdf(0.27 + 0.4) * d.survival(-0.18 + 0.4) * d.cdf(0.9 + 0.4)).epsilon(1e-13));
}

TEST_CASE("conditional moment vanishes at beta0 for either type") {
  for (auto type : {FamilyType::First, FamilyType::Second}) {
    DgpSpec s = finite_spec(3, {1.0, 2.0}, GammaLaw::discrete({{-0.5, 0.3}, {0.9, 0.7}}));
    s.dist = GenLogistic(type, {1.0, 2.0}, {1.0, 0.8});
    for (const auto& sp : s.xlaw.support) {
      const CondMoment cm = cond_moment(sp.x, s, s.beta0);
      CHECK(std::abs(cm.value) <= 1e-12 * cm.abs_mass);
      CHECK(cm.abs_mass > 0);
      // and not at a generic other b
      const CondMoment off = cond_moment(sp.x, s, vec({-0.5, 1.2}));
      CHECK(std::abs(off.value) > 1e-6 * off.abs_mass);
    }
  }
}

TEST_CASE("conditional moment at b equals sum_j a_j D_j") {
  DgpSpec s = finite_spec(3, {1.0, 2.5}, GammaLaw::gaussian(0.2, -0.4, 1, 0.5));
  const std::vector<double> lam = s.dist.lambda();
  for (const auto& sp : s.xlaw.support) {
    const Eigen::VectorXd a = a_weights(sp.x, s);
    for (const Eigen::VectorXd& b : {vec({0.1, 0.3}), vec({1.5, -1.0})}) {
      const double want = a(0) * dj_det(sp.x, b, s.beta0, lam, 0) + a(1) * dj_det(sp.x, b, s.beta0, lam, 1);
      const CondMoment cm = cond_moment(sp.x, s, b);
      CHECK(cm.value == doctest::Approx(want).epsilon(1e-9).scale(1e-12 * cm.abs_mass));
    }
  }
}

TEST_CASE("T = 2 logit bound equals the inverse conditional-logit information") {
  DgpSpec s = finite_spec(2, {1.0}, GammaLaw::discrete({{-0.4, 0.5}, {1.1, 0.5}}));
  const EfficiencyBound eb = efficiency_bound(s);
  // conditional logit: I = E[P(switch | x) p (1 - p) dx dx'], p = Lambda(dx' beta0)
  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  for (const auto& sp : s.xlaw.support) {
    const Eigen::Vector2d dx = (sp.x.row(0) - sp.x.row(1)).transpose();
    double sw = 0;
    for (const auto& g : s.gamma.common) {
      const double p0 = s.dist.cdf(sp.x.row(0).dot(s.beta0) + g.value);
      const double p1 = s.dist.cdf(sp.x.row(1).dot(s.beta0) + g.value);
      sw += g.prob * (p0 * (1 - p1) + p1 * (1 - p0));
    }
    const double p = 1.0 / (1.0 + std::exp(-dx.dot(s.beta0)));
    info += sp.prob * sw * p * (1 - p) * dx * dx.transpose();
  }
  const Eigen::Matrix2d v = info.inverse();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(eb.V0(i, j) == doctest::Approx(v(i, j)).epsilon(1e-9));
}

TEST_CASE("score-moment covariance is minus R") {
  DgpSpec s = finite_spec(3, {1.0, 2.0}, GammaLaw::discrete({{-0.5, 0.3}, {0.9, 0.7}}));
  for (const auto& sp : s.xlaw.support) {
    const ROmega ro = r_and_omega(sp.x, s, KernelScale::Raw);
    const Eigen::VectorXd c = score_moment_cov(sp.x, s, KernelScale::Raw);
    CHECK((c + ro.R).norm() <= 1e-10 * ro.R.norm());
    CHECK(ro.omega > 0);
  }
}

TEST_CASE("simulated outcome frequencies match the model") {
  DgpSpec s = finite_spec(3, {1.0, 2.0}, GammaLaw::discrete({{-0.5, 0.3}, {0.9, 0.7}}));
  const int n = 200000;
  const PanelSample ps = simulate_panel(s, n, 21);
  REQUIRE(ps.cell.size() == static_cast<std::size_t>(n));
  // P(Y = (1,0,0) | cell 2)
  const TrajRef x = s.xlaw.support[2].x;
  double p = 0;
  for (const auto& g : s.gamma.common) p += g.prob * cond_prob_y(outcome({1, 0, 0}), x, g.value, s);
  int cnt = 0, hit = 0;
  for (int i = 0; i < n; ++i)
    if (ps.cell[i] == 2) {
      ++cnt;
      hit += ps.y(i, 0) == 1 && ps.y(i, 1) == 0 && ps.y(i, 2) == 0;
    }
  CHECK(std::abs(double(cnt) / n - 0.25) < 5 * std::sqrt(0.25 * 0.75 / n));
  CHECK(std::abs(double(hit) / cnt - p) < 5 * std::sqrt(p * (1 - p) / cnt));
}

TEST_CASE("simulation is deterministic in the seed") {
  DgpSpec s = finite_spec(3, {1.0, 2.0}, GammaLaw::gaussian(0.0, 0.5, 0, 1.0));
  s.xlaw = XLaw::gaussian(0.0, 1.0);
  const PanelSample a = simulate_panel(s, 500, 4), b = simulate_panel(s, 500, 4), c = simulate_panel(s, 500, 5);
  CHECK(a.y == b.y);
  CHECK(a.x == b.x);
  CHECK(a.x != c.x);
}

TEST_CASE("spec validation") {
  DgpSpec s = finite_spec(3, {1.0, 2.0}, GammaLaw::dirac(0.0));
  CHECK_NOTHROW(s.validate(true));
  s.T = 4;
  CHECK_THROWS_AS(s.validate(true), Error);
  DgpSpec g = finite_spec(3, {1.0, 2.0}, GammaLaw::discrete({{0.0, 0.5}, {1.0, 0.4}}));
  CHECK_THROWS_AS(g.validate(false), Error);
}
