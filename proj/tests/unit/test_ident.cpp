#include <doctest.h>

#include <cmath>

#include "glpanel/dgp.hpp"
#include "glpanel/ident.hpp"
#include "helpers.hpp"

using namespace glpanel;

namespace {

DgpSpec ray_spec() {
  DgpSpec s;
  s.T = 3;
  s.beta0 = vec({1.0});
  s.dist = GenLogistic(FamilyType::First, {1.0, 2.0}, {1.0, 1.0});
  s.xlaw = XLaw::finite({{traj({{0.4}, {-1.2}, {0.9}}), 0.5}, {traj({{-0.3}, {1.6}, {0.2}}), 0.5}});
  s.gamma = GammaLaw::discrete({{-0.5, 0.5}, {0.7, 0.5}});
  return s;
}

// roots of c -> E[m | x; c beta0] on a dense grid, for comparison with the ray scan
std::vector<double> grid_roots(const DgpSpec& s, const TrajRef& x, double lo, double hi, int n) {
  std::vector<double> out;
  auto f = [&](double c) { return cond_moment(x, s, c * s.beta0, KernelScale::Stabilized).value; };
  double c0 = lo, f0 = f(c0);
  for (int i = 1; i <= n; ++i) {
    const double c1 = lo + (hi - lo) * i / n, f1 = f(c1);
    if (f0 == 0.0 || (f0 < 0) != (f1 < 0)) {
      double a = c0, b = c1, fa = f0;
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (a + b), fm = f(m);
        if ((fm < 0) == (fa < 0)) a = m, fa = fm; else b = m;
      }
      out.push_back(0.5 * (a + b));
    }
    c0 = c1;
    f0 = f1;
  }
  return out;
}

}  // namespace

TEST_CASE("ray scan finds c = 1 and agrees with a dense grid") {
  const DgpSpec s = ray_spec();
  const RayScanReport r = ray_scan(s, default_probes(s, 0, 0), 0.3, 2.5);
  REQUIRE(r.per_x_roots.size() == 2);
  bool has_one = false;
  for (double c : r.roots) has_one |= std::abs(c - 1.0) < 1e-6;
  CHECK(has_one);
  for (int p = 0; p < 2; ++p) {
    const auto want = grid_roots(s, s.xlaw.support[p].x, 0.3, 2.5, 4000);
    REQUIRE(r.per_x_roots[p].size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(r.per_x_roots[p][i] == doctest::Approx(want[i]).epsilon(1e-6));
    CHECK(static_cast<int>(want.size()) <= r.certified_max_roots);
  }
}

TEST_CASE("adversarial Dirac gamma makes c beta0 satisfy the moment") {
  const DgpSpec base = ray_spec();
  for (double c : {0.7, 1.3}) {
    const Eigen::VectorXd b = c * base.beta0;
    DgpSpec adv;
    try {
      adv = build_nonidentified_dgp(b, base.beta0, base.dist, base.xlaw);
    } catch (const Error&) {
      continue;  // ratio of the wrong sign at this c: no such law exists
    }
    for (const auto& sp : adv.xlaw.support) {
      const CondMoment at_b = cond_moment(sp.x, adv, b, KernelScale::Stabilized);
      const CondMoment at_0 = cond_moment(sp.x, adv, adv.beta0, KernelScale::Stabilized);
      CHECK(std::abs(at_b.value) <= 1e-9 * at_b.abs_mass);
      CHECK(std::abs(at_0.value) <= 1e-9 * at_0.abs_mass);
    }
  }
}

TEST_CASE("adversarial gamma solves the ratio equation") {
  const GenLogistic d(FamilyType::First, {1.0, 2.5}, {1.0, 0.4});
  for (double R : {0.1, 1.0, 7.0}) {
    const double g = adversarial_gamma_from_ratio(R, d);
    CHECK(std::log(1.0 * R / 0.4) / 1.5 == doctest::Approx(g));
  }
}

TEST_CASE("x1 probe ties one pair under b only") {
  Engine eng(3);
  const Eigen::VectorXd b0 = vec({1.0, -0.5}), b = vec({0.2, 0.9});
  for (int r = 0; r < 10; ++r) {
    const Traj x = make_x1_probe(b, b0, 3, eng);
    const Eigen::VectorXd ib = x * b, i0 = x * b0;
    int tied_b = 0, tied_0 = 0;
    for (int s = 0; s < 3; ++s)
      for (int t = s + 1; t < 3; ++t) {
        tied_b += std::abs(ib(s) - ib(t)) < 1e-12;
        tied_0 += std::abs(i0(s) - i0(t)) < 1e-12;
      }
    CHECK(tied_b == 1);
    CHECK(tied_0 == 0);
  }
}

TEST_CASE("rejection scan rejects an off-ray point and keeps beta0") {
  DgpSpec s;
  s.T = 3;
  s.beta0 = vec({1.0, -0.5});
  s.dist = GenLogistic(FamilyType::First, {1.0, 2.0}, {1.0, 1.0});
  s.xlaw = XLaw::gaussian(0, 1);
  s.gamma = GammaLaw::dirac(0);
  Engine eng(9);
  auto probes = default_probes(s, 200, 5);
  const Eigen::VectorXd b = vec({-0.3, 1.1});
  probes.push_back(make_x1_probe(b, s.beta0, 3, eng));
  const auto v = rejection_scan({b, s.beta0}, s, probes);
  CHECK(v[0].rejected);
  CHECK(v[0].witness >= 0);
  CHECK_FALSE(v[1].rejected);
}

TEST_CASE("degenerate panels carry no identifying power") {
  PanelSample ps(400, 3, 1);
  Engine eng(2);
  for (int i = 0; i < 400; ++i) {
    const double v = standard_normal(eng);
    ps.x.row(i) << v, v, standard_normal(eng);
    for (int t = 0; t < 3; ++t) ps.y(i, t) = uniform_open(eng) < 0.5;
  }
  const DegenerateReport r = degenerate_check(ps, GenLogistic(FamilyType::First, {1.0, 2.0}, {1.0, 1.0}), 1);
  CHECK(r.degenerate_units == 400);
  CHECK(r.prob_distinct == 0.0);
  CHECK(r.no_identification_power);
  CHECK(r.moment_zero);
}

TEST_CASE("beta = 0 test: null and alternative") {
  DgpSpec s;
  s.T = 2;
  s.dist = GenLogistic::logit();
  s.xlaw = XLaw::gaussian(0, 1);
  s.gamma = GammaLaw::gaussian(0, 0, 0, 1);
  s.beta0 = vec({0.0});
  const BetaZeroTest null = test_beta_zero(simulate_panel(s, 5000, 1), 0, 1, 3);
  CHECK(null.rank_ok);
  CHECK(null.p_value > 1e-4);
  CHECK(null.df > 0);
  s.beta0 = vec({1.0});
  const BetaZeroTest alt = test_beta_zero(simulate_panel(s, 5000, 1), 0, 1, 3);
  CHECK(alt.p_value < 1e-6);
}

TEST_CASE("support frequencies") {
  PanelSample ps(3, 2, 2);
  ps.x << 1, 0, 2, 0,  // k = 0 varies, k = 1 is zero
      1, 1, 1, 1,      // tied
      0, 0, 0, 3;
  const SupportReport r = check_support_assumptions(ps, -1, 0.5);
  REQUIRE(r.distinct_freq.size() == 2);
  CHECK(r.distinct_freq[0] == doctest::Approx(1.0 / 3));
  CHECK(r.distinct_freq[1] == doctest::Approx(1.0 / 3));
  CHECK(r.overlap_freq == doctest::Approx(1.0 / 3));
}
