#ifndef GLPANEL_IDENT_HPP
#define GLPANEL_IDENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "glpanel/dgp.hpp"
#include "glpanel/exp_poly.hpp"
#include "glpanel/panel.hpp"

namespace glpanel {

struct RayScanReport {
  double c_lo = 0.0;
  double c_hi = 0.0;
  /// Values of c at which every usable probe has a root (match tolerance 1e-6).
  std::vector<double> roots;
  std::vector<double> roots_inside;   // within (1/lambda_max, lambda_max)
  std::vector<double> roots_outside;
  std::vector<std::vector<double>> per_x_roots;  // one list per probe, empty for skipped ones
  std::vector<int> used_probes;
  int certified_max_roots = 0;  // T! - 1
  std::vector<std::string> flags;
};

/// Roots in c of sum_j a_j(x) D_j(x; c beta0) for each probe, intersected across probes.
/// Probes with repeated index values are skipped with a flag; c = 0 is dropped for T >= 3
/// since every b-row is then constant.
RayScanReport ray_scan(const DgpSpec& spec, const std::vector<Traj>& probes, double c_lo,
                       double c_hi, int grid = 0);

/// Probes for a spec: the support of a finite law, otherwise `count` draws from the X law.
std::vector<Traj> default_probes(const DgpSpec& spec, int count, std::uint64_t seed);

struct RejectionVerdict {
  Eigen::VectorXd b;
  bool rejected = false;
  int witness = -1;  // first probe in D(b)
  bool near_tie = false;
};

/// A candidate is rejected when some probe lies in D(b), i.e. the nonzero D_j(x; b) share a sign.
std::vector<RejectionVerdict> rejection_scan(const std::vector<Eigen::VectorXd>& candidates,
                                             const DgpSpec& spec, const std::vector<Traj>& probes);

/// A trajectory in X_1(b): one pair of periods tied under b but not under beta0, every other
/// pair distinct under b. Needs b outside lin(beta0).
Traj make_x1_probe(const VecRef& b, const VecRef& beta0, int T, Engine& eng);

struct DegenerateReport {
  int units = 0;
  int degenerate_units = 0;     // some pair of periods with equal covariate vectors
  double prob_distinct = 0.0;   // P(T pairwise distinct covariate vectors)
  bool no_identification_power = false;
  double max_rel_moment = 0.0;  // over 20 random b, on the degenerate part
  bool moment_zero = true;
  std::vector<std::string> flags;
};

/// Sample version. The moment check averages m over relabelings of tied periods, which is
/// the sample analogue of the population cancellation, and compares it to mean |m|.
DegenerateReport degenerate_check(const PanelSample& sample, const GenLogistic& dist,
                                  std::uint64_t seed);
/// Spec version: exact probability for a finite law (1 for continuous laws) and
/// cond_moment at 20 random b on the degenerate support points.
DegenerateReport degenerate_check(const DgpSpec& spec, std::uint64_t seed);

/// gamma0 = ln(w1 R / w2) / (lambda2 - 1) for a given ratio R = -D1/D2 > 0.
double adversarial_gamma_from_ratio(double ratio, const GenLogistic& dist);
/// Dirac location making E[m(Y, X; b) | X = x] = 0 when T = 3. For second-type shocks the
/// value is on the original gamma scale.
double adversarial_gamma(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                         const GenLogistic& dist);

/// Per-support-point Dirac gamma law under which b = c beta0 satisfies the moment restriction.
DgpSpec build_nonidentified_dgp(const VecRef& b, const VecRef& beta0, const GenLogistic& dist,
                                const XLaw& xlaw);

struct SupportReport {
  std::vector<double> distinct_freq;  // per k: P(X_{k,.} pairwise distinct and X_{-k} = 0)
  double overlap_freq = 0.0;          // share of (unit, s < t) with |X_s - X_t| < bandwidth
  double bandwidth = 0.0;
  std::vector<std::string> notes;
};

/// Report-only frequencies for the support conditions. `k_focus` < 0 checks every k;
/// `bandwidth` <= 0 picks 0.1 times the covariate standard deviation.
SupportReport check_support_assumptions(const PanelSample& sample, int k_focus = -1,
                                        double bandwidth = 0.0);

struct BetaZeroTest {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
  int cells = 0;
  int switchers = 0;
  int bins = 0;  // per coordinate, after reduction
  double min_eig = 0.0;
  double max_eig = 0.0;
  bool rank_ok = false;
};

/// Chi-square test of P(Y_t = 1 | Y_t + Y_t' = 1, X_t, X_t') = 1/2 over quantile cells of
/// (X_t, X_t'). Periods are 0-based.
BetaZeroTest test_beta_zero(const PanelSample& sample, int t, int t_prime, int bins);

}  // namespace glpanel

#endif
