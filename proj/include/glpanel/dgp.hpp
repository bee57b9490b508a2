#ifndef GLPANEL_DGP_HPP
#define GLPANEL_DGP_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "glpanel/common.hpp"
#include "glpanel/glogit.hpp"
#include "glpanel/kernel.hpp"
#include "glpanel/panel.hpp"
#include "glpanel/rng.hpp"

namespace glpanel {

struct GammaPoint {
  double value = 0.0;
  double prob = 1.0;
};

/// Law of the fixed effect given the covariates.
///
/// DiscreteMixture uses `per_cell[i]` for the i-th support point of a finite covariate law
/// when `per_cell` is non-empty and `common` otherwise. GaussianOfX is
/// N(intercept + slope * s(x), sd^2) with s(x) the time average of covariate `covariate`.
struct GammaLaw {
  enum class Kind { DiscreteMixture, GaussianOfX };
  Kind kind = Kind::DiscreteMixture;
  std::vector<GammaPoint> common{{0.0, 1.0}};
  std::vector<std::vector<GammaPoint>> per_cell;
  double intercept = 0.0;
  double slope = 0.0;
  int covariate = 0;
  double sd = 1.0;

  static GammaLaw dirac(double g);
  static GammaLaw discrete(std::vector<GammaPoint> points);
  static GammaLaw discrete_per_cell(std::vector<std::vector<GammaPoint>> cells);
  static GammaLaw gaussian(double intercept, double slope, int covariate, double sd);

  [[nodiscard]] double mean_at(const TrajRef& x) const;
  void validate(int K, int support_size) const;
};

struct SupportPoint {
  Traj x;
  double prob = 0.0;
};

/// Covariate law: a finite list of trajectories, or i.i.d. entries across (t, k).
struct XLaw {
  enum class Kind { FiniteSupport, IIDUniform, IIDGaussian };
  Kind kind = Kind::IIDGaussian;
  std::vector<SupportPoint> support;
  double lo = -1.0;
  double hi = 1.0;
  double mean = 0.0;
  double sd = 1.0;

  static XLaw finite(std::vector<SupportPoint> support);
  static XLaw uniform(double lo, double hi);
  static XLaw gaussian(double mean, double sd);
};

struct DgpSpec {
  Eigen::VectorXd beta0;
  int T = 2;
  GenLogistic dist = GenLogistic::logit();
  GammaLaw gamma;
  XLaw xlaw;

  [[nodiscard]] int K() const { return static_cast<int>(beta0.size()); }
  /// Throws on inconsistent fields. With `kernel_use`, also requires T == tau + 1.
  void validate(bool kernel_use) const;
};

/// Support index of x in a finite covariate law (exact match), or -1.
int support_index(const XLaw& law, const TrajRef& x);

/// Quadrature points of gamma | X = x: exact for discrete laws, Gauss-Hermite with
/// `gh_nodes` nodes for the Gaussian law.
std::vector<GammaPoint> gamma_nodes(const DgpSpec& spec, const TrajRef& x, int gh_nodes = 64);

struct GammaIntegral {
  Eigen::VectorXd value;
  bool converged = true;
  int nodes = 0;
};

/// E[f(gamma) | X = x]. Gaussian laws double the node count from 64 until successive
/// results agree to 1e-10 relative (max 512 nodes).
GammaIntegral integrate_gamma(const DgpSpec& spec, const TrajRef& x,
                              const std::function<Eigen::VectorXd(double)>& f);

/// The trajectory and outcomes on which the kernel is evaluated: unchanged for first-type
/// shocks, (1 - y, -x) for second-type shocks.
Traj kernel_x(const TrajRef& x, const GenLogistic& dist);
Outcome kernel_y(const OutcomeRef& y, const GenLogistic& dist);

/// P(Y = y | X = x, gamma = g) under slope `beta`.
double cond_prob_y(const OutcomeRef& y, const TrajRef& x, double g, const VecRef& beta,
                   const GenLogistic& dist);
double cond_prob_y(const OutcomeRef& y, const TrajRef& x, double g, const DgpSpec& spec);

/// All 2^T outcome vectors, in binary-counting order (period 1 is the lowest bit).
std::vector<Outcome> all_outcomes(int T);

struct CondMoment {
  double value = 0.0;
  /// sum_y P(y | x) |m(y, x; b)|, the natural scale of `value`.
  double abs_mass = 0.0;
  bool converged = true;
};

/// E[m(Y, X; b) | X = x] by enumerating outcomes and integrating gamma.
CondMoment cond_moment(const TrajRef& x, const DgpSpec& spec, const VecRef& b,
                       KernelScale scale = KernelScale::Raw);

/// a_j(x) = w_j E[exp(lambda_j gamma) / prod_t (1 + G(x_t'beta0 + gamma)) | X = x].
/// For second-type shocks the weights refer to the normalized model (-x, -gamma).
Eigen::VectorXd a_weights(const TrajRef& x, const DgpSpec& spec);

/// Complete-model score d/d beta log p(y | x, g; beta).
Eigen::VectorXd score_complete(const OutcomeRef& y, const TrajRef& x, double g,
                               const VecRef& beta, const GenLogistic& dist);

struct ROmega {
  Eigen::VectorXd R;  // E[grad_beta m | X = x] at beta0
  double omega = 0.0; // E[m^2 | X = x] at beta0
  bool degenerate = false;  // normalized-scale omega below 1e-14
  bool converged = true;
};

ROmega r_and_omega(const TrajRef& x, const DgpSpec& spec,
                   KernelScale scale = KernelScale::Normalized);

/// E[S_beta0 m(Y, X; beta0) | X = x]; equals -R(x).
Eigen::VectorXd score_moment_cov(const TrajRef& x, const DgpSpec& spec,
                                 KernelScale scale = KernelScale::Raw);

struct EfficiencyBound {
  Eigen::MatrixXd V0;
  Eigen::MatrixXd information;  // E[R R' / Omega]
  double condition = 0.0;
  int degenerate_cells = 0;
};

/// V0 = E[R R' / Omega]^{-1} over a finite covariate law. Throws when the information
/// matrix is singular (condition number above 1e12), reporting the condition number.
EfficiencyBound efficiency_bound(const DgpSpec& spec);

/// Draw one covariate trajectory; `cell` receives the support index (or -1).
Traj draw_x(const DgpSpec& spec, Engine& eng, int& cell);
double draw_gamma(const DgpSpec& spec, const TrajRef& x, int cell, Engine& eng);

/// n units from the model; deterministic in `seed`.
PanelSample simulate_panel(const DgpSpec& spec, int n, std::uint64_t seed);

}  // namespace glpanel

#endif
