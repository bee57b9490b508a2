#include "glpanel/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "glpanel/quadrature.hpp"

namespace glpanel {

GammaLaw GammaLaw::dirac(double g) { return discrete({{g, 1.0}}); }

GammaLaw GammaLaw::discrete(std::vector<GammaPoint> points) {
  GammaLaw law;
  law.kind = Kind::DiscreteMixture;
  law.common = std::move(points);
  return law;
}

GammaLaw GammaLaw::discrete_per_cell(std::vector<std::vector<GammaPoint>> cells) {
  GammaLaw law;
  law.kind = Kind::DiscreteMixture;
  law.per_cell = std::move(cells);
  return law;
}

GammaLaw GammaLaw::gaussian(double intercept, double slope, int covariate, double sd) {
  GammaLaw law;
  law.kind = Kind::GaussianOfX;
  law.intercept = intercept;
  law.slope = slope;
  law.covariate = covariate;
  law.sd = sd;
  return law;
}

double GammaLaw::mean_at(const TrajRef& x) const {
  if (slope == 0.0) return intercept;
  return intercept + slope * x.col(covariate).mean();
}

namespace {

void check_points(const std::vector<GammaPoint>& pts, const std::string& what) {
  if (pts.empty()) throw Error("dgp", what + " has no support points");
  double total = 0.0;
  for (const auto& p : pts) {
    if (!std::isfinite(p.value)) throw Error("dgp", what + " has a non-finite support point");
    if (!(p.prob >= 0.0)) throw Error("dgp", what + " has a negative probability");
    total += p.prob;
  }
  if (std::abs(total - 1.0) > 1e-12) throw Error("dgp", what + " probabilities do not sum to 1");
}

}  // namespace

void GammaLaw::validate(int K, int support_size) const {
  if (kind == Kind::GaussianOfX) {
    if (!(sd > 0.0) || !std::isfinite(sd)) throw Error("dgp", "gamma sd must be positive");
    if (!std::isfinite(intercept) || !std::isfinite(slope))
      throw Error("dgp", "gamma mean parameters must be finite");
    if (covariate < 0 || covariate >= K) throw Error("dgp", "gamma covariate index out of range");
    return;
  }
  if (per_cell.empty()) {
    check_points(common, "gamma law");
    return;
  }
  if (static_cast<int>(per_cell.size()) != support_size)
    throw Error("dgp", "per-cell gamma laws need one entry per covariate support point");
  for (std::size_t i = 0; i < per_cell.size(); ++i)
    check_points(per_cell[i], "gamma law of cell " + std::to_string(i));
}

XLaw XLaw::finite(std::vector<SupportPoint> support) {
  XLaw law;
  law.kind = Kind::FiniteSupport;
  law.support = std::move(support);
  return law;
}

XLaw XLaw::uniform(double lo, double hi) {
  XLaw law;
  law.kind = Kind::IIDUniform;
  law.lo = lo;
  law.hi = hi;
  return law;
}

XLaw XLaw::gaussian(double mean, double sd) {
  XLaw law;
  law.kind = Kind::IIDGaussian;
  law.mean = mean;
  law.sd = sd;
  return law;
}

void DgpSpec::validate(bool kernel_use) const {
  const int K = this->K();
  if (K < 1) throw Error("dgp", "beta0 must have at least one entry");
  if (!beta0.allFinite()) throw Error("dgp", "beta0 must be finite");
  if (T < 2) throw Error("dgp", "need T >= 2");
  if (kernel_use && T != dist.tau() + 1)
    throw Error("dgp", "the moment kernel needs T = tau + 1 (T = " + std::to_string(T) +
                           ", tau = " + std::to_string(dist.tau()) + ")");
  if (kernel_use && T > kMaxPeriods)
    throw Error("dgp", "T = " + std::to_string(T) + " exceeds the factorial-cost cap of 6");
  int support_size = 0;
  switch (xlaw.kind) {
    case XLaw::Kind::FiniteSupport: {
      if (xlaw.support.empty()) throw Error("dgp", "finite covariate law has no support points");
      double total = 0.0;
      for (const auto& sp : xlaw.support) {
        if (sp.x.rows() != T || sp.x.cols() != K)
          throw Error("dgp", "covariate support point must be T x K");
        if (!sp.x.allFinite()) throw Error("dgp", "covariate support point must be finite");
        if (!(sp.prob >= 0.0)) throw Error("dgp", "negative covariate probability");
        total += sp.prob;
      }
      if (std::abs(total - 1.0) > 1e-12) throw Error("dgp", "covariate probabilities do not sum to 1");
      support_size = static_cast<int>(xlaw.support.size());
      break;
    }
    case XLaw::Kind::IIDUniform:
      if (!(xlaw.lo < xlaw.hi)) throw Error("dgp", "uniform covariate law needs lo < hi");
      break;
    case XLaw::Kind::IIDGaussian:
      if (!(xlaw.sd > 0.0)) throw Error("dgp", "Gaussian covariate law needs sd > 0");
      break;
  }
  if (!gamma.per_cell.empty() && xlaw.kind != XLaw::Kind::FiniteSupport)
    throw Error("dgp", "per-cell gamma laws need a finite covariate law");
  gamma.validate(K, support_size);
}

int support_index(const XLaw& law, const TrajRef& x) {
  if (law.kind != XLaw::Kind::FiniteSupport) return -1;
  for (std::size_t i = 0; i < law.support.size(); ++i) {
    const auto& s = law.support[i].x;
    if (s.rows() == x.rows() && s.cols() == x.cols() && s == x) return static_cast<int>(i);
  }
  return -1;
}

namespace {

const std::vector<GammaPoint>& discrete_points(const DgpSpec& spec, int cell) {
  if (spec.gamma.per_cell.empty()) return spec.gamma.common;
  if (cell < 0 || cell >= static_cast<int>(spec.gamma.per_cell.size()))
    throw Error("dgp", "x is not a support point of the covariate law (per-cell gamma law)");
  return spec.gamma.per_cell[cell];
}

std::vector<GammaPoint> gh_points(const DgpSpec& spec, const TrajRef& x, int n) {
  const auto& rule = gauss_hermite(n);
  const double mu = spec.gamma.mean_at(x);
  std::vector<GammaPoint> out(n);
  for (int i = 0; i < n; ++i) out[i] = {mu + spec.gamma.sd * rule.node[i], rule.weight[i]};
  return out;
}

}  // namespace

std::vector<GammaPoint> gamma_nodes(const DgpSpec& spec, const TrajRef& x, int gh_nodes) {
  if (spec.gamma.kind == GammaLaw::Kind::GaussianOfX) return gh_points(spec, x, gh_nodes);
  const int cell = spec.gamma.per_cell.empty() ? -1 : support_index(spec.xlaw, x);
  return discrete_points(spec, cell);
}

GammaIntegral integrate_gamma(const DgpSpec& spec, const TrajRef& x,
                              const std::function<Eigen::VectorXd(double)>& f) {
  auto sum_over = [&](const std::vector<GammaPoint>& pts) {
    Eigen::VectorXd acc;
    for (const auto& p : pts) {
      if (p.prob == 0.0) continue;
      Eigen::VectorXd v = f(p.value);
      if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
      acc += p.prob * v;
    }
    return acc;
  };
  GammaIntegral out;
  if (spec.gamma.kind == GammaLaw::Kind::DiscreteMixture) {
    const auto pts = gamma_nodes(spec, x);
    out.value = sum_over(pts);
    out.nodes = static_cast<int>(pts.size());
    return out;
  }
  // Gaussian: double the rule until two successive answers agree.
  int n = 64;
  Eigen::VectorXd prev = sum_over(gh_points(spec, x, n));
  out.converged = false;
  while (n < 512) {
    n *= 2;
    Eigen::VectorXd cur = sum_over(gh_points(spec, x, n));
    const double scale = std::max(cur.cwiseAbs().maxCoeff(), 1e-300);
    const bool done = (cur - prev).cwiseAbs().maxCoeff() <= 1e-10 * scale;
    prev = std::move(cur);
    if (done) {
      out.converged = true;
      break;
    }
  }
  out.value = std::move(prev);
  out.nodes = n;
  return out;
}

Traj kernel_x(const TrajRef& x, const GenLogistic& dist) {
  return dist.type() == FamilyType::First ? Traj(x) : Traj(-x);
}

Outcome kernel_y(const OutcomeRef& y, const GenLogistic& dist) {
  if (dist.type() == FamilyType::First) return y;
  return (1 - y.array()).matrix();
}

double cond_prob_y(const OutcomeRef& y, const TrajRef& x, double g, const VecRef& beta,
                   const GenLogistic& dist) {
  if (y.size() != x.rows()) throw Error("dgp", "y and x disagree on T");
  double p = 1.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double u = x.row(t).dot(beta) + g;
    p *= (y(t) == 1) ? dist.cdf(u) : dist.survival(u);
  }
  return p;
}

double cond_prob_y(const OutcomeRef& y, const TrajRef& x, double g, const DgpSpec& spec) {
  return cond_prob_y(y, x, g, spec.beta0, spec.dist);
}

std::vector<Outcome> all_outcomes(int T) {
  if (T < 1 || T > 20) throw Error("dgp", "outcome enumeration needs 1 <= T <= 20");
  std::vector<Outcome> out;
  out.reserve(std::size_t{1} << T);
  for (unsigned code = 0; code < (1u << T); ++code) {
    Outcome y(T);
    for (int t = 0; t < T; ++t) y(t) = static_cast<int>((code >> t) & 1u);
    out.push_back(std::move(y));
  }
  return out;
}

namespace {

// Per-gamma pieces shared by the conditional computations: the probability of each
// single-spell outcome (indexed by its spell period in kernel coordinates).
struct SpellProbs {
  std::vector<int> spell;       // kernel spell period for every outcome, -1 otherwise
  std::vector<Outcome> outcomes;
};

SpellProbs spell_table(const DgpSpec& spec) {
  SpellProbs s;
  s.outcomes = all_outcomes(spec.T);
  for (const auto& y : s.outcomes) s.spell.push_back(single_spell(kernel_y(y, spec.dist)));
  return s;
}

// P(Y = y | x, g) for every outcome y that is a kernel single spell, stored by spell period.
Eigen::VectorXd spell_probabilities(const DgpSpec& spec, const SpellProbs& tab, const TrajRef& x,
                                    double g) {
  const int T = spec.T;
  Eigen::VectorXd F(T), S(T);
  for (int t = 0; t < T; ++t) {
    const double u = x.row(t).dot(spec.beta0) + g;
    F(t) = spec.dist.cdf(u);
    S(t) = spec.dist.survival(u);
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(T);
  for (std::size_t k = 0; k < tab.outcomes.size(); ++k) {
    const int t = tab.spell[k];
    if (t < 0) continue;
    double prob = 1.0;
    for (int s = 0; s < T; ++s) prob *= tab.outcomes[k](s) == 1 ? F(s) : S(s);
    p(t) = prob;
  }
  return p;
}

std::span<const double> lambda_of(const DgpSpec& spec) {
  return {spec.dist.lambda().data(), spec.dist.lambda().size()};
}

}  // namespace

CondMoment cond_moment(const TrajRef& x, const DgpSpec& spec, const VecRef& b, KernelScale scale) {
  spec.validate(true);
  if (x.rows() != spec.T || x.cols() != spec.K()) throw Error("dgp", "x must be T x K");
  const SpellProbs tab = spell_table(spec);
  const Traj xk = kernel_x(x, spec.dist);
  const PeriodKernel pk = period_kernel(xk, b, lambda_of(spec), scale, false);
  const auto res = integrate_gamma(spec, x, [&](double g) {
    const Eigen::VectorXd p = spell_probabilities(spec, tab, x, g);
    Eigen::VectorXd v(2);
    v << p.dot(pk.value), p.dot(pk.value.cwiseAbs());
    return v;
  });
  return {res.value(0), res.value(1), res.converged};
}

Eigen::VectorXd a_weights(const TrajRef& x, const DgpSpec& spec) {
  spec.validate(true);
  const int J = spec.dist.tau();
  const auto& lam = spec.dist.lambda();
  const auto& w = spec.dist.w();
  const GenLogistic first = spec.dist.as_first_type();
  const bool second = spec.dist.type() == FamilyType::Second;
  const Eigen::VectorXd a = kernel_x(x, spec.dist) * spec.beta0;
  const auto res = integrate_gamma(spec, x, [&](double g) {
    const double gk = second ? -g : g;
    double log_denom = 0.0;
    for (Eigen::Index t = 0; t < a.size(); ++t) {
      const double lg = first.log_odds_first(a(t) + gk);
      log_denom += lg > 0.0 ? lg + std::log1p(std::exp(-lg)) : std::log1p(std::exp(lg));
    }
    Eigen::VectorXd v(J);
    for (int j = 0; j < J; ++j)
      v(j) = w[j] > 0.0 ? std::exp(std::log(w[j]) + lam[j] * gk - log_denom) : 0.0;
    return v;
  });
  return res.value;
}

Eigen::VectorXd score_complete(const OutcomeRef& y, const TrajRef& x, double g, const VecRef& beta,
                               const GenLogistic& dist) {
  if (y.size() != x.rows()) throw Error("dgp", "y and x disagree on T");
  Eigen::VectorXd s = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double u = x.row(t).dot(beta) + g;
    // d log p / du = h(u) (y - F(u)) with h = f / (F (1 - F))
    const double resid = y(t) == 1 ? dist.survival(u) : -dist.cdf(u);
    s += dist.score_weight(u) * resid * x.row(t).transpose();
  }
  return s;
}

ROmega r_and_omega(const TrajRef& x, const DgpSpec& spec, KernelScale scale) {
  spec.validate(true);
  if (x.rows() != spec.T || x.cols() != spec.K()) throw Error("dgp", "x must be T x K");
  const int K = spec.K();
  const SpellProbs tab = spell_table(spec);
  const Traj xk = kernel_x(x, spec.dist);
  const KernelTerms terms = kernel_terms(xk, spec.beta0, lambda_of(spec), true);
  PeriodKernel pk, pn;
  rescale_terms(terms, scale, true, pk);
  rescale_terms(terms, KernelScale::Normalized, false, pn);
  // The kernel is evaluated at (-x) for second-type shocks; d/d beta picks up no extra sign
  // because the data transform is applied before the kernel sees beta.
  const auto res = integrate_gamma(spec, x, [&](double g) {
    const Eigen::VectorXd p = spell_probabilities(spec, tab, x, g);
    Eigen::VectorXd v(K + 2);
    v.head(K) = pk.grad.transpose() * p;
    v(K) = p.dot(pk.value.cwiseAbs2());
    v(K + 1) = p.dot(pn.value.cwiseAbs2());
    return v;
  });
  ROmega out;
  out.R = res.value.head(K);
  out.omega = res.value(K);
  out.degenerate = res.value(K + 1) < 1e-14;
  out.converged = res.converged;
  return out;
}

Eigen::VectorXd score_moment_cov(const TrajRef& x, const DgpSpec& spec, KernelScale scale) {
  spec.validate(true);
  const int K = spec.K();
  const auto outcomes = all_outcomes(spec.T);
  const Traj xk = kernel_x(x, spec.dist);
  const PeriodKernel pk = period_kernel(xk, spec.beta0, lambda_of(spec), scale, false);
  std::vector<int> spell;
  for (const auto& y : outcomes) spell.push_back(single_spell(kernel_y(y, spec.dist)));
  const auto res = integrate_gamma(spec, x, [&](double g) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(K);
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
      if (spell[k] < 0) continue;
      const double m = pk.value(spell[k]);
      if (m == 0.0) continue;
      const double p = cond_prob_y(outcomes[k], x, g, spec);
      v += p * m * score_complete(outcomes[k], x, g, spec.beta0, spec.dist);
    }
    return v;
  });
  return res.value;
}

EfficiencyBound efficiency_bound(const DgpSpec& spec) {
  spec.validate(true);
  if (spec.xlaw.kind != XLaw::Kind::FiniteSupport)
    throw Error("dgp", "the efficiency bound needs a finite covariate law");
  const int K = spec.K();
  EfficiencyBound out;
  out.information = Eigen::MatrixXd::Zero(K, K);
  for (const auto& sp : spec.xlaw.support) {
    if (sp.prob == 0.0) continue;
    const ROmega ro = r_and_omega(sp.x, spec, KernelScale::Normalized);
    if (ro.degenerate) {
      ++out.degenerate_cells;
      continue;
    }
    out.information += sp.prob * ro.R * ro.R.transpose() / ro.omega;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.information);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(hi > 0.0) || !(out.condition <= 1e12))
    throw Error("dgp", "information matrix E[R R'/Omega] is singular (condition number " +
                           std::to_string(out.condition) + ")");
  out.V0 = out.information.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
  return out;
}

Traj draw_x(const DgpSpec& spec, Engine& eng, int& cell) {
  const int T = spec.T;
  const int K = spec.K();
  cell = -1;
  switch (spec.xlaw.kind) {
    case XLaw::Kind::FiniteSupport: {
      const double u = uniform_open(eng);
      double acc = 0.0;
      const auto& sup = spec.xlaw.support;
      cell = static_cast<int>(sup.size()) - 1;
      for (std::size_t i = 0; i < sup.size(); ++i) {
        acc += sup[i].prob;
        if (u < acc) {
          cell = static_cast<int>(i);
          break;
        }
      }
      return sup[cell].x;
    }
    case XLaw::Kind::IIDUniform: {
      Traj x(T, K);
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k)
          x(t, k) = spec.xlaw.lo + (spec.xlaw.hi - spec.xlaw.lo) * uniform_open(eng);
      return x;
    }
    case XLaw::Kind::IIDGaussian: {
      Traj x(T, K);
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k) x(t, k) = spec.xlaw.mean + spec.xlaw.sd * standard_normal(eng);
      return x;
    }
  }
  throw Error("dgp", "unknown covariate law");
}

double draw_gamma(const DgpSpec& spec, const TrajRef& x, int cell, Engine& eng) {
  if (spec.gamma.kind == GammaLaw::Kind::GaussianOfX)
    return spec.gamma.mean_at(x) + spec.gamma.sd * standard_normal(eng);
  const auto& pts = discrete_points(spec, cell);
  const double u = uniform_open(eng);
  double acc = 0.0;
  for (const auto& p : pts) {
    acc += p.prob;
    if (u < acc) return p.value;
  }
  return pts.back().value;
}

PanelSample simulate_panel(const DgpSpec& spec, int n, std::uint64_t seed) {
  spec.validate(false);
  if (n < 1) throw Error("dgp", "sample size must be positive");
  const int T = spec.T;
  const int K = spec.K();
  PanelSample out(n, T, K);
  out.seed = seed;
  if (spec.xlaw.kind == XLaw::Kind::FiniteSupport) out.cell.assign(n, -1);
  Engine eng(stream_seed(seed, 0));
  for (int i = 0; i < n; ++i) {
    int cell = -1;
    const Traj x = draw_x(spec, eng, cell);
    const double g = draw_gamma(spec, x, cell, eng);
    out.traj(i) = x;
    if (!out.cell.empty()) out.cell[i] = cell;
    for (int t = 0; t < T; ++t) {
      // 1{eps <= a + g} with eps ~ F, via a single uniform
      const double u = uniform_open(eng);
      out.y(i, t) = u <= spec.dist.cdf(x.row(t).dot(spec.beta0) + g) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace glpanel
