#include "glpanel/ident.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

namespace glpanel {

namespace {

std::span<const double> lambda_of(const GenLogistic& d) { return {d.lambda().data(), d.lambda().size()}; }

int factorial(int n) { return n <= 1 ? 1 : n * factorial(n - 1); }

bool distinct_indices(const Eigen::VectorXd& a) {
  const double spread = a.maxCoeff() - a.minCoeff();
  for (Eigen::Index s = 0; s < a.size(); ++s)
    for (Eigen::Index t = s + 1; t < a.size(); ++t)
      if (std::abs(a(s) - a(t)) <= 1e-12 * std::max(1.0, spread)) return false;
  return true;
}

bool has_root_near(const std::vector<double>& roots, double c, double tol) {
  return std::any_of(roots.begin(), roots.end(), [&](double r) { return std::abs(r - c) <= tol; });
}

}  // namespace

RayScanReport ray_scan(const DgpSpec& spec, const std::vector<Traj>& probes, double c_lo,
                       double c_hi, int grid) {
  spec.validate(true);
  if (!(c_lo < c_hi)) throw Error("ident", "ray scan needs c_lo < c_hi");
  if (probes.empty()) throw Error("ident", "ray scan needs at least one probe");
  const int T = spec.T;
  const double lmax = spec.dist.lambda_max();
  RayScanReport rep;
  rep.c_lo = c_lo;
  rep.c_hi = c_hi;
  rep.certified_max_roots = factorial(T) - 1;
  rep.per_x_roots.resize(probes.size());
  constexpr double kMatch = 1e-6;

  for (std::size_t i = 0; i < probes.size(); ++i) {
    const Traj& x = probes[i];
    if (x.rows() != T || x.cols() != spec.K()) throw Error("ident", "probe must be T x K");
    const Traj xk = kernel_x(x, spec.dist);
    if (!distinct_indices(xk * spec.beta0)) {
      rep.flags.push_back("probe " + std::to_string(i) + " skipped: repeated index values");
      continue;
    }
    const Eigen::VectorXd aw = a_weights(x, spec);
    const ExpPoly p = ray_poly(xk, spec.beta0, aw, lambda_of(spec.dist));
    const int g = grid > 0 ? std::max(grid, static_cast<int>(2 * p.size()))
                           : std::max(4000, static_cast<int>(4 * p.size()));
    RootReport rr = exp_poly_roots(p, c_lo, c_hi, g);
    if (rr.identically_zero) {
      rep.flags.push_back("probe " + std::to_string(i) + " skipped: identically zero");
      continue;
    }
    std::vector<double> roots;
    for (double r : rr.roots)
      if (T < 3 || std::abs(r) > kMatch) roots.push_back(r);
    // c = 1 is always a root; it can be missed by the sign scan when it is tangential.
    if (c_lo <= 1.0 && 1.0 <= c_hi && !has_root_near(roots, 1.0, kMatch)) {
      if (std::abs(p.eval(1.0)) <= 1e-8 * rr.max_grid_abs) {
        roots.push_back(1.0);
        std::sort(roots.begin(), roots.end());
        rep.flags.push_back("probe " + std::to_string(i) + ": c = 1 is a root without sign change");
      } else {
        rep.flags.push_back("probe " + std::to_string(i) + ": c = 1 fails the residual check");
      }
    }
    if (rr.possible_missed)
      rep.flags.push_back("probe " + std::to_string(i) + ": possible missed root");
    for (const auto& f : rr.flags)
      if (f.find("possible missed") == std::string::npos)
        rep.flags.push_back("probe " + std::to_string(i) + ": " + f);
    rep.per_x_roots[i] = std::move(roots);
    rep.used_probes.push_back(static_cast<int>(i));
  }
  if (rep.used_probes.empty()) {
    rep.flags.emplace_back("no usable probe");
    return rep;
  }

  for (double r : rep.per_x_roots[rep.used_probes.front()]) {
    bool common = true;
    for (int i : rep.used_probes) common = common && has_root_near(rep.per_x_roots[i], r, kMatch);
    if (common) rep.roots.push_back(r);
  }
  for (double r : rep.roots) {
    if (r > 1.0 / lmax && r < lmax) {
      rep.roots_inside.push_back(r);
    } else {
      rep.roots_outside.push_back(r);
    }
  }
  if (static_cast<int>(rep.roots.size()) > rep.certified_max_roots)
    rep.flags.emplace_back("more common roots than the T! - 1 bound");
  if (!has_root_near(rep.roots, 1.0, kMatch) && c_lo <= 1.0 && 1.0 <= c_hi)
    rep.flags.emplace_back("c = 1 missing from the common roots");
  return rep;
}

std::vector<Traj> default_probes(const DgpSpec& spec, int count, std::uint64_t seed) {
  std::vector<Traj> out;
  if (spec.xlaw.kind == XLaw::Kind::FiniteSupport) {
    for (const auto& sp : spec.xlaw.support)
      if (sp.prob > 0.0) out.push_back(sp.x);
    return out;
  }
  Engine eng(stream_seed(seed, 0));
  for (int i = 0; i < count; ++i) {
    int cell = -1;
    out.push_back(draw_x(spec, eng, cell));
  }
  return out;
}

std::vector<RejectionVerdict> rejection_scan(const std::vector<Eigen::VectorXd>& candidates,
                                             const DgpSpec& spec, const std::vector<Traj>& probes) {
  spec.validate(true);
  std::vector<RejectionVerdict> out;
  std::vector<Traj> xk;
  for (const auto& x : probes) xk.push_back(kernel_x(x, spec.dist));
  for (const auto& b : candidates) {
    if (b.size() != spec.K()) throw Error("ident", "candidate has the wrong length");
    RejectionVerdict v;
    v.b = b;
    for (std::size_t i = 0; i < xk.size(); ++i) {
      const RejectionCheck rc = rejection_check(xk[i], b, spec.beta0, lambda_of(spec.dist));
      v.near_tie = v.near_tie || rc.near_tie;
      if (rc.in_set) {
        v.rejected = true;
        v.witness = static_cast<int>(i);
        break;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

Traj make_x1_probe(const VecRef& b, const VecRef& beta0, int T, Engine& eng) {
  const auto K = b.size();
  if (beta0.size() != K) throw Error("ident", "b and beta0 differ in length");
  if (T < 2) throw Error("ident", "need T >= 2");
  const double bb = b.squaredNorm();
  if (bb == 0.0) throw Error("ident", "b must be nonzero");
  // d is orthogonal to b and has a nonzero component along beta0
  const Eigen::VectorXd d = beta0 - (beta0.dot(b) / bb) * b;
  if (d.norm() <= 1e-10 * beta0.norm() || std::abs(d.dot(beta0)) == 0.0)
    throw Error("ident", "b lies in lin(beta0); no X_1(b) configuration exists");
  const Eigen::VectorXd dd = d / d.dot(beta0);  // (x_2 - x_1)'beta0 = 1
  for (int attempt = 0; attempt < 100; ++attempt) {
    Traj x(T, K);
    for (int t = 0; t < T; ++t)
      for (Eigen::Index k = 0; k < K; ++k) x(t, k) = standard_normal(eng);
    x.row(1) = x.row(0) + dd.transpose() * (0.5 + uniform_open(eng));
    const Eigen::VectorXd a = x * b;
    bool ok = true;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (int s = 0; s < T && ok; ++s)
      for (int t = s + 1; t < T && ok; ++t)
        if (!(s == 0 && t == 1) && std::abs(a(s) - a(t)) < 1e-3 * scale) ok = false;
    if (ok) return x;
  }
  throw Error("ident", "could not build an X_1(b) probe");
}

namespace {

// Permutations of the periods that leave the covariate trajectory unchanged.
std::vector<std::vector<int>> tie_symmetries(const TrajRef& x) {
  const int T = static_cast<int>(x.rows());
  std::vector<int> perm(T);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    bool keep = true;
    for (int t = 0; t < T && keep; ++t) keep = perm[t] == t || x.row(perm[t]) == x.row(t);
    if (keep) out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

bool pairwise_distinct(const TrajRef& x) {
  for (Eigen::Index s = 0; s < x.rows(); ++s)
    for (Eigen::Index t = s + 1; t < x.rows(); ++t)
      if (x.row(s) == x.row(t)) return false;
  return true;
}

Eigen::VectorXd random_b(Engine& eng, int K) {
  Eigen::VectorXd b(K);
  for (int k = 0; k < K; ++k) b(k) = 2.0 * standard_normal(eng);
  return b;
}

}  // namespace

DegenerateReport degenerate_check(const PanelSample& sample, const GenLogistic& dist,
                                  std::uint64_t seed) {
  sample.validate();
  DegenerateReport rep;
  rep.units = sample.n();
  std::vector<int> degenerate;
  for (int i = 0; i < sample.n(); ++i)
    if (!pairwise_distinct(sample.traj(i))) degenerate.push_back(i);
  rep.degenerate_units = static_cast<int>(degenerate.size());
  rep.prob_distinct = rep.units > 0 ? 1.0 - static_cast<double>(rep.degenerate_units) / rep.units : 0.0;
  rep.no_identification_power = rep.degenerate_units == rep.units;
  if (rep.no_identification_power)
    rep.flags.emplace_back("no identification power: no trajectory has T distinct covariate vectors");
  if (degenerate.empty()) return rep;
  if (sample.T != dist.tau() + 1 || sample.T > kMaxPeriods) {
    rep.flags.emplace_back("moment check skipped: T differs from tau + 1");
    return rep;
  }

  Engine eng(stream_seed(seed, 0));
  std::vector<Traj> xk;
  std::vector<Outcome> yk;
  std::vector<std::vector<std::vector<int>>> sym;
  for (int i : degenerate) {
    xk.push_back(kernel_x(sample.traj(i), dist));
    yk.push_back(kernel_y(sample.outcome(i), dist));
    sym.push_back(tie_symmetries(xk.back()));
  }
  for (int r = 0; r < 20; ++r) {
    const Eigen::VectorXd b = random_b(eng, sample.K);
    double sum = 0.0;
    double abs_sum = 0.0;
    for (std::size_t u = 0; u < xk.size(); ++u) {
      const PeriodKernel pk = period_kernel(xk[u], b, lambda_of(dist), KernelScale::Stabilized, false);
      const int t = single_spell(yk[u]);
      if (t < 0) continue;
      abs_sum += std::abs(pk.value(t));
      // y o sigma has its spell at sigma^{-1}(t); averaging over the group covers all images.
      double avg = 0.0;
      for (const auto& p : sym[u]) avg += pk.value(p[t]);
      sum += avg / static_cast<double>(sym[u].size());
    }
    const double rel = abs_sum > 0.0 ? std::abs(sum) / abs_sum : 0.0;
    rep.max_rel_moment = std::max(rep.max_rel_moment, rel);
  }
  rep.moment_zero = rep.max_rel_moment <= 1e-12;
  if (!rep.moment_zero) rep.flags.emplace_back("moment on the degenerate subsample is not zero");
  return rep;
}

DegenerateReport degenerate_check(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate(false);
  DegenerateReport rep;
  if (spec.xlaw.kind != XLaw::Kind::FiniteSupport) {
    rep.prob_distinct = 1.0;
    rep.flags.emplace_back("continuous covariate law: ties have probability 0");
    return rep;
  }
  std::vector<const SupportPoint*> degenerate;
  for (const auto& sp : spec.xlaw.support) {
    ++rep.units;
    if (pairwise_distinct(sp.x)) {
      rep.prob_distinct += sp.prob;
    } else {
      ++rep.degenerate_units;
      degenerate.push_back(&sp);
    }
  }
  rep.no_identification_power = rep.prob_distinct == 0.0;
  if (rep.no_identification_power)
    rep.flags.emplace_back("no identification power: no trajectory has T distinct covariate vectors");
  if (degenerate.empty()) return rep;
  if (spec.T != spec.dist.tau() + 1 || spec.T > kMaxPeriods) {
    rep.flags.emplace_back("moment check skipped: T differs from tau + 1");
    return rep;
  }
  Engine eng(stream_seed(seed, 0));
  for (int r = 0; r < 20; ++r) {
    const Eigen::VectorXd b = random_b(eng, spec.K());
    for (const auto* sp : degenerate) {
      const CondMoment cm = cond_moment(sp->x, spec, b, KernelScale::Stabilized);
      const double rel = cm.abs_mass > 0.0 ? std::abs(cm.value) / cm.abs_mass : 0.0;
      rep.max_rel_moment = std::max(rep.max_rel_moment, rel);
    }
  }
  rep.moment_zero = rep.max_rel_moment <= 1e-12;
  if (!rep.moment_zero) rep.flags.emplace_back("conditional moment at a degenerate point is not zero");
  return rep;
}

double adversarial_gamma_from_ratio(double ratio, const GenLogistic& dist) {
  if (dist.tau() != 2) throw Error("ident", "adversarial gamma needs tau = 2 (T = 3)");
  if (!(dist.w()[1] > 0.0)) throw Error("ident", "adversarial gamma needs w2 > 0");
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw Error("ident", "ratio -D1/D2 must be positive");
  return std::log(dist.w()[0] * ratio / dist.w()[1]) / (dist.lambda()[1] - 1.0);
}

double adversarial_gamma(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                         const GenLogistic& dist) {
  if (x.rows() != 3 || dist.tau() != 2) throw Error("ident", "adversarial gamma needs T = 3");
  const Traj xk = kernel_x(x, dist);
  const RejectionCheck rc = rejection_check(xk, b, beta0, lambda_of(dist));
  if (rc.sign[0] == 0 || rc.sign[1] == 0 || rc.sign[0] == rc.sign[1])
    throw Error("ident", "adversarial gamma needs D1 and D2 nonzero with opposite signs");
  const ScaledValue d1 = dj_det_scaled(xk, b, beta0, lambda_of(dist), 0);
  const ScaledValue d2 = dj_det_scaled(xk, b, beta0, lambda_of(dist), 1);
  // log R = log(-D1/D2) computed on the stabilized scale
  const double log_ratio = std::log(-d1.stab / d2.stab) + d1.log_scale - d2.log_scale;
  const double g = (std::log(dist.w()[0] / dist.w()[1]) + log_ratio) / (dist.lambda()[1] - 1.0);
  // second-type shocks: the normalized model has fixed effect -gamma
  return dist.type() == FamilyType::First ? g : -g;
}

DgpSpec build_nonidentified_dgp(const VecRef& b, const VecRef& beta0, const GenLogistic& dist,
                                const XLaw& xlaw) {
  if (xlaw.kind != XLaw::Kind::FiniteSupport)
    throw Error("ident", "the adversarial construction needs a finite covariate law");
  if (dist.tau() != 2) throw Error("ident", "the adversarial construction needs T = 3");
  const double bb = beta0.squaredNorm();
  if (bb == 0.0) throw Error("ident", "beta0 must be nonzero");
  const double c = b.dot(beta0) / bb;
  if ((b - c * beta0).norm() > 1e-12 * std::max(1.0, b.norm()))
    throw Error("ident", "b must lie on the ray through beta0");
  const double l2 = dist.lambda()[1];
  if (!(c > 1.0 / l2 && c < l2))
    throw Error("ident", "b = c beta0 needs c in (1/lambda2, lambda2)");

  DgpSpec spec;
  spec.beta0 = beta0;
  spec.T = 3;
  spec.dist = dist;
  spec.xlaw = xlaw;
  std::vector<std::vector<GammaPoint>> cells;
  for (const auto& sp : xlaw.support) {
    double g = 0.0;
    if (c != 1.0) {
      const RejectionCheck rc = rejection_check(kernel_x(sp.x, dist), b, beta0, lambda_of(dist));
      if (rc.sign[0] != 0 || rc.sign[1] != 0) g = adversarial_gamma(sp.x, b, beta0, dist);
    }
    cells.push_back({{g, 1.0}});
  }
  spec.gamma = GammaLaw::discrete_per_cell(std::move(cells));
  spec.validate(true);
  return spec;
}

SupportReport check_support_assumptions(const PanelSample& sample, int k_focus, double bandwidth) {
  sample.validate();
  const int K = sample.K;
  const int T = sample.T;
  if (k_focus >= K) throw Error("ident", "k_focus out of range");
  SupportReport rep;
  rep.distinct_freq.assign(K, 0.0);
  const int n = sample.n();
  for (int k = 0; k < K; ++k) {
    if (k_focus >= 0 && k != k_focus) continue;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const auto x = sample.traj(i);
      bool ok = true;
      for (int t = 0; t < T && ok; ++t)
        for (int j = 0; j < K && ok; ++j)
          if (j != k && x(t, j) != 0.0) ok = false;
      for (int s = 0; s < T && ok; ++s)
        for (int t = s + 1; t < T && ok; ++t)
          if (x(s, k) == x(t, k)) ok = false;
      hits += ok;
    }
    rep.distinct_freq[k] = n > 0 ? static_cast<double>(hits) / n : 0.0;
  }
  if (bandwidth <= 0.0) {
    const double mean = sample.x.mean();
    const double var = (sample.x.array() - mean).square().mean();
    bandwidth = 0.1 * std::sqrt(var);
    if (bandwidth == 0.0) bandwidth = 1e-8;
  }
  rep.bandwidth = bandwidth;
  long long pairs = 0;
  long long close = 0;
  for (int i = 0; i < n; ++i) {
    const auto x = sample.traj(i);
    for (int s = 0; s < T; ++s)
      for (int t = s + 1; t < T; ++t) {
        ++pairs;
        close += (x.row(s) - x.row(t)).norm() < bandwidth;
      }
  }
  rep.overlap_freq = pairs > 0 ? static_cast<double>(close) / pairs : 0.0;
  rep.notes.emplace_back("frequencies are descriptive; no finite-sample test of these conditions");
  return rep;
}

BetaZeroTest test_beta_zero(const PanelSample& sample, int t, int t_prime, int bins) {
  sample.validate();
  const int T = sample.T;
  const int K = sample.K;
  if (t < 0 || t >= T || t_prime < 0 || t_prime >= T || t == t_prime)
    throw Error("ident", "test-zero needs two distinct periods in range");
  if (bins < 1) throw Error("ident", "bins must be at least 1");
  BetaZeroTest out;

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < sample.n(); ++i) {
    const Eigen::VectorXd d = (sample.traj(i).row(t) - sample.traj(i).row(t_prime)).transpose();
    G += d * d.transpose();
  }
  G /= std::max(1, sample.n());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  out.min_eig = eig.eigenvalues().minCoeff();
  out.max_eig = eig.eigenvalues().maxCoeff();
  out.rank_ok = out.max_eig > 0.0 && out.min_eig > 1e-8 * out.max_eig;
  if (!out.rank_ok)
    throw Error("ident", "rank check failed: E[(X_t - X_t')(X_t - X_t')'] is singular (eigenvalues " +
                             std::to_string(out.min_eig) + ", " + std::to_string(out.max_eig) + ")");

  std::vector<int> sw;
  for (int i = 0; i < sample.n(); ++i)
    if (sample.y(i, t) + sample.y(i, t_prime) == 1) sw.push_back(i);
  out.switchers = static_cast<int>(sw.size());
  if (out.switchers < 20)
    throw Error("ident", "too few switchers (" + std::to_string(out.switchers) + " < 20)");

  // coordinates (X_t, X_t') of every switcher
  const int D = 2 * K;
  std::vector<std::vector<double>> coord(D, std::vector<double>(sw.size()));
  for (std::size_t u = 0; u < sw.size(); ++u) {
    const auto x = sample.traj(sw[u]);
    for (int k = 0; k < K; ++k) {
      coord[k][u] = x(t, k);
      coord[K + k][u] = x(t_prime, k);
    }
  }
  for (int B = bins; B >= 1; --B) {
    std::vector<std::vector<double>> cuts(D);
    for (int c = 0; c < D; ++c) {
      std::vector<double> v = coord[c];
      std::sort(v.begin(), v.end());
      for (int q = 1; q < B; ++q) cuts[c].push_back(v[(v.size() * q) / B]);
    }
    std::map<std::vector<int>, std::pair<int, int>> cells;  // key -> (N_c, S_c)
    std::vector<int> key(D);
    for (std::size_t u = 0; u < sw.size(); ++u) {
      for (int c = 0; c < D; ++c)
        key[c] = static_cast<int>(std::upper_bound(cuts[c].begin(), cuts[c].end(), coord[c][u]) -
                                  cuts[c].begin());
      auto& cell = cells[key];
      ++cell.first;
      cell.second += sample.y(sw[u], t);
    }
    const bool ok = std::all_of(cells.begin(), cells.end(),
                                [](const auto& kv) { return kv.second.first >= 20; });
    if (!ok && B > 1) continue;
    double stat = 0.0;
    for (const auto& [k, v] : cells) {
      const double N = v.first;
      stat += (v.second - N / 2.0) * (v.second - N / 2.0) / (N / 4.0);
    }
    out.statistic = stat;
    out.cells = static_cast<int>(cells.size());
    out.df = out.cells;
    out.bins = B;
    boost::math::chi_squared chi(out.df);
    out.p_value = boost::math::cdf(boost::math::complement(chi, stat));
    return out;
  }
  throw Error("ident", "unreachable");
}

}  // namespace glpanel
