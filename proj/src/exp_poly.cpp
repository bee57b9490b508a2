#include "glpanel/exp_poly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace glpanel {

ExpPoly::ExpPoly(std::vector<double> coeffs, std::vector<double> exponents, double merge_tol) {
  if (coeffs.size() != exponents.size())
    throw Error("kernel", "exp-poly coefficients and exponents differ in length");
  std::vector<std::size_t> order(coeffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return exponents[a] < exponents[b]; });
  for (std::size_t k : order) {
    if (!std::isfinite(coeffs[k]) || !std::isfinite(exponents[k]))
      throw Error("kernel", "non-finite exp-poly term");
    if (!exponents_.empty() && exponents[k] - exponents_.back() <= merge_tol) {
      coeffs_.back() += coeffs[k];
    } else {
      exponents_.push_back(exponents[k]);
      coeffs_.push_back(coeffs[k]);
    }
  }
}

std::size_t ExpPoly::nonzero_terms() const {
  return static_cast<std::size_t>(
      std::count_if(coeffs_.begin(), coeffs_.end(), [](double d) { return d != 0.0; }));
}

ScaledValue ExpPoly::eval_scaled(double c) const {
  if (coeffs_.empty()) return {0.0, 0.0};
  double top = -std::numeric_limits<double>::infinity();
  for (double b : exponents_) top = std::max(top, b * c);
  double s = 0.0;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) s += coeffs_[k] * std::exp(exponents_[k] * c - top);
  return {s, top};
}

double ExpPoly::eval(double c) const { return eval_scaled(c).value(); }

double exp_poly_eval(const ExpPoly& p, double c) { return p.eval(c); }

namespace {

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

RootReport exp_poly_roots(const ExpPoly& p, double lo, double hi, int grid) {
  if (!(lo < hi)) throw Error("kernel", "root interval needs lo < hi");
  const std::size_t terms = p.nonzero_terms();
  if (grid < 2 || static_cast<std::size_t>(grid) < 2 * p.size())
    throw Error("kernel", "root grid needs at least 2 * (number of terms) points");
  RootReport out;
  if (terms == 0) {
    out.identically_zero = true;
    out.flags.emplace_back("identically zero exponential polynomial");
    return out;
  }

  std::vector<double> c(grid), v(grid);
  for (int i = 0; i < grid; ++i) {
    c[i] = (i == grid - 1) ? hi : lo + (hi - lo) * i / (grid - 1);
    v[i] = p.eval(c[i]);
    out.max_grid_abs = std::max(out.max_grid_abs, std::abs(v[i]));
  }

  for (int i = 0; i < grid; ++i) {
    if (v[i] == 0.0) {
      out.roots.push_back(c[i]);
      continue;
    }
    if (i + 1 < grid && v[i + 1] != 0.0 && sgn(v[i]) != sgn(v[i + 1])) {
      double a = c[i];
      double b = c[i + 1];
      const int sa = sgn(p.eval_scaled(a).stab);
      while (b - a > 1e-10) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) break;
        const int sm = sgn(p.eval_scaled(mid).stab);
        if (sm == 0) {
          a = b = mid;
          break;
        }
        if (sm == sa) {
          a = mid;
        } else {
          b = mid;
        }
      }
      out.roots.push_back(0.5 * (a + b));
    }
  }

  if (out.roots.size() + 1 > terms)
    out.flags.emplace_back("root count exceeds the term bound; values are at round-off level");
  for (double r : out.roots) {
    if (std::abs(p.eval(r)) > 1e-8 * out.max_grid_abs)
      out.flags.emplace_back("root at c = " + std::to_string(r) + " fails the residual check");
  }

  if (out.roots.size() + 1 < terms) {
    const double small = 1e-6 * out.max_grid_abs;
    bool suspicious = std::abs(v.front()) <= small || std::abs(v.back()) <= small;
    for (int i = 1; i + 1 < grid && !suspicious; ++i) {
      const double a = std::abs(v[i]);
      if (a <= small && a <= std::abs(v[i - 1]) && a <= std::abs(v[i + 1]) &&
          sgn(v[i - 1]) == sgn(v[i + 1]))
        suspicious = true;
    }
    if (suspicious) {
      out.possible_missed = true;
      out.flags.emplace_back("possible missed root (small values without a sign change)");
    }
  }
  return out;
}

ExpPoly ray_poly(const TrajRef& x, const VecRef& beta0, const VecRef& a_weights,
                 std::span<const double> lambda) {
  const auto T = static_cast<int>(x.rows());
  if (T < 2 || T > kMaxPeriods) throw Error("kernel", "ray_poly needs 2 <= T <= 6");
  if (static_cast<int>(lambda.size()) != T - 1 || a_weights.size() != T - 1)
    throw Error("kernel", "ray_poly needs T - 1 weights and exponents");
  for (Eigen::Index j = 0; j < a_weights.size(); ++j)
    if (!(a_weights(j) > 0.0)) throw Error("kernel", "ray_poly weights must be positive");
  const Eigen::VectorXd a = x * beta0;
  const double spread = a.maxCoeff() - a.minCoeff();
  for (int s = 0; s < T; ++s)
    for (int t = s + 1; t < T; ++t)
      if (std::abs(a(s) - a(t)) <= 1e-12 * std::max(1.0, spread))
        throw Error("kernel", "ray_poly needs distinct index values (degenerate ray scan)");

  std::vector<double> coeffs;
  std::vector<double> exps;
  std::vector<int> retained(T - 1);
  std::vector<int> perm(T - 1);
  for (int t = 0; t < T; ++t) {
    double lead = 0.0;
    for (int j = 0; j < T - 1; ++j) lead += a_weights(j) * std::exp(lambda[j] * a(t));
    if (t % 2 == 1) lead = -lead;
    for (int s = 0, k = 0; s < T; ++s)
      if (s != t) retained[k++] = s;
    std::iota(perm.begin(), perm.end(), 0);
    do {
      int inversions = 0;
      for (int i = 0; i < T - 1; ++i)
        for (int k = i + 1; k < T - 1; ++k) inversions += perm[i] > perm[k];
      double e = 0.0;
      for (int i = 0; i < T - 1; ++i) e += lambda[i] * a(retained[perm[i]]);
      coeffs.push_back(inversions % 2 == 0 ? lead : -lead);
      exps.push_back(e);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return ExpPoly(std::move(coeffs), std::move(exps));
}

}  // namespace glpanel
