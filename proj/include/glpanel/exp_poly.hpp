#ifndef GLPANEL_EXP_POLY_HPP
#define GLPANEL_EXP_POLY_HPP

#include <span>
#include <string>
#include <vector>

#include "glpanel/common.hpp"
#include "glpanel/kernel.hpp"

namespace glpanel {

/// Exponential polynomial c -> sum_k d_k exp(b_k c).
///
/// Exponents are sorted ascending; exponents closer than `merge_tol` are merged and their
/// coefficients summed. A nonzero exponential polynomial with m terms has at most m - 1
/// real roots.
class ExpPoly {
 public:
  ExpPoly() = default;
  ExpPoly(std::vector<double> coeffs, std::vector<double> exponents, double merge_tol = 1e-12);

  [[nodiscard]] const std::vector<double>& coeffs() const { return coeffs_; }
  [[nodiscard]] const std::vector<double>& exponents() const { return exponents_; }
  [[nodiscard]] std::size_t size() const { return coeffs_.size(); }
  /// Number of terms with a nonzero coefficient.
  [[nodiscard]] std::size_t nonzero_terms() const;

  [[nodiscard]] double eval(double c) const;
  /// Value as stab * exp(log_scale) with log_scale = max_k b_k c.
  [[nodiscard]] ScaledValue eval_scaled(double c) const;

 private:
  std::vector<double> coeffs_;
  std::vector<double> exponents_;
};

double exp_poly_eval(const ExpPoly& p, double c);

struct RootReport {
  std::vector<double> roots;  // ascending
  /// Fewer roots than the term bound and |p| gets small somewhere without a sign change
  /// (near an endpoint or at a grid-local minimum), so a tangential or boundary root may be missed.
  bool possible_missed = false;
  bool identically_zero = false;
  double max_grid_abs = 0.0;
  std::vector<std::string> flags;
};

/// Sign-change scan on `grid` equally spaced points of [lo, hi], each bracket refined by
/// bisection to width 1e-10.
RootReport exp_poly_roots(const ExpPoly& p, double lo, double hi, int grid);

/// sum_j a_j D_j(x; c beta0) as an exponential polynomial in c. Needs T distinct index
/// values x_t'beta0 and positive weights.
ExpPoly ray_poly(const TrajRef& x, const VecRef& beta0, const VecRef& a_weights,
                 std::span<const double> lambda);

}  // namespace glpanel

#endif
