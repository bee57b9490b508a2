#ifndef GLPANEL_KERNEL_HPP
#define GLPANEL_KERNEL_HPP

#include <cmath>
#include <span>
#include <vector>

#include "glpanel/common.hpp"

namespace glpanel {

/// A value kept as stab * exp(log_scale) so that large determinants stay representable.
struct ScaledValue {
  double stab = 0.0;
  double log_scale = 0.0;
  [[nodiscard]] double value() const { return stab * std::exp(log_scale); }
};

/// Which version of the moment kernel a caller wants. All three share the same zero set
/// in b because they differ by a positive factor that depends on (x, b) only:
///   Raw        m(y, x; b)
///   Stabilized m(y, x; b) * exp(-mean_s(x_s'b) * sum_j lambda_j)
///   Normalized m(y, x; b) / ||(M_1, ..., M_T)||   (0 when every M_t vanishes)
enum class KernelScale { Raw, Stabilized, Normalized };

/// Observed trajectory: binary outcomes and the T x K covariate matrix.
struct Trajectory {
  Outcome y;
  Traj x;
};

/// Moment kernel at one trajectory.
struct MomentEval {
  double value = 0.0;         // raw m
  double stab_value = 0.0;    // value == stab_value * exp(log_scale)
  double log_scale = 0.0;
  Eigen::VectorXd grad;       // gradient of stab_value in beta
  Eigen::VectorXd raw_grad;   // gradient of value in beta
};

struct KernelValue {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Determinant of a small square matrix: closed form up to 3x3, partial-pivot LU above.
double small_det(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Stabilized M_t for every period plus gradients. Row t of `grad` is d stab_t / d beta.
/// log_scale = mean_s(x_s'beta) * sum_j lambda_j is common to all t.
struct KernelTerms {
  Eigen::VectorXd stab;
  Eigen::MatrixXd grad;
  double log_scale = 0.0;
  Eigen::VectorXd log_scale_grad;
};

KernelTerms kernel_terms(const TrajRef& x, const VecRef& beta, std::span<const double> lambda,
                         bool with_grad = true);
/// Same, writing into `out` so hot loops can reuse its storage.
void kernel_terms_into(const TrajRef& x, const VecRef& beta, std::span<const double> lambda,
                       bool with_grad, KernelTerms& out);

/// Per-period kernel values M_t (and their gradients, T x K) on the requested scale.
struct PeriodKernel {
  Eigen::VectorXd value;
  Eigen::MatrixXd grad;
};

PeriodKernel period_kernel(const TrajRef& x, const VecRef& beta, std::span<const double> lambda,
                           KernelScale scale, bool with_grad = true);
/// Convert stabilized terms to the requested scale in place of a fresh evaluation.
void rescale_terms(const KernelTerms& terms, KernelScale scale, bool with_grad, PeriodKernel& out);

/// M_t(x; beta) = (-1)^t det[exp(lambda_j x_s'beta)]_{j, s != t} with 0-based t.
/// Throws for T > 6, a lambda of the wrong length, or non-finite index values.
ScaledValue mt_det(const TrajRef& x, const VecRef& beta, int t, std::span<const double> lambda);

/// Index of the only period with y_t = 1, or -1 if y is not a single-spell trajectory.
/// Throws if y is not binary.
int single_spell(const OutcomeRef& y);

MomentEval moment_m(const OutcomeRef& y, const TrajRef& x, const VecRef& beta,
                    std::span<const double> lambda);

Eigen::VectorXd grad_m(const OutcomeRef& y, const TrajRef& x, const VecRef& beta,
                       std::span<const double> lambda,
                       KernelScale scale = KernelScale::Stabilized);

KernelValue kernel_value(const OutcomeRef& y, const TrajRef& x, const VecRef& beta,
                         std::span<const double> lambda, KernelScale scale);

/// T x T determinant whose first row is exp(lambda_j x_s'beta0) and whose remaining rows are
/// exp(lambda_i x_s'b), i = 1..T-1. `j` is 0-based.
ScaledValue dj_det_scaled(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                          std::span<const double> lambda, int j);
double dj_det(const TrajRef& x, const VecRef& b, const VecRef& beta0,
              std::span<const double> lambda, int j);

/// Sign pattern of (D_1, ..., D_{T-1}) at a common scale.
struct RejectionCheck {
  bool in_set = false;
  /// D_j / exp(common_log_scale).
  std::vector<double> d;
  std::vector<int> sign;  // -1, 0, +1 after the zero cutoff
  double common_log_scale = 0.0;
  /// Some |D_j| lies within a factor 100 of the zero cutoff.
  bool near_tie = false;
};

/// D_j counts as zero when |D_j| <= 1e-10 * max_i |D_i| or when it is below a round-off
/// floor of 1e-12 times the Hadamard bound of its matrix.
RejectionCheck rejection_check(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                               std::span<const double> lambda);

bool in_rejection_set(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                      std::span<const double> lambda);

}  // namespace glpanel

#endif
