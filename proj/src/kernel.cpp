#include "glpanel/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace glpanel {

namespace {

using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxPeriods, kMaxPeriods>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxPeriods, 1>;

void check_shapes(const TrajRef& x, const VecRef& beta, std::span<const double> lambda) {
  const auto T = x.rows();
  if (T < 2) throw Error("kernel", "need T >= 2");
  if (T > kMaxPeriods)
    throw Error("kernel", "T = " + std::to_string(T) + " exceeds the factorial-cost cap of 6");
  if (x.cols() != beta.size()) throw Error("kernel", "x has K columns but beta has a different length");
  if (static_cast<Eigen::Index>(lambda.size()) != T - 1)
    throw Error("kernel", "lambda must have length T - 1");
  if (lambda[0] != 1.0) throw Error("kernel", "lambda[0] must be 1");
}

SmallVec index_values(const TrajRef& x, const VecRef& beta) {
  SmallVec a = x * beta;
  if (!a.allFinite()) throw Error("kernel", "non-finite index value x_t'beta");
  return a;
}

double det_closed(const SmallMat& a) {
  switch (a.rows()) {
    case 1:
      return a(0, 0);
    case 2:
      return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    case 3:
      return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
             a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
             a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    default:
      return a.partialPivLu().determinant();
  }
}

// Cofactor matrix C with det = sum_s a(j, s) C(j, s) for every row j.
SmallMat cofactors(const SmallMat& a) {
  const auto n = a.rows();
  SmallMat c(n, n);
  if (n == 1) {
    c(0, 0) = 1.0;
    return c;
  }
  if (n == 2) {
    c << a(1, 1), -a(1, 0), -a(0, 1), a(0, 0);
    return c;
  }
  SmallMat minor(n - 1, n - 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index s = 0; s < n; ++s) {
      for (Eigen::Index i = 0, mi = 0; i < n; ++i) {
        if (i == r) continue;
        for (Eigen::Index k = 0, mk = 0; k < n; ++k) {
          if (k == s) continue;
          minor(mi, mk++) = a(i, k);
        }
        ++mi;
      }
      c(r, s) = (((r + s) % 2 == 0) ? 1.0 : -1.0) * det_closed(minor);
    }
  }
  return c;
}

double hadamard_bound(const SmallMat& a) {
  double h = 1.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) h *= a.row(r).norm();
  return h;
}

}  // namespace

double small_det(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  if (a.rows() != a.cols()) throw Error("kernel", "determinant of a non-square matrix");
  if (a.rows() == 0) return 1.0;
  if (a.rows() <= 3) return det_closed(SmallMat(a));
  return a.partialPivLu().determinant();
}

void kernel_terms_into(const TrajRef& x, const VecRef& beta, std::span<const double> lambda,
                       bool with_grad, KernelTerms& out) {
  check_shapes(x, beta, lambda);
  const auto T = x.rows();
  const auto K = x.cols();
  const auto n = T - 1;
  const SmallVec a = index_values(x, beta);
  const double abar = a.mean();
  double lambda_sum = 0.0;
  for (double l : lambda) lambda_sum += l;

  // E(j, s) = exp(lambda_j (a_s - abar)) over all T periods; each M_t drops column t.
  SmallMat e(n, T);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index s = 0; s < T; ++s) e(j, s) = std::exp(lambda[j] * (a(s) - abar));

  out.stab.resize(T);
  out.log_scale = abar * lambda_sum;
  out.log_scale_grad = x.colwise().mean().transpose() * lambda_sum;
  if (with_grad) out.grad.resize(T, K);

  SmallMat sub(n, n);
  Eigen::RowVectorXd xbar;
  if (with_grad) xbar = x.colwise().mean();
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index s = 0, c = 0; s < T; ++s) {
      if (s == t) continue;
      sub.col(c++) = e.col(s);
    }
    const double sign = (t % 2 == 0) ? 1.0 : -1.0;
    out.stab(t) = sign * det_closed(sub);
    if (!with_grad) continue;
    // d det = sum_{j,s} C(j,s) E(j,s) lambda_j (x_s - xbar)
    const SmallMat cof = cofactors(sub);
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(K);
    for (Eigen::Index s = 0, c = 0; s < T; ++s) {
      if (s == t) continue;
      double w = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) w += cof(j, c) * sub(j, c) * lambda[j];
      g += w * (x.row(s) - xbar);
      ++c;
    }
    out.grad.row(t) = sign * g;
  }
}

KernelTerms kernel_terms(const TrajRef& x, const VecRef& beta, std::span<const double> lambda,
                         bool with_grad) {
  KernelTerms out;
  kernel_terms_into(x, beta, lambda, with_grad, out);
  return out;
}

ScaledValue mt_det(const TrajRef& x, const VecRef& beta, int t, std::span<const double> lambda) {
  check_shapes(x, beta, lambda);
  if (t < 0 || t >= x.rows()) throw Error("kernel", "period index out of range");
  const KernelTerms terms = kernel_terms(x, beta, lambda, false);
  return {terms.stab(t), terms.log_scale};
}

int single_spell(const OutcomeRef& y) {
  int idx = -1;
  int ones = 0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (y(t) == 1) {
      ++ones;
      idx = static_cast<int>(t);
    } else if (y(t) != 0) {
      throw Error("kernel", "outcome entries must be 0 or 1");
    }
  }
  return ones == 1 ? idx : -1;
}

MomentEval moment_m(const OutcomeRef& y, const TrajRef& x, const VecRef& beta,
                    std::span<const double> lambda) {
  if (y.size() != x.rows()) throw Error("kernel", "y and x disagree on T");
  const int t = single_spell(y);
  check_shapes(x, beta, lambda);
  const auto K = x.cols();
  MomentEval out;
  out.grad = Eigen::VectorXd::Zero(K);
  out.raw_grad = Eigen::VectorXd::Zero(K);
  const KernelTerms terms = kernel_terms(x, beta, lambda, t >= 0);
  out.log_scale = terms.log_scale;
  if (t < 0) return out;
  out.stab_value = terms.stab(t);
  out.grad = terms.grad.row(t).transpose();
  const double scale = std::exp(terms.log_scale);
  out.value = out.stab_value * scale;
  out.raw_grad = scale * (out.grad + out.stab_value * terms.log_scale_grad);
  return out;
}

void rescale_terms(const KernelTerms& terms, KernelScale scale, bool with_grad, PeriodKernel& out) {
  const auto T = terms.stab.size();
  switch (scale) {
    case KernelScale::Stabilized:
      out.value = terms.stab;
      if (with_grad) out.grad = terms.grad;
      break;
    case KernelScale::Raw: {
      const double s = std::exp(terms.log_scale);
      out.value = s * terms.stab;
      if (with_grad) {
        out.grad = s * terms.grad;
        out.grad.noalias() += s * terms.stab * terms.log_scale_grad.transpose();
      }
      break;
    }
    case KernelScale::Normalized: {
      const double norm = terms.stab.norm();
      if (norm == 0.0) {
        out.value = Eigen::VectorXd::Zero(T);
        if (with_grad) out.grad = Eigen::MatrixXd::Zero(T, terms.log_scale_grad.size());
        break;
      }
      out.value = terms.stab / norm;
      if (with_grad) {
        // d(M_t/|M|) = dM_t/|M| - M_t (sum_s M_s dM_s) / |M|^3
        const Eigen::RowVectorXd dnorm = (terms.grad.transpose() * terms.stab).transpose() / norm;
        out.grad = terms.grad / norm;
        out.grad.noalias() -= (terms.stab / (norm * norm)) * dnorm;
      }
      break;
    }
  }
}

PeriodKernel period_kernel(const TrajRef& x, const VecRef& beta, std::span<const double> lambda,
                           KernelScale scale, bool with_grad) {
  const KernelTerms terms = kernel_terms(x, beta, lambda, with_grad);
  PeriodKernel out;
  rescale_terms(terms, scale, with_grad, out);
  return out;
}

KernelValue kernel_value(const OutcomeRef& y, const TrajRef& x, const VecRef& beta,
                         std::span<const double> lambda, KernelScale scale) {
  if (y.size() != x.rows()) throw Error("kernel", "y and x disagree on T");
  const int t = single_spell(y);
  check_shapes(x, beta, lambda);
  KernelValue out{0.0, Eigen::VectorXd::Zero(x.cols())};
  if (t < 0) return out;
  const PeriodKernel pk = period_kernel(x, beta, lambda, scale, true);
  out.value = pk.value(t);
  out.grad = pk.grad.row(t).transpose();
  return out;
}

Eigen::VectorXd grad_m(const OutcomeRef& y, const TrajRef& x, const VecRef& beta,
                       std::span<const double> lambda, KernelScale scale) {
  return kernel_value(y, x, beta, lambda, scale).grad;
}

namespace {

SmallMat dj_matrix(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                   std::span<const double> lambda, int j, double& log_scale) {
  check_shapes(x, b, lambda);
  if (beta0.size() != b.size()) throw Error("kernel", "b and beta0 differ in length");
  const auto T = x.rows();
  if (j < 0 || j >= T - 1) throw Error("kernel", "D_j index out of range");
  const SmallVec a0 = index_values(x, beta0);
  const SmallVec ab = index_values(x, b);
  const double m0 = a0.mean();
  const double mb = ab.mean();
  SmallMat d(T, T);
  double lambda_sum = 0.0;
  for (Eigen::Index s = 0; s < T; ++s) d(0, s) = std::exp(lambda[j] * (a0(s) - m0));
  for (Eigen::Index i = 1; i < T; ++i) {
    lambda_sum += lambda[i - 1];
    for (Eigen::Index s = 0; s < T; ++s) d(i, s) = std::exp(lambda[i - 1] * (ab(s) - mb));
  }
  log_scale = lambda[j] * m0 + mb * lambda_sum;
  return d;
}

}  // namespace

ScaledValue dj_det_scaled(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                          std::span<const double> lambda, int j) {
  double ls = 0.0;
  const SmallMat d = dj_matrix(x, b, beta0, lambda, j, ls);
  return {det_closed(d), ls};
}

double dj_det(const TrajRef& x, const VecRef& b, const VecRef& beta0,
              std::span<const double> lambda, int j) {
  return dj_det_scaled(x, b, beta0, lambda, j).value();
}

RejectionCheck rejection_check(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                               std::span<const double> lambda) {
  const int J = static_cast<int>(x.rows()) - 1;
  std::vector<double> stab(J), ls(J), had(J);
  for (int j = 0; j < J; ++j) {
    const SmallMat d = dj_matrix(x, b, beta0, lambda, j, ls[j]);
    stab[j] = det_closed(d);
    had[j] = hadamard_bound(d);
  }
  RejectionCheck out;
  out.common_log_scale = *std::max_element(ls.begin(), ls.end());
  out.d.resize(J);
  out.sign.assign(J, 0);
  double maxabs = 0.0;
  for (int j = 0; j < J; ++j) {
    const double f = std::exp(ls[j] - out.common_log_scale);
    out.d[j] = stab[j] * f;
    had[j] *= f;
    maxabs = std::max(maxabs, std::abs(out.d[j]));
  }
  int pos = 0;
  int neg = 0;
  for (int j = 0; j < J; ++j) {
    const double cutoff = std::max(1e-10 * maxabs, 1e-12 * had[j]);
    const double v = std::abs(out.d[j]);
    if (v > cutoff) {
      out.sign[j] = out.d[j] > 0.0 ? 1 : -1;
      (out.sign[j] > 0 ? pos : neg)++;
    }
    if (v > 0.0 && v > cutoff / 100.0 && v < cutoff * 100.0) out.near_tie = true;
  }
  out.in_set = (pos + neg > 0) && (pos == 0 || neg == 0);
  return out;
}

bool in_rejection_set(const TrajRef& x, const VecRef& b, const VecRef& beta0,
                      std::span<const double> lambda) {
  return rejection_check(x, b, beta0, lambda).in_set;
}

}  // namespace glpanel
