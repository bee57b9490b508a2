#include "glpanel/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Eigenvalues>

#include "glpanel/common.hpp"

namespace glpanel {

namespace {

GaussHermiteRule build_rule(int n) {
  // Jacobi matrix of the monic probabilists' Hermite recurrence: off-diagonal sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
  GaussHermiteRule rule;
  rule.node.resize(n);
  rule.weight.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.node[i] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weight[i] = v * v;
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int n) {
  if (n < 1) throw Error("quadrature", "Gauss-Hermite rule needs n >= 1");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(n == 1 ? GaussHermiteRule{{0.0}, {1.0}}
                                                              : build_rule(n));
  return *slot;
}

}  // namespace glpanel
