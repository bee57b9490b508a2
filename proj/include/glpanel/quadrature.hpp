#ifndef GLPANEL_QUADRATURE_HPP
#define GLPANEL_QUADRATURE_HPP

#include <vector>

namespace glpanel {

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1): E[f(Z)] ~= sum_i weight_i f(node_i).
struct GaussHermiteRule {
  std::vector<double> node;
  std::vector<double> weight;
};

/// Probabilists' Gauss-Hermite rule with n nodes (Golub-Welsch). Cached per n; thread-safe.
const GaussHermiteRule& gauss_hermite(int n);

}  // namespace glpanel

#endif
