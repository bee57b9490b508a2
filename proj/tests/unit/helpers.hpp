#ifndef GLPANEL_TEST_HELPERS_HPP
#define GLPANEL_TEST_HELPERS_HPP

#include <initializer_list>

#include "glpanel/common.hpp"

inline glpanel::Traj traj(std::initializer_list<std::initializer_list<double>> rows) {
  glpanel::Traj x(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int t = 0;
  for (const auto& r : rows) {
    int k = 0;
    for (double v : r) x(t, k++) = v;
    ++t;
  }
  return x;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) out(i++) = e;
  return out;
}

inline glpanel::Outcome outcome(std::initializer_list<int> v) {
  glpanel::Outcome out(static_cast<int>(v.size()));
  int i = 0;
  for (int e : v) out(i++) = e;
  return out;
}

#endif
