#ifndef GLPANEL_COMMON_HPP
#define GLPANEL_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace glpanel {

/// T x K covariate trajectory, one row per period.
using Traj = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TrajRef = Eigen::Ref<const Traj>;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;
using Outcome = Eigen::VectorXi;
using OutcomeRef = Eigen::Ref<const Eigen::VectorXi>;

/// Errors carry the name of the module that raised them, e.g. "kernel: T > 6".
class Error : public std::runtime_error {
 public:
  Error(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what) {}
};

inline constexpr int kMaxPeriods = 6;

}  // namespace glpanel

#endif
