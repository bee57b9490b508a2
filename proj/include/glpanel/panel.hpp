#ifndef GLPANEL_PANEL_HPP
#define GLPANEL_PANEL_HPP

#include <cstdint>
#include <vector>

#include "glpanel/common.hpp"

namespace glpanel {

/// Balanced panel of n units observed over T periods with K covariates.
/// Covariates are stored row-major as n x (T*K), period-major within a row.
struct PanelSample {
  int T = 0;
  int K = 0;
  Eigen::MatrixXi y;  // n x T, entries in {0,1}
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x;
  std::uint64_t seed = 0;
  /// Support-point index per unit when drawn from a finite covariate law; empty otherwise.
  std::vector<int> cell;

  PanelSample() = default;
  PanelSample(int n, int periods, int covariates)
      : T(periods), K(covariates), y(Eigen::MatrixXi::Zero(n, periods)),
        x(n, periods * covariates) {
    x.setZero();
  }

  [[nodiscard]] int n() const { return static_cast<int>(y.rows()); }

  [[nodiscard]] Eigen::Map<const Traj> traj(int i) const {
    return Eigen::Map<const Traj>(x.row(i).data(), T, K);
  }
  [[nodiscard]] Eigen::Map<Traj> traj(int i) {
    return Eigen::Map<Traj>(x.row(i).data(), T, K);
  }
  [[nodiscard]] Outcome outcome(int i) const { return y.row(i).transpose(); }

  /// Throws if shapes disagree or y is not binary.
  void validate() const;
};

}  // namespace glpanel

#endif
