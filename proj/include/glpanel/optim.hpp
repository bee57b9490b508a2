#ifndef GLPANEL_OPTIM_HPP
#define GLPANEL_OPTIM_HPP

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace glpanel {

/// Objective returning f(x) and, when `grad` is non-null, writing its gradient.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  int max_iter = 500;
  bool nelder_mead_fallback = true;
  bool keep_trace = false;
};

struct OptimStep {
  int iter = 0;
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
  std::string method;   // "bfgs" or "nelder-mead"
  std::string message;
  std::vector<OptimStep> trace;
};

/// BFGS on the inverse Hessian with Armijo backtracking.
OptimResult bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opt = {});

/// Derivative-free simplex search; used when the quasi-Newton line search stalls.
OptimResult nelder_mead(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opt = {});

/// BFGS, falling back to Nelder-Mead (then one more BFGS polish) if it does not converge.
OptimResult minimize(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& opt = {});

}  // namespace glpanel

#endif
