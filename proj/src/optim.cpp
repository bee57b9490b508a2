#include "glpanel/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace glpanel {

OptimResult bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opt) {
  const auto K = x0.size();
  OptimResult res;
  res.method = "bfgs";
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(K);
  double fx = f(x, &g);
  if (!std::isfinite(fx) || !g.allFinite()) {
    res.x = x;
    res.f = fx;
    res.grad = g;
    res.message = "non-finite objective at the start";
    return res;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(K, K);
  bool scaled = false;
  Eigen::VectorXd gn(K);
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (opt.keep_trace) res.trace.push_back({it, x, fx, g.norm()});
    if (g.norm() <= opt.grad_tol) {
      res.converged = true;
      res.message = "gradient norm below tolerance";
      break;
    }
    Eigen::VectorXd p = -H * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      H.setIdentity();
      p = -g;
      slope = -g.squaredNorm();
    }
    // Armijo backtracking
    double step = 1.0;
    Eigen::VectorXd xn;
    double fn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + step * p;
      fn = f(xn, &gn);
      if (std::isfinite(fn) && gn.allFinite() && fn <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!H.isIdentity()) {
        H.setIdentity();
        continue;
      }
      res.message = "line search stalled";
      break;
    }
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    const double fprev = fx;
    x = xn;
    fx = fn;
    g = gn;
    if (s.norm() <= opt.step_tol * (1.0 + x.norm()) ||
        std::abs(fprev - fx) <= 1e-15 * std::max(std::abs(fx), 1e-300)) {
      res.converged = g.norm() <= std::sqrt(opt.grad_tol) || s.norm() <= opt.step_tol * (1.0 + x.norm());
      res.message = "step below tolerance";
      ++it;
      break;
    }
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        H *= sy / yv.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * yv;
      H += rho * rho * (sy + yv.dot(Hy)) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  if (it >= opt.max_iter && !res.converged) res.message = "iteration limit";
  res.x = x;
  res.f = fx;
  res.grad = g;
  res.iterations = it;
  return res;
}

OptimResult nelder_mead(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opt) {
  const auto K = x0.size();
  const int n = static_cast<int>(K);
  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1](i) += 0.1 * std::max(1.0, std::abs(x0(i)));
  auto eval = [&](const Eigen::VectorXd& x) {
    const double v = f(x, nullptr);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (int i = 0; i <= n; ++i) fv[i] = eval(pts[i]);
  std::vector<int> idx(n + 1);
  OptimResult res;
  res.method = "nelder-mead";
  const int max_iter = std::max(opt.max_iter, 400 * n);
  int it = 0;
  for (; it < max_iter; ++it) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = idx.front();
    const int worst = idx.back();
    const int second = idx[n - 1];
    double size = 0.0;
    for (int i = 0; i <= n; ++i) size = std::max(size, (pts[i] - pts[best]).norm());
    if (size <= opt.step_tol * (1.0 + pts[best].norm()) ||
        fv[worst] - fv[best] <= 1e-16 * std::max(std::abs(fv[best]), 1e-300)) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(K);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= n;
    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                         : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(xc);
      if (fc < std::min(fr, fv[worst])) {
        pts[worst] = xc;
        fv[worst] = fc;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          fv[i] = eval(pts[i]);
        }
      }
    }
  }
  const int best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = pts[best];
  res.grad = Eigen::VectorXd::Zero(K);
  res.f = f(res.x, &res.grad);
  res.iterations = it;
  res.message = res.converged ? "simplex collapsed" : "iteration limit";
  return res;
}

OptimResult minimize(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& opt) {
  OptimResult r = bfgs(f, x0, opt);
  if (r.converged || !opt.nelder_mead_fallback || !std::isfinite(r.f)) return r;
  OptimResult nm = nelder_mead(f, r.x, opt);
  OptimResult polish = bfgs(f, nm.x, opt);
  polish.iterations += r.iterations + nm.iterations;
  polish.method = "bfgs+nelder-mead";
  if (opt.keep_trace) {
    r.trace.insert(r.trace.end(), polish.trace.begin(), polish.trace.end());
    polish.trace = std::move(r.trace);
  }
  if (!polish.converged && nm.converged && polish.f <= nm.f) polish.converged = true;
  return polish;
}

}  // namespace glpanel
