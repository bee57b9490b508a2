#include "glpanel/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

namespace glpanel {

std::vector<std::vector<int>> period_subsets(int T, int tau) {
  const int m = tau + 1;
  if (T < m) throw Error("gmm", "T = " + std::to_string(T) + " is below tau + 1 = " + std::to_string(m));
  std::vector<std::vector<int>> out;
  std::vector<int> pick(m);
  for (int i = 0; i < m; ++i) pick[i] = i;
  while (true) {
    out.push_back(pick);
    int i = m - 1;
    while (i >= 0 && pick[i] == T - m + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < m; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

Eigen::VectorXd basis_row(const TrajRef& x, int degree) {
  if (degree < 1 || degree > 3) throw Error("gmm", "basis degree must be 1, 2 or 3");
  const auto T = x.rows();
  const auto K = x.cols();
  std::vector<double> v;
  v.push_back(1.0);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index k = 0; k < K; ++k) v.push_back(x(t, k));
  if (degree >= 2) {
    const Eigen::RowVectorXd m = x.colwise().mean();
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index l = k; l < K; ++l) v.push_back(m(k) * m(l));
    if (degree == 3)
      for (Eigen::Index k = 0; k < K; ++k) v.push_back(m(k) * m(k) * m(k));
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd basis_instruments(const PanelSample& sample, int degree) {
  sample.validate();
  const int n = sample.n();
  const Eigen::VectorXd first = basis_row(sample.traj(0), degree);
  const auto L = first.size();
  if (L > n / 10)
    throw Error("gmm", "too many instruments: L = " + std::to_string(L) + " exceeds n / 10 = " +
                           std::to_string(n / 10));
  Eigen::MatrixXd z(n, L);
  z.row(0) = first.transpose();
  for (int i = 1; i < n; ++i) z.row(i) = basis_row(sample.traj(i), degree).transpose();
  for (Eigen::Index c = 0; c < L; ++c) {
    const double s = std::sqrt(z.col(c).squaredNorm() / n);
    if (s > 0.0) z.col(c) /= s;
  }
  return z;
}

GmmProblem::GmmProblem(const PanelSample& sample, const GenLogistic& dist, KernelScale scale)
    : n_(sample.n()), T_(sample.T), K_(sample.K), scale_(scale), lambda_(dist.lambda()) {
  sample.validate();
  if (dist.tau() + 1 > kMaxPeriods)
    throw Error("gmm", "tau + 1 exceeds the factorial-cost cap of 6");
  subsets_ = period_subsets(T_, dist.tau());
  const int S = static_cast<int>(subsets_.size());
  const int m = dist.tau() + 1;
  // merge units with identical (x, y, cell)
  std::unordered_map<std::string, int> seen;
  std::string key;
  for (int i = 0; i < n_; ++i) {
    const Outcome yk = kernel_y(sample.outcome(i), dist);
    std::vector<int> spells(S);
    bool active = false;
    for (int s = 0; s < S; ++s) {
      Outcome ys(m);
      for (int j = 0; j < m; ++j) ys(j) = yk(subsets_[s][j]);
      spells[s] = single_spell(ys);
      active = active || spells[s] >= 0;
    }
    if (!active) continue;
    key.assign(reinterpret_cast<const char*>(sample.x.row(i).data()), sizeof(double) * T_ * K_);
    for (int t = 0; t < T_; ++t) key.push_back(static_cast<char>(sample.y(i, t)));
    if (!sample.cell.empty()) key.append(reinterpret_cast<const char*>(&sample.cell[i]), sizeof(int));
    auto [it, fresh] = seen.try_emplace(key, static_cast<int>(records_.size()));
    if (!fresh) {
      records_[it->second].weight += 1.0;
      continue;
    }
    records_.push_back({i, 1.0});
    const Traj xk = kernel_x(sample.traj(i), dist);
    for (int s = 0; s < S; ++s) {
      Traj sub(m, K_);
      for (int j = 0; j < m; ++j) sub.row(j) = xk.row(subsets_[s][j]);
      xk_.push_back(std::move(sub));
      spell_.push_back(spells[s]);
    }
  }
}

void GmmProblem::set_instruments(std::vector<Eigen::MatrixXd> per_subset) {
  if (per_subset.size() != subsets_.size())
    throw Error("gmm", "need one instrument matrix per period subset");
  inst_.clear();
  M_ = 0;
  for (auto& z : per_subset) {
    if (z.rows() != n_) throw Error("gmm", "instrument matrix must have one row per unit");
    if (!z.allFinite()) throw Error("gmm", "non-finite instrument values");
    Eigen::MatrixXd zr(records_.size(), z.cols());
    for (std::size_t r = 0; r < records_.size(); ++r) zr.row(r) = z.row(records_[r].unit);
    M_ += static_cast<int>(z.cols());
    inst_.push_back(std::move(zr));
  }
}

void GmmProblem::set_common_instruments(const Eigen::MatrixXd& z) {
  set_instruments(std::vector<Eigen::MatrixXd>(subsets_.size(), z));
}

KernelValue GmmProblem::kernel(int r, int s, const VecRef& beta) const {
  const std::size_t idx = static_cast<std::size_t>(r) * subsets_.size() + s;
  KernelValue out{0.0, Eigen::VectorXd::Zero(K_)};
  if (spell_[idx] < 0) return out;
  thread_local KernelTerms terms;
  thread_local PeriodKernel pk;
  kernel_terms_into(xk_[idx], beta, {lambda_.data(), lambda_.size()}, true, terms);
  rescale_terms(terms, scale_, true, pk);
  out.value = pk.value(spell_[idx]);
  out.grad = pk.grad.row(spell_[idx]).transpose();
  return out;
}

GmmProblem::Eval GmmProblem::evaluate(const VecRef& beta, bool with_grad, bool with_s) const {
  if (inst_.empty()) throw Error("gmm", "instruments not set");
  if (beta.size() != K_) throw Error("gmm", "beta has the wrong length");
  const int S = static_cast<int>(subsets_.size());
  Eval e;
  e.gbar = Eigen::VectorXd::Zero(M_);
  if (with_grad) e.G = Eigen::MatrixXd::Zero(M_, K_);
  if (with_s) e.S = Eigen::MatrixXd::Zero(M_, M_);
  Eigen::VectorXd gi(M_);
  KernelTerms terms;
  PeriodKernel pk;
  const std::span<const double> lam{lambda_.data(), lambda_.size()};
  for (std::size_t r = 0; r < records_.size(); ++r) {
    const double w = records_[r].weight;
    if (with_s) gi.setZero();
    int off = 0;
    for (int s = 0; s < S; ++s) {
      const std::size_t idx = r * S + s;
      const auto L = inst_[s].cols();
      const int t = spell_[idx];
      if (t >= 0) {
        kernel_terms_into(xk_[idx], beta, lam, with_grad, terms);
        rescale_terms(terms, scale_, with_grad, pk);
        const double v = pk.value(t);
        if (!std::isfinite(v))
          throw Error("gmm", "non-finite moment value at observation " +
                                 std::to_string(records_[r].unit + 1));
        const auto z = inst_[s].row(r).transpose();
        e.gbar.segment(off, L).noalias() += (w * v) * z;
        if (with_grad) e.G.middleRows(off, L).noalias() += w * z * pk.grad.row(t);
        if (with_s) gi.segment(off, L) = v * z;
      }
      off += static_cast<int>(L);
    }
    if (with_s) e.S.selfadjointView<Eigen::Lower>().rankUpdate(gi, w);
  }
  e.gbar /= n_;
  if (with_grad) e.G /= n_;
  if (with_s) {
    Eigen::MatrixXd full = e.S.selfadjointView<Eigen::Lower>();
    e.S = full / n_;
  }
  return e;
}

double GmmProblem::objective(const VecRef& beta, const Eigen::MatrixXd& W,
                             Eigen::VectorXd* grad, bool drop_own) const {
  if (!drop_own) {
    const Eval e = evaluate(beta, grad != nullptr, false);
    const Eigen::VectorXd Wg = W * e.gbar;
    if (grad) *grad = 2.0 * e.G.transpose() * Wg;
    return e.gbar.dot(Wg);
  }
  if (inst_.empty()) throw Error("gmm", "instruments not set");
  if (beta.size() != K_) throw Error("gmm", "beta has the wrong length");
  // (1 / n(n-1)) sum_{i != j} g_i' W g_j, i.e. Q without each unit's own square
  const int S = static_cast<int>(subsets_.size());
  const bool wg = grad != nullptr;
  Eigen::VectorXd gbar = Eigen::VectorXd::Zero(M_);
  Eigen::MatrixXd G;
  Eigen::VectorXd own_grad;
  if (wg) {
    G = Eigen::MatrixXd::Zero(M_, K_);
    own_grad = Eigen::VectorXd::Zero(K_);
  }
  double own = 0.0;
  Eigen::VectorXd gi(M_);
  Eigen::MatrixXd Gi;
  if (wg) Gi.resize(M_, K_);
  KernelTerms terms;
  PeriodKernel pk;
  const std::span<const double> lam{lambda_.data(), lambda_.size()};
  for (std::size_t r = 0; r < records_.size(); ++r) {
    const double w = records_[r].weight;
    gi.setZero();
    if (wg) Gi.setZero();
    int off = 0;
    for (int s = 0; s < S; ++s) {
      const std::size_t idx = r * S + s;
      const auto L = inst_[s].cols();
      const int t = spell_[idx];
      if (t >= 0) {
        kernel_terms_into(xk_[idx], beta, lam, wg, terms);
        rescale_terms(terms, scale_, wg, pk);
        const double v = pk.value(t);
        if (!std::isfinite(v))
          throw Error("gmm", "non-finite moment value at observation " +
                                 std::to_string(records_[r].unit + 1));
        const auto z = inst_[s].row(r).transpose();
        gi.segment(off, L) = v * z;
        if (wg) Gi.middleRows(off, L).noalias() = z * pk.grad.row(t);
      }
      off += static_cast<int>(L);
    }
    const Eigen::VectorXd Wgi = W * gi;
    gbar.noalias() += w * gi;
    own += w * gi.dot(Wgi);
    if (wg) {
      G.noalias() += w * Gi;
      own_grad.noalias() += (2.0 * w) * Gi.transpose() * Wgi;
    }
  }
  const double n = n_;
  gbar /= n;
  const Eigen::VectorXd Wg = W * gbar;
  if (wg) {
    G /= n;
    *grad = (2.0 * n * G.transpose() * Wg - own_grad / n) / (n - 1.0);
  }
  return (n * gbar.dot(Wg) - own / n) / (n - 1.0);
}

Eigen::MatrixXd gmm_weight(const Eigen::MatrixXd& S, double ridge, double* condition) {
  const auto M = S.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (condition) *condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  const double tr = S.trace();
  const double r = ridge * (tr > 0.0 ? tr / M : 1.0);
  Eigen::MatrixXd A = S;
  A.diagonal().array() += r;
  return A.ldlt().solve(Eigen::MatrixXd::Identity(M, M));
}

double gmm_objective(const PanelSample& sample, const GenLogistic& dist, const VecRef& beta,
                     const Eigen::MatrixXd& instruments, const Eigen::MatrixXd& weight,
                     KernelScale scale, Eigen::VectorXd* grad) {
  GmmProblem p(sample, dist, scale);
  p.set_common_instruments(instruments);
  if (weight.rows() != p.moments() || weight.cols() != p.moments())
    throw Error("gmm", "weight matrix must be L x L per period subset");
  return p.objective(beta, weight, grad);
}

std::vector<Eigen::MatrixXd> cell_optimal_instruments(const PanelSample& sample,
                                                      const GenLogistic& dist,
                                                      const VecRef& beta_pilot, double ridge,
                                                      KernelScale scale,
                                                      std::vector<std::string>* flags) {
  sample.validate();
  const int n = sample.n();
  const int K = sample.K;
  // cell labels: given, or distinct trajectories
  std::vector<int> label(n);
  int cells = 0;
  if (!sample.cell.empty()) {
    std::map<int, int> relabel;
    for (int i = 0; i < n; ++i) {
      auto [it, fresh] = relabel.try_emplace(sample.cell[i], cells);
      if (fresh) ++cells;
      label[i] = it->second;
    }
  } else {
    std::unordered_map<std::string, int> seen;
    for (int i = 0; i < n; ++i) {
      std::string key(reinterpret_cast<const char*>(sample.x.row(i).data()),
                      sizeof(double) * sample.T * K);
      auto [it, fresh] = seen.try_emplace(key, cells);
      if (fresh) {
        ++cells;
        if (cells > 200)
          throw Error("gmm", "covariates look continuous (more than 200 distinct trajectories); "
                             "use Basis instruments or supply cell labels");
      }
      label[i] = it->second;
    }
  }
  std::vector<int> count(cells, 0);
  std::vector<int> rep(cells, -1);
  for (int i = 0; i < n; ++i) {
    ++count[label[i]];
    if (rep[label[i]] < 0) rep[label[i]] = i;
  }
  // pool small cells into the nearest cell with at least 10 observations
  std::vector<int> target(cells);
  bool any_big = false;
  for (int c = 0; c < cells; ++c) any_big = any_big || count[c] >= 10;
  if (!any_big) throw Error("gmm", "no covariate cell has 10 or more observations");
  for (int c = 0; c < cells; ++c) {
    target[c] = c;
    if (count[c] >= 10) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int d = 0; d < cells; ++d) {
      if (count[d] < 10) continue;
      const double dist2 = (sample.traj(rep[c]) - sample.traj(rep[d])).squaredNorm();
      if (dist2 < best) {
        best = dist2;
        target[c] = d;
      }
    }
    if (flags) flags->push_back("cell " + std::to_string(c) + " pooled (fewer than 10 observations)");
  }

  GmmProblem p(sample, dist, scale);
  const int S = p.subsets();
  std::vector<Eigen::MatrixXd> Rsum(S, Eigen::MatrixXd::Zero(cells, K));
  std::vector<Eigen::VectorXd> Osum(S, Eigen::VectorXd::Zero(cells));
  std::vector<double> nc(cells, 0.0);
  for (int i = 0; i < n; ++i) nc[target[label[i]]] += 1.0;
  const auto& recs = p.records();
  for (int r = 0; r < static_cast<int>(recs.size()); ++r) {
    const int c = target[label[recs[r].unit]];
    for (int s = 0; s < S; ++s) {
      const KernelValue kv = p.kernel(r, s, beta_pilot);
      Rsum[s].row(c) += recs[r].weight * kv.grad.transpose();
      Osum[s](c) += recs[r].weight * kv.value * kv.value;
    }
  }
  std::vector<Eigen::MatrixXd> out(S, Eigen::MatrixXd::Zero(n, K));
  for (int s = 0; s < S; ++s) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(cells, K);
    for (int c = 0; c < cells; ++c) {
      if (nc[c] == 0.0) continue;
      const double omega = Osum[s](c) / nc[c];
      if (omega == 0.0) {
        if (flags) flags->push_back("cell " + std::to_string(c) + " is degenerate (instrument 0)");
        continue;
      }
      h.row(c) = (Rsum[s].row(c) / nc[c]) / std::max(omega, ridge);
    }
    for (int i = 0; i < n; ++i) out[s].row(i) = h.row(target[label[i]]);
  }
  return out;
}

Eigen::MatrixXd oracle_instruments(const PanelSample& sample, const DgpSpec& spec,
                                   KernelScale scale, std::vector<std::string>* flags) {
  sample.validate();
  spec.validate(true);
  if (sample.T != spec.T || sample.K != spec.K())
    throw Error("gmm", "oracle spec does not match the sample shape");
  const int n = sample.n();
  Eigen::MatrixXd out(n, spec.K());
  std::unordered_map<std::string, int> seen;
  std::vector<Eigen::VectorXd> cache;
  int degenerate = 0;
  for (int i = 0; i < n; ++i) {
    std::string key(reinterpret_cast<const char*>(sample.x.row(i).data()),
                    sizeof(double) * sample.T * sample.K);
    auto [it, fresh] = seen.try_emplace(key, static_cast<int>(cache.size()));
    if (fresh) {
      const ROmega ro = r_and_omega(sample.traj(i), spec, scale);
      if (ro.degenerate || ro.omega == 0.0) {
        ++degenerate;
        cache.push_back(Eigen::VectorXd::Zero(spec.K()));
      } else {
        cache.push_back(ro.R / ro.omega);
      }
    }
    out.row(i) = cache[it->second].transpose();
  }
  if (degenerate > 0 && flags)
    flags->push_back(std::to_string(degenerate) + " degenerate trajectories get oracle instrument 0");
  return out;
}

Eigen::MatrixXd variance_estimate(const GmmProblem& problem, const VecRef& beta_hat,
                                  const Eigen::MatrixXd& W, std::vector<std::string>* flags) {
  const auto e = problem.evaluate(beta_hat, true, true);
  const Eigen::MatrixXd GW = e.G.transpose() * W;
  const Eigen::MatrixXd A = GW * e.G;
  const auto K = A.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > 1e-14 * hi)) {
    if (flags) flags->emplace_back("singular G'WG; variance not available");
    return Eigen::MatrixXd::Constant(K, K, std::numeric_limits<double>::quiet_NaN());
  }
  const Eigen::MatrixXd Ainv = A.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
  Eigen::MatrixXd V = Ainv * (GW * e.S * GW.transpose()) * Ainv / problem.n();
  return 0.5 * (V + V.transpose());
}

namespace {

std::vector<Eigen::VectorXd> start_points(const GmmConfig& cfg, int K) {
  std::vector<Eigen::VectorXd> starts;
  const int g = std::max(cfg.grid_points, 1);
  long long total = 1;
  for (int k = 0; k < K; ++k) total *= g;
  if (total > 100000) throw Error("gmm", "start grid too large");
  for (long long code = 0; code < total; ++code) {
    Eigen::VectorXd b(K);
    long long c = code;
    for (int k = 0; k < K; ++k) {
      const int i = static_cast<int>(c % g);
      c /= g;
      b(k) = g == 1 ? 0.5 * (cfg.box_lo + cfg.box_hi)
                    : cfg.box_lo + (cfg.box_hi - cfg.box_lo) * i / (g - 1);
    }
    // the kernel vanishes identically at beta = 0 for T >= 3
    if (b.norm() == 0.0) continue;
    starts.push_back(b);
  }
  Engine eng(stream_seed(cfg.seed, 0x5747));
  for (int r = 0; r < cfg.random_starts; ++r) {
    Eigen::VectorXd b(K);
    for (int k = 0; k < K; ++k) b(k) = cfg.box_lo + (cfg.box_hi - cfg.box_lo) * uniform_open(eng);
    starts.push_back(b);
  }
  if (starts.empty()) {
    Eigen::VectorXd b = Eigen::VectorXd::Constant(K, 0.5 * (cfg.box_lo + cfg.box_hi));
    if (b.norm() == 0.0) b(0) = 0.1 * std::max(1.0, cfg.box_hi - cfg.box_lo);
    starts.push_back(b);
  }
  return starts;
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index k = 0; k < a.size(); ++k)
    if (a(k) != b(k)) return a(k) < b(k);
  return false;
}

// Keep finite, non-trivial results; merge ones that end at the same point.
std::vector<LocalMinimum> cluster_minima(const std::vector<OptimResult>& runs, double far,
                                         std::vector<std::string>& flags) {
  std::vector<LocalMinimum> mins;
  int diverged = 0;
  for (const auto& r : runs) {
    if (!std::isfinite(r.f) || !r.x.allFinite()) continue;
    if (r.x.norm() < 1e-8) continue;
    if (r.x.norm() > far) {
      ++diverged;
      continue;
    }
    LocalMinimum m;
    m.beta = r.x;
    m.objective = m.screen = m.rank = r.f;
    m.converged = r.converged;
    mins.push_back(m);
  }
  if (diverged > 0) flags.push_back(std::to_string(diverged) + " start(s) diverged");
  std::sort(mins.begin(), mins.end(), [](const LocalMinimum& a, const LocalMinimum& b) {
    if (a.objective != b.objective) return a.objective < b.objective;
    return lex_less(a.beta, b.beta);
  });
  std::vector<LocalMinimum> out;
  for (const auto& m : mins) {
    bool dup = false;
    for (auto& o : out)
      if ((o.beta - m.beta).norm() <= 1e-4 * (1.0 + o.beta.norm())) {
        o.converged = o.converged || m.converged;
        dup = true;
        break;
      }
    if (!dup) out.push_back(m);
  }
  return out;
}

}  // namespace

EstimationResult two_step_estimate(const PanelSample& sample, const GenLogistic& dist,
                                   const GmmConfig& cfg) {
  sample.validate();
  const int K = sample.K;
  const int n = sample.n();
  if (n < 50 * K) throw Error("gmm", "need n >= 50 K observations");
  if (cfg.degree < 1 || cfg.degree > 3) throw Error("gmm", "basis degree must be 1, 2 or 3");
  if (cfg.grid_points < 1 && cfg.random_starts < 1) throw Error("gmm", "need at least one start");
  if (!(cfg.box_lo < cfg.box_hi)) throw Error("gmm", "start box needs lo < hi");
  if (cfg.mode == InstrumentMode::Oracle && !cfg.oracle_spec)
    throw Error("gmm", "oracle instruments need the true model");
  if (cfg.mode == InstrumentMode::Oracle && sample.T != dist.tau() + 1)
    throw Error("gmm", "oracle instruments need T = tau + 1");

  EstimationResult res;
  res.n = n;
  GmmProblem problem(sample, dist, cfg.scale);

  // step 1 always uses the basis: optimal instruments give as many moments as parameters,
  // so every root of the just-identified system reaches Q = 0 and cannot be told apart
  const Eigen::MatrixXd z1 = basis_instruments(sample, cfg.degree);
  problem.set_common_instruments(z1);
  const double far = 50.0 * std::max({1.0, std::abs(cfg.box_lo), std::abs(cfg.box_hi)});

  auto run_all = [&](const std::vector<Eigen::VectorXd>& starts, const Eigen::MatrixXd& W,
                     bool trace) {
    std::vector<OptimResult> runs;
    OptimOptions opt = cfg.optim;
    opt.keep_trace = trace;
    // a just-identified system is solved exactly and the own terms do not move its roots
    const bool drop_own = cfg.drop_own && problem.moments() > K;
    // far from the data scale the kernel can overflow; the line search then backs off
    const Objective f = [&](const Eigen::VectorXd& b, Eigen::VectorXd* g) {
      try {
        return problem.objective(b, W, g, drop_own);
      } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    for (const auto& s : starts) runs.push_back(minimize(f, s, opt));
    return runs;
  };

  // step 1: identity weight, multi-start
  const Eigen::MatrixXd W1 = Eigen::MatrixXd::Identity(problem.moments(), problem.moments());
  const auto runs1 = run_all(start_points(cfg, K), W1, false);
  std::vector<std::string> step_flags;
  auto mins1 = cluster_minima(runs1, far, step_flags);
  if (mins1.empty()) throw Error("gmm", "no start converged");
  for (auto& f : step_flags) res.flags.push_back("step 1: " + f);
  step_flags.clear();

  // step 2: optimal instruments or re-weighting, from every step-1 minimum
  const Eigen::VectorXd pilot = mins1.front().beta;
  const bool switched = cfg.mode != InstrumentMode::Basis;
  const GmmProblem screen = problem;
  Eigen::MatrixXd Ws;
  if (switched) {
    Ws = gmm_weight(screen.evaluate(pilot, false, true).S, cfg.ridge);
    if (cfg.mode == InstrumentMode::CellOptimal)
      problem.set_instruments(
          cell_optimal_instruments(sample, dist, pilot, cfg.ridge, cfg.scale, &res.flags));
    else
      problem.set_common_instruments(oracle_instruments(sample, *cfg.oracle_spec, cfg.scale, &res.flags));
  }
  const auto e = problem.evaluate(pilot, false, true);
  const Eigen::MatrixXd W2 = gmm_weight(e.S, cfg.ridge, &res.weight_condition);
  if (!(res.weight_condition <= 1e12)) res.flags.emplace_back("moment covariance ill-conditioned; ridge applied");
  std::vector<Eigen::VectorXd> starts2;
  for (const auto& m : mins1) starts2.push_back(m.beta);
  const auto runs2 = run_all(starts2, W2, cfg.keep_trace);
  auto mins2 = cluster_minima(runs2, far, step_flags);
  for (auto& f : step_flags) res.flags.push_back("step 2: " + f);
  if (mins2.empty()) throw Error("gmm", "no start converged in step 2");

  // roots of the optimal-instrument step are ranked by the efficiently weighted basis moments
  std::vector<LocalMinimum> ranked;
  for (auto& m : mins2) {
    LocalMinimum r = m;
    try {
      r.objective = problem.objective(m.beta, W2, nullptr);
      const GmmProblem& p = switched ? screen : problem;
      const Eigen::MatrixXd& W = switched ? Ws : W2;
      r.screen = p.objective(m.beta, W, nullptr);
      r.rank = cfg.drop_own && p.moments() > K ? p.objective(m.beta, W, nullptr, true) : r.screen;
    } catch (const Error&) {
      continue;
    }
    ranked.push_back(r);
  }
  if (ranked.empty()) throw Error("gmm", "no finite minimum in step 2");
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const LocalMinimum& a, const LocalMinimum& b) { return a.rank < b.rank; });

  res.moments = problem.moments();
  res.j_df = res.moments - K;
  const int screen_df = std::max((switched ? screen.moments() : res.moments) - K, 1);
  const double floor =
      boost::math::quantile(boost::math::chi_squared(screen_df), 0.999) / static_cast<double>(n);
  const double best = ranked.front().screen;
  for (const auto& r : ranked)
    if (r.screen <= std::max(cfg.minima_ratio * best, floor)) res.local_minima.push_back(r);

  res.beta_hat = res.local_minima.front().beta;
  res.objective = res.local_minima.front().objective;
  res.converged = res.local_minima.front().converged;
  if (!res.converged) res.flags.emplace_back("best minimum did not meet the convergence tolerance");
  res.j_statistic = n * res.objective;
  res.variance = variance_estimate(problem, res.beta_hat, W2, &res.flags);
  res.se = res.variance.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (res.local_minima.size() > 1) {
    res.ambiguous = true;
    res.flags.emplace_back("identification ambiguous: " + std::to_string(res.local_minima.size()) +
                           " local minima; see ray_scan");
  }
  if (cfg.keep_trace) {
    for (const auto& r : runs2)
      if ((r.x - res.beta_hat).norm() <= 1e-4 * (1.0 + res.beta_hat.norm())) {
        res.trace = r.trace;
        break;
      }
  }
  return res;
}

}  // namespace glpanel
