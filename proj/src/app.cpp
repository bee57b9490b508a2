#include "glpanel/app.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "glpanel/ident.hpp"
#include "glpanel/panel_io.hpp"

namespace glpanel {

using nlohmann::json;

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out);
  return std::filesystem::path(cfg.out) / name;
}

void write_json(const RunConfig& cfg, const std::string& name, const json& j, std::ostream& log) {
  const auto p = out_path(cfg, name);
  std::ofstream os(p);
  if (!os) throw Error("io", "cannot open " + p.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw Error("io", "write to " + p.string() + " failed");
  log << "wrote " << p.string() << '\n';
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json result_json(const EstimationResult& r) {
  json j;
  j["beta_hat"] = to_json(r.beta_hat);
  j["se"] = to_json(r.se);
  j["vcov"] = to_json(r.variance);
  json mins = json::array();
  for (const auto& m : r.local_minima)
    mins.push_back({{"beta", to_json(m.beta)}, {"objective", m.objective},
                    {"screen", m.screen}, {"rank", m.rank}, {"converged", m.converged}});
  j["local_minima"] = mins;
  j["objective"] = r.objective;
  j["j_stat"] = r.j_statistic;
  j["j_df"] = r.j_df;
  j["moments"] = r.moments;
  j["n"] = r.n;
  j["converged"] = r.converged;
  j["ambiguous"] = r.ambiguous;
  j["instrument_condition"] = std::isfinite(r.instrument_condition) ? json(r.instrument_condition) : json(nullptr);
  j["weight_condition"] = std::isfinite(r.weight_condition) ? json(r.weight_condition) : json(nullptr);
  j["flags"] = r.flags;
  return j;
}

void write_trace(const RunConfig& cfg, const EstimationResult& r, std::ostream& log) {
  const auto p = out_path(cfg, "trace.csv");
  std::ofstream os(p);
  if (!os) throw Error("io", "cannot open " + p.string() + " for writing");
  os << "iter,objective,grad_norm";
  for (Eigen::Index k = 0; k < r.beta_hat.size(); ++k) os << ",beta" << k + 1;
  os << '\n';
  for (const auto& s : r.trace) {
    os << s.iter << ',' << fmt(s.f) << ',' << fmt(s.grad_norm);
    for (Eigen::Index k = 0; k < s.x.size(); ++k) os << ',' << fmt(s.x(k));
    os << '\n';
  }
  log << "wrote " << p.string() << '\n';
}

GmmConfig gmm_for(const RunConfig& cfg) {
  GmmConfig g = *cfg.gmm;
  g.seed = cfg.seed;
  if (g.mode == InstrumentMode::Oracle) g.oracle_spec = cfg.spec;
  return g;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  for (int r = 0; r < cfg.replications; ++r) {
    const PanelSample s = simulate_panel(*cfg.spec, cfg.n, stream_seed(cfg.seed, r));
    char name[32];
    if (cfg.replications == 1) {
      std::snprintf(name, sizeof name, "sample.csv");
    } else {
      std::snprintf(name, sizeof name, "sample_%04d.csv", r + 1);
    }
    const auto p = out_path(cfg, name);
    write_panel_csv(s, p.string());
    log << "wrote " << p.string() << '\n';
  }
  return 0;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& log) {
  const GmmConfig g = gmm_for(cfg);
  const GenLogistic& dist = cfg.distribution();
  if (!cfg.input.empty()) {
    const PanelSample s = read_panel_csv(cfg.input);
    const EstimationResult r = two_step_estimate(s, dist, g);
    write_json(cfg, "result.json", result_json(r), log);
    if (g.keep_trace) write_trace(cfg, r, log);
    return r.ambiguous ? 2 : 0;
  }

  // Monte Carlo: replication r simulates from stream (seed, r)
  const DgpSpec& spec = *cfg.spec;
  const int R = cfg.replications;
  std::vector<EstimationResult> res(R);
  std::vector<std::string> err(R);
  parallel_for(R, cfg.threads, [&](int r) {
    try {
      const PanelSample s = simulate_panel(spec, cfg.n, stream_seed(cfg.seed, r));
      GmmConfig gr = g;
      gr.seed = stream_seed(cfg.seed, r);
      res[r] = two_step_estimate(s, dist, gr);
    } catch (const std::exception& e) {
      err[r] = e.what();
    }
  });
  const int K = spec.K();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(K), sum2 = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd se_sum = Eigen::VectorXd::Zero(K), cover = Eigen::VectorXd::Zero(K);
  int ok = 0;
  int ambiguous = 0;
  json reps = json::array();
  for (int r = 0; r < R; ++r) {
    json jr;
    jr["replication"] = r + 1;
    if (!err[r].empty()) {
      jr["error"] = err[r];
      reps.push_back(jr);
      continue;
    }
    const auto& e = res[r];
    jr["beta_hat"] = to_json(e.beta_hat);
    jr["se"] = to_json(e.se);
    jr["j_stat"] = e.j_statistic;
    jr["local_minima"] = static_cast<int>(e.local_minima.size());
    jr["ambiguous"] = e.ambiguous;
    reps.push_back(jr);
    ambiguous += e.ambiguous;
    ++ok;
    const Eigen::VectorXd d = e.beta_hat - spec.beta0;
    sum += e.beta_hat;
    sum2 += d.cwiseAbs2();
    se_sum += e.se;
    for (int k = 0; k < K; ++k) cover(k) += std::abs(d(k)) <= 1.959963984540054 * e.se(k);
  }
  json j;
  j["replications"] = R;
  j["n"] = cfg.n;
  j["beta0"] = to_json(spec.beta0);
  j["succeeded"] = ok;
  j["ambiguous"] = ambiguous;
  if (ok > 0) {
    const Eigen::VectorXd mean = sum / ok;
    Eigen::VectorXd sd = Eigen::VectorXd::Zero(K);
    for (int r = 0; r < R; ++r)
      if (err[r].empty()) sd += (res[r].beta_hat - mean).cwiseAbs2();
    sd = (sd / std::max(1, ok - 1)).cwiseSqrt();
    j["summary"] = {{"mean", to_json(mean)},
                    {"bias", to_json(Eigen::VectorXd(mean - spec.beta0))},
                    {"sd", to_json(sd)},
                    {"rmse", to_json(Eigen::VectorXd((sum2 / ok).cwiseSqrt()))},
                    {"mean_se", to_json(Eigen::VectorXd(se_sum / ok))},
                    {"coverage95", to_json(Eigen::VectorXd(cover / ok))}};
  }
  j["results"] = reps;
  write_json(cfg, "result.json", j, log);
  if (ok == 0) throw Error("gmm", "every replication failed: " + err.front());
  return ambiguous > 0 ? 2 : 0;
}

json degenerate_json(const DegenerateReport& d) {
  return {{"units", d.units},
          {"degenerate_units", d.degenerate_units},
          {"prob_distinct", d.prob_distinct},
          {"no_identification_power", d.no_identification_power},
          {"max_rel_moment", d.max_rel_moment},
          {"moment_zero", d.moment_zero},
          {"flags", d.flags}};
}

int cmd_identify(const RunConfig& cfg, std::ostream& log) {
  json j;
  if (!cfg.spec) {
    const PanelSample s = read_panel_csv(cfg.input);
    j["degenerate"] = degenerate_json(degenerate_check(s, cfg.distribution(), stream_seed(cfg.seed, 0)));
    const SupportReport sr = check_support_assumptions(s);
    j["support"] = {{"distinct_freq", sr.distinct_freq},
                    {"overlap_freq", sr.overlap_freq},
                    {"bandwidth", sr.bandwidth},
                    {"notes", sr.notes}};
    write_json(cfg, "report.json", j, log);
    return 0;
  }
  const DgpSpec& spec = *cfg.spec;
  const double lmax = spec.dist.lambda_max();
  const double lo = cfg.identify.c_lo.value_or(1.0 / lmax - 0.2);
  const double hi = cfg.identify.c_hi.value_or(lmax + 0.2);
  const auto probes = default_probes(spec, cfg.identify.probes, stream_seed(cfg.seed, 1));
  const RayScanReport rs = ray_scan(spec, probes, lo, hi, cfg.identify.grid);
  j["c_interval"] = {lo, hi};
  j["roots"] = rs.roots;
  j["roots_inside"] = rs.roots_inside;
  j["roots_outside"] = rs.roots_outside;
  j["per_x_roots"] = rs.per_x_roots;
  j["certified_max_roots"] = rs.certified_max_roots;
  j["flags"] = rs.flags;

  std::vector<Eigen::VectorXd> cands = cfg.identify.candidates;
  cands.insert(cands.begin(), spec.beta0);
  const auto verdicts = rejection_scan(cands, spec, probes);
  json v = json::array();
  for (const auto& r : verdicts)
    v.push_back({{"b", to_json(r.b)},
                 {"verdict", r.rejected ? "rejected" : "not_rejected"},
                 {"witness_probe", r.witness},
                 {"near_tie", r.near_tie}});
  j["verdicts"] = v;
  j["degenerate"] = degenerate_json(degenerate_check(spec, stream_seed(cfg.seed, 2)));

  // (c, objective) curve: probe-weighted squared conditional moments along the ray
  std::vector<double> weight(probes.size(), 1.0 / probes.size());
  if (spec.xlaw.kind == XLaw::Kind::FiniteSupport) {
    std::size_t i = 0;
    for (const auto& sp : spec.xlaw.support)
      if (sp.prob > 0.0) weight[i++] = sp.prob;
  }
  const int P = cfg.identify.scan_points;
  std::vector<double> curve(P);
  parallel_for(P, cfg.threads, [&](int k) {
    const double c = lo + (hi - lo) * k / (P - 1);
    double q = 0.0;
    const Eigen::VectorXd b = c * spec.beta0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const CondMoment cm = cond_moment(probes[i], spec, b, KernelScale::Normalized);
      q += weight[i] * cm.value * cm.value;
    }
    curve[k] = q;
  });
  const auto p = out_path(cfg, "scan.csv");
  std::ofstream os(p);
  os << "c,objective\n";
  for (int k = 0; k < P; ++k) os << fmt(lo + (hi - lo) * k / (P - 1)) << ',' << fmt(curve[k]) << '\n';
  if (!os) throw Error("io", "write to " + p.string() + " failed");
  log << "wrote " << p.string() << '\n';
  write_json(cfg, "report.json", j, log);
  return 0;
}

int cmd_bound(const RunConfig& cfg, std::ostream& log) {
  const EfficiencyBound b = efficiency_bound(*cfg.spec);
  json j;
  j["V0"] = to_json(b.V0);
  j["information"] = to_json(b.information);
  j["condition"] = b.condition;
  j["degenerate_cells"] = b.degenerate_cells;
  j["se_times_sqrt_n"] = to_json(Eigen::VectorXd(b.V0.diagonal().cwiseSqrt()));
  write_json(cfg, "report.json", j, log);
  return 0;
}

int cmd_test_zero(const RunConfig& cfg, std::ostream& log) {
  const PanelSample s = read_panel_csv(cfg.input);
  const BetaZeroTest t = test_beta_zero(s, cfg.test_zero.t, cfg.test_zero.t_prime, cfg.test_zero.bins);
  json j;
  j["statistic"] = t.statistic;
  j["p_value"] = t.p_value;
  j["df"] = t.df;
  j["cells"] = t.cells;
  j["bins"] = t.bins;
  j["switchers"] = t.switchers;
  j["rank_check"] = {{"ok", t.rank_ok}, {"min_eigenvalue", t.min_eig}, {"max_eigenvalue", t.max_eig}};
  j["verdicts"] = {{"reject_at_5pct", t.p_value < 0.05}};
  write_json(cfg, "report.json", j, log);
  return 0;
}

int cmd_moment(const RunConfig& cfg, std::ostream& log) {
  json out = json::array();
  if (cfg.spec) {
    const DgpSpec& spec = *cfg.spec;
    const auto probes = default_probes(spec, 25, stream_seed(cfg.seed, 1));
    for (const auto& b : cfg.moment.b) {
      json per = json::array();
      double worst = 0.0;
      for (std::size_t i = 0; i < probes.size(); ++i) {
        const CondMoment cm = cond_moment(probes[i], spec, b, KernelScale::Stabilized);
        const double rel = cm.abs_mass > 0.0 ? std::abs(cm.value) / cm.abs_mass : 0.0;
        worst = std::max(worst, rel);
        per.push_back({{"probe", static_cast<int>(i)},
                       {"value", cm.value},
                       {"abs_mass", cm.abs_mass},
                       {"relative", rel},
                       {"converged", cm.converged}});
      }
      out.push_back({{"b", to_json(b)}, {"per_x", per}, {"max_relative", worst}});
    }
  } else {
    const PanelSample s = read_panel_csv(cfg.input);
    const GenLogistic& dist = cfg.distribution();
    if (s.T != dist.tau() + 1) throw Error("config", "the moment subcommand needs T = tau + 1");
    GmmProblem p(s, dist, KernelScale::Normalized);
    p.set_common_instruments(basis_instruments(s, cfg.moment.degree));
    for (const auto& b : cfg.moment.b) {
      if (b.size() != s.K) throw Error("config", "moment.b entries must have length K");
      const auto e = p.evaluate(b, false, true);
      Eigen::VectorXd se(e.gbar.size());
      for (Eigen::Index l = 0; l < se.size(); ++l)
        se(l) = std::sqrt(std::max(0.0, e.S(l, l) - e.gbar(l) * e.gbar(l)) / s.n());
      out.push_back({{"b", to_json(b)}, {"mean", to_json(e.gbar)}, {"se", to_json(se)}});
    }
  }
  write_json(cfg, "report.json", json{{"moments", out}}, log);
  return 0;
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& log) {
  try {
    validate_config(cfg);
    switch (cfg.command) {
      case Command::Simulate: return cmd_simulate(cfg, log);
      case Command::Estimate: return cmd_estimate(cfg, log);
      case Command::Identify: return cmd_identify(cfg, log);
      case Command::Bound: return cmd_bound(cfg, log);
      case Command::TestZero: return cmd_test_zero(cfg, log);
      case Command::Moment: return cmd_moment(cfg, log);
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace glpanel
