#include "glpanel/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace glpanel {

using nlohmann::json;

Command parse_command(const std::string& name) {
  if (name == "simulate") return Command::Simulate;
  if (name == "estimate") return Command::Estimate;
  if (name == "identify") return Command::Identify;
  if (name == "bound") return Command::Bound;
  if (name == "test-zero") return Command::TestZero;
  if (name == "moment") return Command::Moment;
  throw Error("config", "unknown subcommand '" + name + "'");
}

std::string command_name(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Estimate: return "estimate";
    case Command::Identify: return "identify";
    case Command::Bound: return "bound";
    case Command::TestZero: return "test-zero";
    case Command::Moment: return "moment";
  }
  return "?";
}

const GenLogistic& RunConfig::distribution() const {
  if (spec) return spec->dist;
  if (dist) return *dist;
  throw Error("config", "no shock distribution: give `dist` or `spec`");
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error("config", where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error("config", "unknown key '" + k + "' in " + where);
}

const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw Error("config", "missing required key '" + key + "' in " + where);
  return j.at(key);
}

double num(const json& j, const std::string& what) {
  if (!j.is_number()) throw Error("config", what + " must be a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw Error("config", what + " must be an integer");
  return j.get<int>();
}

bool boolean(const json& j, const std::string& what) {
  if (!j.is_boolean()) throw Error("config", what + " must be true or false");
  return j.get<bool>();
}

std::string text(const json& j, const std::string& what) {
  if (!j.is_string()) throw Error("config", what + " must be a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error("config", what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(num(v, what + " entry"));
  return out;
}

Eigen::VectorXd vec(const json& j, const std::string& what) {
  const auto v = numbers(j, what);
  if (v.empty()) throw Error("config", what + " must not be empty");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Traj matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw Error("config", what + " must be a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) rows.push_back(numbers(r, what + " row"));
  const auto K = rows.front().size();
  Traj x(rows.size(), K);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != K || K == 0) throw Error("config", what + " rows must have equal, nonzero length");
    for (std::size_t k = 0; k < K; ++k) x(t, k) = rows[t][k];
  }
  return x;
}

GenLogistic parse_dist(const json& j) {
  check_keys(j, {"type", "lambda", "w"}, "dist");
  const std::string type = text(need(j, "type", "dist"), "dist.type");
  FamilyType ft;
  if (type == "first") {
    ft = FamilyType::First;
  } else if (type == "second") {
    ft = FamilyType::Second;
  } else {
    throw Error("config", "dist.type must be \"first\" or \"second\"");
  }
  try {
    return GenLogistic(ft, numbers(need(j, "lambda", "dist"), "dist.lambda"),
                       numbers(need(j, "w", "dist"), "dist.w"));
  } catch (const Error& e) {
    throw Error("config", e.what());
  }
}

std::vector<GammaPoint> parse_points(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw Error("config", what + " must be a non-empty array");
  std::vector<GammaPoint> out;
  for (const auto& p : j) {
    check_keys(p, {"value", "prob"}, what + " entry");
    out.push_back({num(need(p, "value", what), what + ".value"), num(need(p, "prob", what), what + ".prob")});
  }
  return out;
}

GammaLaw parse_gamma(const json& j) {
  check_keys(j, {"kind", "value", "points", "cells", "intercept", "slope", "covariate", "sd"}, "gamma");
  const std::string kind = text(need(j, "kind", "gamma"), "gamma.kind");
  auto only = [&](const std::set<std::string>& keys) { check_keys(j, keys, "gamma (" + kind + ")"); };
  if (kind == "dirac") {
    only({"kind", "value"});
    return GammaLaw::dirac(num(need(j, "value", "gamma"), "gamma.value"));
  }
  if (kind == "discrete") {
    only({"kind", "points"});
    return GammaLaw::discrete(parse_points(need(j, "points", "gamma"), "gamma.points"));
  }
  if (kind == "discrete_per_cell") {
    only({"kind", "cells"});
    const json& cells = need(j, "cells", "gamma");
    if (!cells.is_array()) throw Error("config", "gamma.cells must be an array");
    std::vector<std::vector<GammaPoint>> out;
    for (const auto& c : cells) out.push_back(parse_points(c, "gamma.cells entry"));
    return GammaLaw::discrete_per_cell(std::move(out));
  }
  if (kind == "gaussian") {
    only({"kind", "intercept", "slope", "covariate", "sd"});
    const double a = j.contains("intercept") ? num(j.at("intercept"), "gamma.intercept") : 0.0;
    const double b = j.contains("slope") ? num(j.at("slope"), "gamma.slope") : 0.0;
    const int k = j.contains("covariate") ? integer(j.at("covariate"), "gamma.covariate") : 1;
    const double sd = j.contains("sd") ? num(j.at("sd"), "gamma.sd") : 1.0;
    return GammaLaw::gaussian(a, b, k - 1, sd);
  }
  throw Error("config", "gamma.kind must be dirac, discrete, discrete_per_cell or gaussian");
}

XLaw parse_xlaw(const json& j) {
  check_keys(j, {"kind", "support", "lo", "hi", "mean", "sd"}, "x");
  const std::string kind = text(need(j, "kind", "x"), "x.kind");
  if (kind == "finite") {
    check_keys(j, {"kind", "support"}, "x (finite)");
    const json& sup = need(j, "support", "x");
    if (!sup.is_array() || sup.empty()) throw Error("config", "x.support must be a non-empty array");
    std::vector<SupportPoint> pts;
    for (const auto& s : sup) {
      check_keys(s, {"x", "prob"}, "x.support entry");
      pts.push_back({matrix(need(s, "x", "x.support entry"), "x.support.x"),
                     num(need(s, "prob", "x.support entry"), "x.support.prob")});
    }
    return XLaw::finite(std::move(pts));
  }
  if (kind == "uniform") {
    check_keys(j, {"kind", "lo", "hi"}, "x (uniform)");
    return XLaw::uniform(num(need(j, "lo", "x"), "x.lo"), num(need(j, "hi", "x"), "x.hi"));
  }
  if (kind == "gaussian") {
    check_keys(j, {"kind", "mean", "sd"}, "x (gaussian)");
    const double m = j.contains("mean") ? num(j.at("mean"), "x.mean") : 0.0;
    const double sd = j.contains("sd") ? num(j.at("sd"), "x.sd") : 1.0;
    return XLaw::gaussian(m, sd);
  }
  throw Error("config", "x.kind must be finite, uniform or gaussian");
}

DgpSpec parse_spec(const json& j) {
  check_keys(j, {"beta0", "T", "dist", "gamma", "x"}, "spec");
  DgpSpec spec;
  spec.beta0 = vec(need(j, "beta0", "spec"), "spec.beta0");
  spec.T = integer(need(j, "T", "spec"), "spec.T");
  if (j.contains("dist")) spec.dist = parse_dist(j.at("dist"));
  if (j.contains("gamma")) spec.gamma = parse_gamma(j.at("gamma"));
  spec.xlaw = parse_xlaw(need(j, "x", "spec"));
  try {
    spec.validate(false);
  } catch (const Error& e) {
    throw Error("config", e.what());
  }
  return spec;
}

GmmConfig parse_gmm(const json& j) {
  check_keys(j, {"instruments", "degree", "grid_points", "box", "random_starts", "grad_tol", "step_tol",
                 "max_iter", "ridge", "minima_ratio", "scale", "trace"},
             "gmm");
  GmmConfig g;
  if (j.contains("instruments")) {
    const std::string m = text(j.at("instruments"), "gmm.instruments");
    if (m == "basis") {
      g.mode = InstrumentMode::Basis;
    } else if (m == "cell") {
      g.mode = InstrumentMode::CellOptimal;
    } else if (m == "oracle") {
      g.mode = InstrumentMode::Oracle;
    } else {
      throw Error("config", "gmm.instruments must be basis, cell or oracle");
    }
  }
  if (j.contains("degree")) g.degree = integer(j.at("degree"), "gmm.degree");
  if (g.degree < 1 || g.degree > 3) throw Error("config", "gmm.degree must be 1, 2 or 3");
  if (j.contains("grid_points")) g.grid_points = integer(j.at("grid_points"), "gmm.grid_points");
  if (j.contains("random_starts")) g.random_starts = integer(j.at("random_starts"), "gmm.random_starts");
  if (g.grid_points < 0 || g.random_starts < 0 || g.grid_points + g.random_starts < 1)
    throw Error("config", "gmm needs at least one start");
  if (j.contains("box")) {
    const auto b = numbers(j.at("box"), "gmm.box");
    if (b.size() != 2 || !(b[0] < b[1])) throw Error("config", "gmm.box must be [lo, hi] with lo < hi");
    g.box_lo = b[0];
    g.box_hi = b[1];
  }
  if (j.contains("grad_tol")) g.optim.grad_tol = num(j.at("grad_tol"), "gmm.grad_tol");
  if (j.contains("step_tol")) g.optim.step_tol = num(j.at("step_tol"), "gmm.step_tol");
  if (j.contains("max_iter")) g.optim.max_iter = integer(j.at("max_iter"), "gmm.max_iter");
  if (j.contains("ridge")) g.ridge = num(j.at("ridge"), "gmm.ridge");
  if (!(g.ridge >= 0.0)) throw Error("config", "gmm.ridge must be >= 0");
  if (j.contains("minima_ratio")) g.minima_ratio = num(j.at("minima_ratio"), "gmm.minima_ratio");
  if (j.contains("scale")) {
    const std::string s = text(j.at("scale"), "gmm.scale");
    if (s == "normalized") {
      g.scale = KernelScale::Normalized;
    } else if (s == "stabilized") {
      g.scale = KernelScale::Stabilized;
    } else if (s == "raw") {
      g.scale = KernelScale::Raw;
    } else {
      throw Error("config", "gmm.scale must be normalized, stabilized or raw");
    }
  }
  if (j.contains("trace")) g.keep_trace = boolean(j.at("trace"), "gmm.trace");
  return g;
}

std::vector<Eigen::VectorXd> vec_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error("config", what + " must be an array of vectors");
  std::vector<Eigen::VectorXd> out;
  for (const auto& v : j) out.push_back(vec(v, what + " entry"));
  return out;
}

}  // namespace

void validate_config(const RunConfig& cfg) {
  auto kernel_spec = [&]() {
    try {
      cfg.spec->validate(true);
    } catch (const Error& e) {
      throw Error("config", e.what());
    }
  };
  auto check_b = [&](const std::vector<Eigen::VectorXd>& bs, int K, const std::string& what) {
    for (const auto& b : bs)
      if (b.size() != K) throw Error("config", what + " entries must have length K = " + std::to_string(K));
  };
  switch (cfg.command) {
    case Command::Simulate:
      if (!cfg.spec) throw Error("config", "simulate needs `spec`");
      if (cfg.n < 1) throw Error("config", "simulate needs `n` >= 1");
      break;
    case Command::Estimate: {
      if (!cfg.gmm) throw Error("config", "estimate needs `gmm`");
      if (cfg.input.empty() && !(cfg.spec && cfg.n > 0))
        throw Error("config", "estimate needs `input`, or `spec` with `n` for a Monte Carlo run");
      const GenLogistic& d = cfg.distribution();
      if (cfg.spec && cfg.spec->T < d.tau() + 1)
        throw Error("config", "T must be at least tau + 1");
      if (d.tau() + 1 > kMaxPeriods) throw Error("config", "tau + 1 exceeds the factorial-cost cap of 6");
      if (cfg.gmm->mode == InstrumentMode::Oracle) {
        if (!cfg.spec) throw Error("config", "oracle instruments need `spec`");
        kernel_spec();
      }
      break;
    }
    case Command::Identify:
      if (!cfg.spec && cfg.input.empty()) throw Error("config", "identify needs `spec` or `input`");
      if (cfg.spec) {
        kernel_spec();
        check_b(cfg.identify.candidates, cfg.spec->K(), "identify.candidates");
      } else {
        (void)cfg.distribution();
      }
      break;
    case Command::Bound:
      if (!cfg.spec) throw Error("config", "bound needs `spec`");
      if (cfg.spec->xlaw.kind != XLaw::Kind::FiniteSupport)
        throw Error("config", "bound needs a FiniteSupport covariate law (x.kind = \"finite\")");
      kernel_spec();
      break;
    case Command::TestZero:
      if (cfg.input.empty()) throw Error("config", "test-zero needs `input`");
      if (cfg.test_zero.t == cfg.test_zero.t_prime) throw Error("config", "test_zero needs t != t_prime");
      if (cfg.test_zero.bins < 1) throw Error("config", "test_zero.bins must be >= 1");
      break;
    case Command::Moment:
      if (!cfg.spec && cfg.input.empty()) throw Error("config", "moment needs `spec` or `input`");
      if (cfg.moment.b.empty()) throw Error("config", "moment needs `moment.b`");
      if (cfg.spec) {
        kernel_spec();
        check_b(cfg.moment.b, cfg.spec->K(), "moment.b");
      } else {
        (void)cfg.distribution();
      }
      break;
  }
  if (cfg.replications < 1) throw Error("config", "replications must be >= 1");
  if (cfg.threads < 1) throw Error("config", "threads must be >= 1");
}

RunConfig parse_config_text(const std::string& txt, Command command) {
  json j;
  try {
    j = json::parse(txt);
  } catch (const json::parse_error& e) {
    throw Error("config", std::string("invalid JSON: ") + e.what());
  }
  check_keys(j, {"spec", "dist", "gmm", "test_zero", "identify", "moment", "seed", "n", "replications",
                 "threads", "input", "out"},
             "config");
  RunConfig cfg;
  cfg.command = command;
  if (j.contains("spec")) cfg.spec = parse_spec(j.at("spec"));
  if (j.contains("dist")) {
    cfg.dist = parse_dist(j.at("dist"));
    if (cfg.spec) throw Error("config", "give the distribution in `spec.dist` or `dist`, not both");
  }
  if (j.contains("gmm")) cfg.gmm = parse_gmm(j.at("gmm"));
  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      throw Error("config", "seed must be a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("n")) cfg.n = integer(j.at("n"), "n");
  if (j.contains("replications")) cfg.replications = integer(j.at("replications"), "replications");
  if (j.contains("threads")) cfg.threads = integer(j.at("threads"), "threads");
  if (j.contains("input")) cfg.input = text(j.at("input"), "input");
  if (j.contains("out")) cfg.out = text(j.at("out"), "out");
  if (j.contains("test_zero")) {
    const json& t = j.at("test_zero");
    check_keys(t, {"t", "t_prime", "bins"}, "test_zero");
    cfg.test_zero.t = integer(need(t, "t", "test_zero"), "test_zero.t") - 1;
    cfg.test_zero.t_prime = integer(need(t, "t_prime", "test_zero"), "test_zero.t_prime") - 1;
    if (t.contains("bins")) cfg.test_zero.bins = integer(t.at("bins"), "test_zero.bins");
  } else if (command == Command::TestZero) {
    throw Error("config", "test-zero needs `test_zero` with the (t, t_prime) pair");
  }
  if (j.contains("identify")) {
    const json& t = j.at("identify");
    check_keys(t, {"c_range", "probes", "grid", "scan_points", "candidates"}, "identify");
    if (t.contains("c_range")) {
      const auto c = numbers(t.at("c_range"), "identify.c_range");
      if (c.size() != 2 || !(c[0] < c[1])) throw Error("config", "identify.c_range must be [lo, hi] with lo < hi");
      cfg.identify.c_lo = c[0];
      cfg.identify.c_hi = c[1];
    }
    if (t.contains("probes")) cfg.identify.probes = integer(t.at("probes"), "identify.probes");
    if (t.contains("grid")) cfg.identify.grid = integer(t.at("grid"), "identify.grid");
    if (t.contains("scan_points")) cfg.identify.scan_points = integer(t.at("scan_points"), "identify.scan_points");
    if (t.contains("candidates")) cfg.identify.candidates = vec_list(t.at("candidates"), "identify.candidates");
    if (cfg.identify.probes < 1 || cfg.identify.scan_points < 2)
      throw Error("config", "identify.probes must be >= 1 and identify.scan_points >= 2");
  }
  if (j.contains("moment")) {
    const json& t = j.at("moment");
    check_keys(t, {"b", "degree"}, "moment");
    cfg.moment.b = vec_list(need(t, "b", "moment"), "moment.b");
    if (t.contains("degree")) cfg.moment.degree = integer(t.at("degree"), "moment.degree");
    if (cfg.moment.degree < 1 || cfg.moment.degree > 3) throw Error("config", "moment.degree must be 1, 2 or 3");
  }
  if (cfg.gmm) cfg.gmm->seed = cfg.seed;
  validate_config(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path, Command command) {
  std::ifstream is(path);
  if (!is) throw Error("config", "cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), command);
}

}  // namespace glpanel
