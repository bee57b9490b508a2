#ifndef GLPANEL_CONFIG_HPP
#define GLPANEL_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glpanel/dgp.hpp"
#include "glpanel/gmm.hpp"

namespace glpanel {

enum class Command { Simulate, Estimate, Identify, Bound, TestZero, Moment };

Command parse_command(const std::string& name);
std::string command_name(Command c);

struct TestZeroOptions {
  int t = 0;        // 0-based (the config uses 1-based periods)
  int t_prime = 1;
  int bins = 4;
};

struct IdentifyOptions {
  std::optional<double> c_lo;  // default 1/lambda_max - 0.2
  std::optional<double> c_hi;  // default lambda_max + 0.2
  int probes = 25;
  int grid = 0;
  int scan_points = 201;
  std::vector<Eigen::VectorXd> candidates;
};

struct MomentOptions {
  std::vector<Eigen::VectorXd> b;
  int degree = 1;
};

struct RunConfig {
  Command command = Command::Simulate;
  std::optional<DgpSpec> spec;
  std::optional<GenLogistic> dist;  // when no spec is given
  std::optional<GmmConfig> gmm;
  std::string input;
  std::string out = ".";
  std::uint64_t seed = 0;
  int n = 0;
  int replications = 1;
  int threads = 1;
  TestZeroOptions test_zero;
  IdentifyOptions identify;
  MomentOptions moment;

  /// The shock distribution from `dist` or from the spec.
  [[nodiscard]] const GenLogistic& distribution() const;
};

/// Strict parsing: unknown keys, wrong types and missing keys required by `command` throw.
RunConfig parse_config_text(const std::string& text, Command command);
RunConfig parse_config_file(const std::string& path, Command command);

/// Per-command requirements (also run by the parsers).
void validate_config(const RunConfig& cfg);

}  // namespace glpanel

#endif
