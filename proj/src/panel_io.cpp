#include "glpanel/panel_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string_view>
#include <vector>

namespace glpanel {

void PanelSample::validate() const {
  if (T < 1 || K < 1) throw Error("panel", "T and K must be positive");
  if (y.cols() != T) throw Error("panel", "y must have T columns");
  if (x.rows() != y.rows() || x.cols() != static_cast<Eigen::Index>(T) * K)
    throw Error("panel", "x must be n x (T*K)");
  if (!cell.empty() && static_cast<int>(cell.size()) != n())
    throw Error("panel", "cell labels must have one entry per unit");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const int v = y.data()[i];
    if (v != 0 && v != 1) throw Error("panel", "y entries must be 0 or 1");
  }
  if (!x.allFinite()) throw Error("panel", "x contains non-finite values");
}

void write_panel_csv(const PanelSample& sample, std::ostream& os) {
  sample.validate();
  os << "id,t,y";
  for (int k = 1; k <= sample.K; ++k) os << ",x" << k;
  os << '\n';
  char buf[40];
  std::string line;
  for (int i = 0; i < sample.n(); ++i) {
    const auto x = sample.traj(i);
    for (int t = 0; t < sample.T; ++t) {
      line = std::to_string(i + 1) + ',' + std::to_string(t + 1) + ',' +
             std::to_string(sample.y(i, t));
      for (int k = 0; k < sample.K; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", x(t, k));
        line += ',';
        line += buf;
      }
      line += '\n';
      os << line;
    }
  }
}

void write_panel_csv(const PanelSample& sample, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("io", "cannot open " + path + " for writing");
  write_panel_csv(sample, os);
  if (!os) throw Error("io", "write to " + path + " failed");
}

namespace {

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class V>
V parse_num(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  V v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error("io", "line " + std::to_string(line) + ": cannot parse " + what + " '" +
                          std::string(s) + "'");
  return v;
}

}  // namespace

PanelSample read_panel_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("io", "empty CSV input");
  const auto head = split(line);
  if (head.size() < 4 || trim(head[0]) != "id" || trim(head[1]) != "t" || trim(head[2]) != "y")
    throw Error("io", "CSV header must be id,t,y,x1,...,xK");
  const int K = static_cast<int>(head.size()) - 3;
  for (int k = 0; k < K; ++k)
    if (trim(head[3 + k]) != "x" + std::to_string(k + 1))
      throw Error("io", "CSV header must be id,t,y,x1,...,xK");

  struct Unit {
    std::map<long long, std::pair<int, std::vector<double>>> rows;
  };
  std::vector<long long> order;
  std::map<long long, Unit> units;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (static_cast<int>(f.size()) != K + 3)
      throw Error("io", "line " + std::to_string(lineno) + ": expected " + std::to_string(K + 3) +
                            " fields");
    const auto id = parse_num<long long>(f[0], lineno, "id");
    const auto t = parse_num<long long>(f[1], lineno, "t");
    const int y = parse_num<int>(f[2], lineno, "y");
    if (y != 0 && y != 1) throw Error("io", "line " + std::to_string(lineno) + ": y must be 0 or 1");
    std::vector<double> x(K);
    for (int k = 0; k < K; ++k) x[k] = parse_num<double>(f[3 + k], lineno, "x");
    auto [it, fresh] = units.try_emplace(id);
    if (fresh) order.push_back(id);
    if (!it->second.rows.emplace(t, std::make_pair(y, std::move(x))).second)
      throw Error("io", "line " + std::to_string(lineno) + ": duplicate (id, t)");
  }
  if (order.empty()) throw Error("io", "CSV has no data rows");
  const int T = static_cast<int>(units[order.front()].rows.size());
  PanelSample out(static_cast<int>(order.size()), T, K);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& rows = units[order[i]].rows;
    if (static_cast<int>(rows.size()) != T)
      throw Error("io", "unbalanced panel: id " + std::to_string(order[i]) + " has " +
                            std::to_string(rows.size()) + " periods, expected " + std::to_string(T));
    long long expect = 1;
    for (const auto& [t, row] : rows) {
      if (t != expect)
        throw Error("io", "id " + std::to_string(order[i]) + ": periods must be 1..T");
      out.y(static_cast<Eigen::Index>(i), t - 1) = row.first;
      for (int k = 0; k < K; ++k) out.traj(static_cast<int>(i))(t - 1, k) = row.second[k];
      ++expect;
    }
  }
  out.validate();
  return out;
}

PanelSample read_panel_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("io", "cannot open " + path);
  return read_panel_csv(is);
}

}  // namespace glpanel
