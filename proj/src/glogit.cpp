#include "glpanel/glogit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glpanel/rng.hpp"

namespace glpanel {

namespace {

// 1 / (1 + exp(-l)) without overflow.
double logistic_of_log(double l) {
  if (l >= 0.0) return 1.0 / (1.0 + std::exp(-l));
  const double e = std::exp(l);
  return e / (1.0 + e);
}

}  // namespace

GenLogistic::GenLogistic(FamilyType type, std::vector<double> lambda, std::vector<double> w)
    : type_(type), lambda_(std::move(lambda)), w_(std::move(w)) {
  if (lambda_.empty()) throw Error("glogit", "lambda must be non-empty");
  if (static_cast<int>(lambda_.size()) > kMaxTau)
    throw Error("glogit", "tau = " + std::to_string(lambda_.size()) + " exceeds the cap of " +
                              std::to_string(kMaxTau));
  if (lambda_.size() != w_.size()) throw Error("glogit", "lambda and w must have equal length");
  if (lambda_[0] != 1.0) throw Error("glogit", "lambda[0] must be 1");
  for (std::size_t j = 1; j < lambda_.size(); ++j) {
    if (!(lambda_[j] > lambda_[j - 1]) || !std::isfinite(lambda_[j]))
      throw Error("glogit", "lambda must be strictly ascending and finite");
  }
  if (!(w_[0] > 0.0)) throw Error("glogit", "w[0] must be > 0");
  for (double wj : w_) {
    if (!(wj >= 0.0) || !std::isfinite(wj)) throw Error("glogit", "w entries must be >= 0");
  }
}

double GenLogistic::log_odds_first(double u) const {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < w_.size(); ++j) {
    if (w_[j] > 0.0) top = std::max(top, std::log(w_[j]) + lambda_[j] * u);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < w_.size(); ++j) {
    if (w_[j] > 0.0) s += std::exp(std::log(w_[j]) + lambda_[j] * u - top);
  }
  return top + std::log(s);
}

double GenLogistic::odds(double u) const {
  if (type_ != FamilyType::First) throw Error("glogit", "odds() requires a first-type distribution");
  if (!std::isfinite(u)) throw Error("glogit", "odds() needs a finite argument");
  const double g = std::exp(log_odds_first(u));
  if (!std::isfinite(g)) throw Error("glogit", "odds overflow at u = " + std::to_string(u));
  return g;
}

double GenLogistic::cdf_first(double u) const { return logistic_of_log(log_odds_first(u)); }

double GenLogistic::weight_first(double u) const {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < w_.size(); ++j) {
    if (w_[j] > 0.0) top = std::max(top, lambda_[j] * u);
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < w_.size(); ++j) {
    if (w_[j] <= 0.0) continue;
    const double e = w_[j] * std::exp(lambda_[j] * u - top);
    num += lambda_[j] * e;
    den += e;
  }
  return num / den;
}

double GenLogistic::pdf_first(double u) const {
  // F' = G'/(1+G)^2 = (G'/G) F (1-F)
  const double l = log_odds_first(u);
  return weight_first(u) * logistic_of_log(l) * logistic_of_log(-l);
}

double GenLogistic::cdf(double u) const {
  if (type_ == FamilyType::First) return cdf_first(u);
  return logistic_of_log(-log_odds_first(-u));
}

double GenLogistic::survival(double u) const {
  if (type_ == FamilyType::First) return logistic_of_log(-log_odds_first(u));
  return cdf_first(-u);
}

double GenLogistic::pdf(double u) const {
  return type_ == FamilyType::First ? pdf_first(u) : pdf_first(-u);
}

double GenLogistic::score_weight(double u) const {
  return type_ == FamilyType::First ? weight_first(u) : weight_first(-u);
}

double GenLogistic::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw Error("glogit", "quantile needs p in (0,1)");
  double lo = -1.0;
  double hi = 1.0;
  while (cdf(lo) > p) {
    hi = lo;
    lo *= 2.0;
  }
  while (cdf(hi) < p) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-12 * std::max(1.0, std::abs(lo) + std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double q = 0.5 * (lo + hi);
  const double dens = pdf(q);
  if (dens > 0.0) {
    const double polished = q - (cdf(q) - p) / dens;
    if (polished >= lo && polished <= hi) q = polished;
  }
  return q;
}

std::vector<double> GenLogistic::sample(std::size_t n, std::uint64_t seed) const {
  Engine eng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = quantile(uniform_open(eng));
  return out;
}

GenLogistic GenLogistic::as_first_type() const {
  return GenLogistic(FamilyType::First, lambda_, w_);
}

std::pair<GenLogistic, PanelSample> normalize_to_first_type(const GenLogistic& dist,
                                                            const PanelSample& sample) {
  if (dist.type() == FamilyType::First) return {dist, sample};
  PanelSample out = sample;
  out.y = (1 - sample.y.array()).matrix();
  out.x = -sample.x;
  return {dist.as_first_type(), out};
}

}  // namespace glpanel
