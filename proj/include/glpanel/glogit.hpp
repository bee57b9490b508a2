#ifndef GLPANEL_GLOGIT_HPP
#define GLPANEL_GLOGIT_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "glpanel/common.hpp"
#include "glpanel/panel.hpp"

namespace glpanel {

enum class FamilyType { First, Second };

inline constexpr int kMaxTau = 8;

/// Generalized logistic shock distribution.
///
/// First type: F/(1-F) = sum_j w_j exp(lambda_j u).
/// Second type: (1-F)/F = sum_j w_j exp(-lambda_j u).
///
/// lambda is strictly ascending with lambda[0] == 1; w[0] > 0, w[j] >= 0.
class GenLogistic {
 public:
  GenLogistic(FamilyType type, std::vector<double> lambda, std::vector<double> w);

  static GenLogistic logit() { return GenLogistic(FamilyType::First, {1.0}, {1.0}); }

  [[nodiscard]] FamilyType type() const { return type_; }
  [[nodiscard]] int tau() const { return static_cast<int>(lambda_.size()); }
  [[nodiscard]] const std::vector<double>& lambda() const { return lambda_; }
  [[nodiscard]] const std::vector<double>& w() const { return w_; }
  [[nodiscard]] double lambda_max() const { return lambda_.back(); }

  /// log G(u) for the first-type odds G(u) = sum_j w_j exp(lambda_j u),
  /// regardless of this distribution's type.
  [[nodiscard]] double log_odds_first(double u) const;

  /// G(u). Requires First type. Throws if the result overflows.
  [[nodiscard]] double odds(double u) const;
  [[nodiscard]] double cdf(double u) const;
  /// 1 - F(u), without cancellation in the right tail.
  [[nodiscard]] double survival(double u) const;
  [[nodiscard]] double pdf(double u) const;
  [[nodiscard]] double quantile(double p) const;
  /// Inverse-transform draws; deterministic in `seed`.
  [[nodiscard]] std::vector<double> sample(std::size_t n, std::uint64_t seed) const;
  /// F'/(F(1-F)), the derivative of the log odds. Lies in [1, lambda_max].
  [[nodiscard]] double score_weight(double u) const;

  /// Same (lambda, w) with the type switched to First.
  [[nodiscard]] GenLogistic as_first_type() const;

 private:
  // First-type helpers on the raw (lambda, w).
  [[nodiscard]] double cdf_first(double u) const;
  [[nodiscard]] double pdf_first(double u) const;
  [[nodiscard]] double weight_first(double u) const;

  FamilyType type_;
  std::vector<double> lambda_;
  std::vector<double> w_;
};

/// Map a second-type model onto a first-type one by (y, x) -> (1 - y, -x).
/// First-type input is returned unchanged.
std::pair<GenLogistic, PanelSample> normalize_to_first_type(const GenLogistic& dist,
                                                            const PanelSample& sample);

}  // namespace glpanel

#endif
