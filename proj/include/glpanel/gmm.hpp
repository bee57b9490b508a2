#ifndef GLPANEL_GMM_HPP
#define GLPANEL_GMM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glpanel/dgp.hpp"
#include "glpanel/kernel.hpp"
#include "glpanel/optim.hpp"
#include "glpanel/panel.hpp"

namespace glpanel {

enum class InstrumentMode { Basis, CellOptimal, Oracle };

struct GmmConfig {
  InstrumentMode mode = InstrumentMode::Basis;
  int degree = 1;  // basis degree, also used for the first step of CellOptimal
  // multi-start: grid_points^K grid on [box_lo, box_hi]^K plus random_starts uniform draws
  int grid_points = 3;
  double box_lo = -3.0;
  double box_hi = 3.0;
  int random_starts = 10;
  OptimOptions optim;
  double ridge = 1e-8;         // times trace(S) / dim, added before inverting S
  double minima_ratio = 10.0;  // report minima with objective within this factor of the best
  /// Minimize the pairwise (own-term-free) objective when there are more moments than
  /// parameters; see GmmProblem::objective.
  bool drop_own = true;
  /// Moments use the kernel divided by ||(M_1, ..., M_T)||. The raw and stabilized kernels
  /// vanish identically at beta = 0 for T >= 3, which is a spurious zero of every objective.
  KernelScale scale = KernelScale::Normalized;
  std::uint64_t seed = 0;
  /// Needed for Oracle instruments R(x)/Omega(x) (which use the true beta0 and gamma law).
  std::optional<DgpSpec> oracle_spec;
  bool keep_trace = false;
};

struct LocalMinimum {
  Eigen::VectorXd beta;
  double objective = 0.0;
  /// Quadratic form used to rank and report minima: the objective itself with basis
  /// instruments, otherwise the basis moments weighted by their inverse covariance at the pilot.
  double screen = 0.0;
  /// Ordering key: the pairwise version of `screen` when there are more screening moments
  /// than parameters (and drop_own is set), otherwise `screen`.
  double rank = 0.0;
  bool converged = false;
};

struct EstimationResult {
  Eigen::VectorXd beta_hat;
  std::vector<LocalMinimum> local_minima;  // ascending rank; beta_hat is the first
  Eigen::MatrixXd variance;
  Eigen::VectorXd se;
  double objective = 0.0;
  double j_statistic = 0.0;
  int j_df = 0;
  int moments = 0;
  int n = 0;
  double instrument_condition = 0.0;  // of the mean outer product of the instruments
  double weight_condition = 0.0;      // of the second-step moment covariance
  bool converged = false;
  bool ambiguous = false;
  std::vector<std::string> flags;
  std::vector<OptimStep> trace;  // best start of the final step, when requested
};

/// Period subsets of size tau + 1 (all of them when T > tau + 1), ascending.
std::vector<std::vector<int>> period_subsets(int T, int tau);

/// Unstandardized basis row: 1, every x_{t,k}, then squares and pairwise products of the
/// time averages (degree >= 2) and their cubes (degree 3).
Eigen::VectorXd basis_row(const TrajRef& x, int degree);
/// n x L instrument matrix with every column scaled to unit sample second moment.
/// Throws if L > n / 10.
Eigen::MatrixXd basis_instruments(const PanelSample& sample, int degree);

/// Moment data for one sample: per unit and period subset, the kernel trajectory and the
/// spell period, with units sharing (x, y) merged into one weighted record.
class GmmProblem {
 public:
  GmmProblem(const PanelSample& sample, const GenLogistic& dist, KernelScale scale);

  /// Per-subset instruments indexed by sample unit (rows) for each subset.
  void set_instruments(std::vector<Eigen::MatrixXd> per_subset);
  /// Same instrument matrix for every subset.
  void set_common_instruments(const Eigen::MatrixXd& z);

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int K() const { return K_; }
  [[nodiscard]] int moments() const { return M_; }
  [[nodiscard]] int subsets() const { return static_cast<int>(subsets_.size()); }
  [[nodiscard]] const std::vector<std::vector<int>>& subset_periods() const { return subsets_; }

  struct Eval {
    Eigen::VectorXd gbar;  // M
    Eigen::MatrixXd G;     // M x K
    Eigen::MatrixXd S;     // M x M, (1/n) sum g_i g_i'
  };
  [[nodiscard]] Eval evaluate(const VecRef& beta, bool with_grad, bool with_s) const;

  /// Q = gbar' W gbar and, if requested, its gradient 2 G' W gbar. With `drop_own`, the
  /// average of g_i' W g_j over pairs i != j instead: its expectation is the population
  /// objective, while E[Q] adds tr(W S(beta)) / n, which varies with beta.
  [[nodiscard]] double objective(const VecRef& beta, const Eigen::MatrixXd& W,
                                 Eigen::VectorXd* grad, bool drop_own = false) const;

  /// Kernel values and gradients at beta for every active record and subset, with the
  /// sample unit each record stands for and its weight.
  struct Record {
    int unit = 0;
    double weight = 0.0;
  };
  [[nodiscard]] const std::vector<Record>& records() const { return records_; }
  /// value and gradient of the kernel for record r, subset s (value 0 off single spells)
  [[nodiscard]] KernelValue kernel(int r, int s, const VecRef& beta) const;

 private:
  int n_ = 0;
  int T_ = 0;
  int K_ = 0;
  int M_ = 0;
  KernelScale scale_;
  std::vector<double> lambda_;
  std::vector<std::vector<int>> subsets_;
  std::vector<Record> records_;
  std::vector<Traj> xk_;        // records x subsets, row-major
  std::vector<int> spell_;      // records x subsets
  std::vector<Eigen::MatrixXd> inst_;  // per subset: records x L_s
};

Eigen::MatrixXd gmm_weight(const Eigen::MatrixXd& S, double ridge, double* condition = nullptr);

/// Q(beta) with the identity-weighted basis moments; mainly for checks and scans.
double gmm_objective(const PanelSample& sample, const GenLogistic& dist, const VecRef& beta,
                     const Eigen::MatrixXd& instruments, const Eigen::MatrixXd& weight,
                     KernelScale scale = KernelScale::Normalized, Eigen::VectorXd* grad = nullptr);

/// R-hat / Omega-hat per observation from cells of identical trajectories (or the sample's
/// cell labels); cells with fewer than 10 observations join the nearest larger cell.
/// Returns one n x K matrix per period subset.
std::vector<Eigen::MatrixXd> cell_optimal_instruments(const PanelSample& sample,
                                                      const GenLogistic& dist,
                                                      const VecRef& beta_pilot, double ridge,
                                                      KernelScale scale,
                                                      std::vector<std::string>* flags = nullptr);

/// R(x) / Omega(x) from the true model. Needs T = tau + 1.
Eigen::MatrixXd oracle_instruments(const PanelSample& sample, const DgpSpec& spec,
                                   KernelScale scale, std::vector<std::string>* flags = nullptr);

/// Sandwich (G'WG)^{-1} G'WSWG (G'WG)^{-1} / n.
Eigen::MatrixXd variance_estimate(const GmmProblem& problem, const VecRef& beta_hat,
                                  const Eigen::MatrixXd& W, std::vector<std::string>* flags = nullptr);

EstimationResult two_step_estimate(const PanelSample& sample, const GenLogistic& dist,
                                   const GmmConfig& config);

}  // namespace glpanel

#endif
