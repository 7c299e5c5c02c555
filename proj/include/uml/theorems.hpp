#pragma once

// Numerical certification of the variance-reduction results: matrix-level
// checks, spec-level checks, randomized ensembles and the budget sweep.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uml/dgp.hpp"

namespace uml {

struct Violation {
  std::uint64_t seed = 0;   // config seed; replay_config(id, seed, ...) reproduces it
  std::string spec_digest;  // sha256 of the generated inputs
  double magnitude = 0.0;   // how far the asserted inequality was missed
  std::string detail;
};

struct TheoremReport {
  std::string theorem_id;
  Index n_configs_tested = 0;
  Index n_passed = 0;
  Index n_precondition_unmet = 0;
  std::vector<Violation> failures;
  std::map<std::string, double> tolerances;
  // Side-by-side statistics that are reported but never asserted.
  std::map<std::string, double> reported;

  bool ok() const { return failures.empty() && n_passed + n_precondition_unmet == n_configs_tested; }
};

enum class CheckStatus { Passed, Failed, PreconditionUnmet };

const char* to_string(CheckStatus s);

struct CheckOutcome {
  CheckStatus status = CheckStatus::Passed;
  double margin = 0.0;  // signed slack of the asserted inequality (negative on failure)
  std::string detail;
};

// Directional variance v^T pinv(info) v with the infinite-variance convention:
// finite is false when v is not in range(info).
struct DirectionalVariance {
  bool finite = false;
  double value = 0.0;  // meaningful only when finite
};
DirectionalVariance directional_variance(const Eigen::MatrixXd& info, const Eigen::VectorXd& v);

// ---- matrix-level checks ------------------------------------------------

// M < N (or <=), both PD: asserts the inverses reverse with the same strictness.
CheckOutcome check_order_reversal(const Eigen::MatrixXd& m, const Eigen::MatrixXd& n, bool strict);

// PSD M, N with a common kernel K and M < N on the complement of K: asserts
// N^+ < M^+ on that complement and N^+ <= M^+ on the whole space.
CheckOutcome check_pinv_monotonicity(const Eigen::MatrixXd& m, const Eigen::MatrixXd& n);

struct DirectionalLemmaReport {
  CheckOutcome outcome;
  double gap = 0.0;             // v^T (M^-1 - N^-1) v
  double condition_norm = 0.0;  // ||(N - M) M^-1 v||
  bool strict_expected = false;
  Eigen::VectorXd u;            // witness with strict reversal
  double u_gap = 0.0;
};
// M <= N PD, v^T M v < v^T N v.
DirectionalLemmaReport check_directional_lemma(const Eigen::MatrixXd& m, const Eigen::MatrixXd& n,
                                               const Eigen::VectorXd& v);

// cc-block statement on explicit information blocks.
CheckOutcome check_thm1_blocks(const Eigen::MatrixXd& cc_x, const Eigen::MatrixXd& cc_y);

struct Thm2Report {
  CheckOutcome outcome;
  int variance_case = 0;  // 1: v outside range(cc_X), 2: inside
  double info_x = 0.0;
  double info_joint = 0.0;
  DirectionalVariance var_x;      // true pseudoinverse form
  DirectionalVariance var_joint;  // true pseudoinverse form
  // Case 2 only: restricted-inverse quantities on S = range(cc_X).
  bool condition_holds = false;
  double condition_norm = 0.0;
  double restricted_var_x = 0.0;
  double restricted_var_joint = 0.0;
  double u_gap = 0.0;  // strict reduction witnessed by some u in S
  bool pinv_strict_reduction = false;  // reported only
};
// by_nonzero states whether some B_c,j v != 0 (the theorem's premise).
Thm2Report check_thm2_blocks(const Eigen::MatrixXd& cc_x, const Eigen::MatrixXd& cc_y, const Eigen::VectorXd& v,
                             bool by_nonzero);

// v a common eigenvector of both blocks; returns the realized ratio
// v^T pinv(cc_X + cc_Y) v / v^T pinv(cc_X) v.
double realized_contraction(const Eigen::MatrixXd& cc_x, const Eigen::MatrixXd& cc_y, const Eigen::VectorXd& v);

// a / (a + b); a, b > 0.
double contraction_factor(double a, double b);

CheckOutcome check_rescue_blocks(const Eigen::MatrixXd& cc_x, const Eigen::MatrixXd& cc_y, const Eigen::VectorXd& v);

CheckOutcome check_eigenvector_blocks(const Eigen::MatrixXd& cc_x, const Eigen::MatrixXd& cc_y,
                                      const Eigen::VectorXd& v);

struct Thm3Report {
  CheckOutcome outcome;
  Eigen::VectorXd witness;
  double info_y = 0.0;
  double info_x = 0.0;
};
Thm3Report check_thm3_blocks(const Eigen::MatrixXd& i_x, const Eigen::MatrixXd& i_y);

// ---- spec-level checks (unscaled Fisher, round-robin slot usage) ---------

CheckOutcome check_thm1(const LinearDgpSpec& spec, Index n_x, Index n_y);
Thm2Report check_thm2(const LinearDgpSpec& spec, const Eigen::VectorXd& v, Index n_x, Index n_y);
// I^(m) sums over the first m design slots of each modality.
Thm3Report check_thm3(const LinearDgpSpec& spec, Index m);

// Spec whose cc blocks share eigenvectors Q: cc_X = Q diag(a) Q^T (one X slot)
// and cc_Y = Q diag(b) Q^T (one Y slot); modality blocks are orthogonal.
LinearDgpSpec make_common_eigen_spec(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Index d_x, Index d_y,
                                     double sigma, std::uint64_t seed, Eigen::MatrixXd* q_out = nullptr);

// ---- randomized ensembles -----------------------------------------------

struct EnsembleOptions {
  Index configs = 500;
  std::uint64_t seed = 7;
  bool orthogonal = true;
  unsigned workers = 1;
};

// Every statement, in a fixed order.
const std::vector<std::string>& theorem_ids();

TheoremReport run_ensemble(const std::string& theorem_id, const EnsembleOptions& options);
std::vector<TheoremReport> verify_theorems(const EnsembleOptions& options);

// Re-runs one configuration from a failure record.
TheoremReport replay_config(const std::string& theorem_id, std::uint64_t config_seed, bool orthogonal);

// ---- budget sweep --------------------------------------------------------

struct BudgetPoint {
  double fraction = 0.0;
  Index n_x = 0;
  Index n_y = 0;
  double crlb_trace = 0.0;
  std::optional<double> mc_trace;
  bool identifiable = true;  // false: crlb_trace is the pinv trace over the identifiable part only
};

struct BudgetCurve {
  Index total_budget = 0;
  std::vector<BudgetPoint> points;

  // Index of the smallest CRLB trace among identifiable points; -1 if none.
  Index argmin() const;
};

// Y receives round(f N) samples, X the rest. trials = 0 skips Monte-Carlo.
BudgetCurve budget_sweep(const LinearDgpSpec& spec, Index total, const std::vector<double>& grid, std::uint64_t seed,
                         Index trials, unsigned workers = 1);

}  // namespace uml
