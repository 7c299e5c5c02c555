#include "uml/theorems.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "uml/errors.hpp"
#include "uml/estimation.hpp"
#include "uml/io.hpp"
#include "uml/matrix_kernels.hpp"
#include "uml/rng.hpp"

namespace uml {

namespace {

constexpr double kStrictRel = 1e-10;  // strict inequalities need this much slack, relative to scale
constexpr double kRangeTol = 1e-9;    // range membership, relative residual
constexpr double kZeroRel = 1e-9;     // "equals zero" for quadratic forms, relative to scale
constexpr double kContractionRel = 1e-10;

using Eigen::MatrixXd;
using Eigen::VectorXd;

double scale_of(const MatrixXd& a) { return 1.0 + a.norm(); }
double scale_of(const MatrixXd& a, const MatrixXd& b) { return 1.0 + std::max(a.norm(), b.norm()); }

CheckOutcome passed(double margin, std::string detail = {}) { return {CheckStatus::Passed, margin, std::move(detail)}; }
CheckOutcome failed(double margin, std::string detail) { return {CheckStatus::Failed, margin, std::move(detail)}; }
CheckOutcome unmet(std::string detail) { return {CheckStatus::PreconditionUnmet, 0.0, std::move(detail)}; }

bool is_pd(const MatrixXd& m) {
  const auto eig = sym_eig(m);
  return eig.eigenvalues(eig.eigenvalues.size() - 1) > kStrictRel * scale_of(m);
}

MatrixXd sym_sqrt(const MatrixXd& m, bool inverse) {
  const auto eig = sym_eig(m);
  VectorXd d = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  if (inverse) d = d.cwiseInverse();
  return eig.eigenvectors * d.asDiagonal() * eig.eigenvectors.transpose();
}

MatrixXd random_orthonormal(Rng& rng, Index d, Index r) {
  const MatrixXd g = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(d, d);
  return q.leftCols(r);
}

MatrixXd random_pd(Rng& rng, Index d) {
  const MatrixXd g = rng.normal_matrix(d, d);
  return g * g.transpose() + 0.1 * MatrixXd::Identity(d, d);
}

}  // namespace

const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Passed: return "passed";
    case CheckStatus::Failed: return "failed";
    case CheckStatus::PreconditionUnmet: return "precondition_unmet";
  }
  return "unknown";
}

DirectionalVariance directional_variance(const MatrixXd& info, const VectorXd& v) {
  DirectionalVariance out;
  out.finite = range_contains(info, v, kRangeTol);
  if (out.finite) out.value = v.dot(pinv(info) * v);
  return out;
}

CheckOutcome check_order_reversal(const MatrixXd& m, const MatrixXd& n, bool strict) {
  if (!is_pd(m) || !is_pd(n)) return unmet("both matrices must be positive definite");
  const auto premise = loewner_compare(m, n);
  if (strict && premise.relation != LoewnerRelation::StrictlyLess) return unmet("premise M < N does not hold");
  if (!strict && premise.relation == LoewnerRelation::Incomparable) return unmet("premise M <= N does not hold");
  const MatrixXd m_inv = m.llt().solve(MatrixXd::Identity(m.rows(), m.cols()));
  const MatrixXd n_inv = n.llt().solve(MatrixXd::Identity(n.rows(), n.cols()));
  const auto verdict = loewner_compare(n_inv, m_inv);
  const double margin = verdict.min_eig_of_difference;
  if (strict) {
    if (verdict.relation == LoewnerRelation::StrictlyLess) return passed(margin);
    return failed(margin, std::string("inverse relation ") + to_string(verdict.relation) + ", expected strictly_less");
  }
  if (verdict.relation != LoewnerRelation::Incomparable) return passed(margin);
  return failed(margin, "inverses are not ordered");
}

CheckOutcome check_pinv_monotonicity(const MatrixXd& m, const MatrixXd& n) {
  const MatrixXd u = range_basis(m);
  const MatrixXd un = range_basis(n);
  if (u.cols() == 0) return unmet("M is zero");
  if (un.cols() != u.cols() || (u * u.transpose() - un * un.transpose()).norm() > kRangeTol) {
    return unmet("kernels differ");
  }
  const MatrixXd m_r = u.transpose() * m * u;
  const MatrixXd n_r = u.transpose() * n * u;
  if (loewner_compare(m_r, n_r).relation != LoewnerRelation::StrictlyLess) {
    return unmet("premise M < N on the complement of the kernel does not hold");
  }
  const MatrixXd m_pinv = pinv(m);
  const MatrixXd n_pinv = pinv(n);
  const auto restricted = loewner_compare(u.transpose() * n_pinv * u, u.transpose() * m_pinv * u);
  const auto full = loewner_compare(n_pinv, m_pinv);
  if (restricted.relation != LoewnerRelation::StrictlyLess) {
    return failed(restricted.min_eig_of_difference,
                  std::string("restricted pinv relation ") + to_string(restricted.relation));
  }
  if (full.relation == LoewnerRelation::Incomparable) {
    return failed(full.min_eig_of_difference, "pinv not ordered on the full space");
  }
  return passed(restricted.min_eig_of_difference);
}

DirectionalLemmaReport check_directional_lemma(const MatrixXd& m, const MatrixXd& n, const VectorXd& v) {
  DirectionalLemmaReport r;
  if (!is_pd(m) || !is_pd(n)) {
    r.outcome = unmet("both matrices must be positive definite");
    return r;
  }
  if (loewner_compare(m, n).relation == LoewnerRelation::Incomparable) {
    r.outcome = unmet("premise M <= N does not hold");
    return r;
  }
  const MatrixXd delta = n - m;
  const double vdv = v.dot(delta * v);
  if (!(vdv > kStrictRel * scale_of(delta) * v.squaredNorm())) {
    r.outcome = unmet("premise v^T M v < v^T N v does not hold");
    return r;
  }
  const auto m_llt = m.llt();
  const auto n_llt = n.llt();
  const VectorXd m_inv_v = m_llt.solve(v);
  const double var_m = v.dot(m_inv_v);
  const double var_n = v.dot(n_llt.solve(v));
  r.gap = var_m - var_n;
  r.condition_norm = (delta * m_inv_v).norm();
  const double gap_tol = kStrictRel * (1.0 + std::abs(var_m));
  const double cond_tol = kRangeTol * scale_of(delta) * m_inv_v.norm();
  r.strict_expected = r.condition_norm > cond_tol;

  // Witness u = M^{1/2} z, z the top eigenvector of M^{-1/2} (N - M) M^{-1/2}.
  const MatrixXd m_half = sym_sqrt(m, false);
  const MatrixXd m_inv_half = sym_sqrt(m, true);
  const auto c_eig = sym_eig(m_inv_half * delta * m_inv_half);
  r.u = m_half * c_eig.eigenvectors.col(0);
  r.u_gap = r.u.dot(m_llt.solve(r.u)) - r.u.dot(n_llt.solve(r.u));
  const double u_tol = kStrictRel * (1.0 + r.u.dot(m_llt.solve(r.u)));

  if (r.gap < -gap_tol) {
    r.outcome = failed(r.gap, "directional inverse order reversed");
  } else if (r.strict_expected && !(r.gap > gap_tol)) {
    r.outcome = failed(r.gap, "strict reduction expected but not observed");
  } else if (!r.strict_expected && std::abs(r.gap) > gap_tol) {
    r.outcome = failed(-std::abs(r.gap), "condition vector is zero but the gap is not");
  } else if (!(r.u_gap > u_tol)) {
    r.outcome = failed(r.u_gap, "witness u does not give a strict reversal");
  } else {
    r.outcome = passed(r.strict_expected ? r.gap : r.u_gap);
  }
  return r;
}

CheckOutcome check_thm1_blocks(const MatrixXd& cc_x, const MatrixXd& cc_y) {
  if (!is_pd(cc_y)) return unmet("Y information on theta_c is not positive definite");
  const MatrixXd cc_xy = cc_x + cc_y;
  const auto info = loewner_compare(cc_x, cc_xy);
  if (info.relation != LoewnerRelation::StrictlyLess) {
    return failed(info.min_eig_of_difference, std::string("information relation ") + to_string(info.relation));
  }
  if (is_pd(cc_x)) {
    const auto var = loewner_compare(pinv(cc_xy), pinv(cc_x));
    if (var.relation != LoewnerRelation::StrictlyLess) {
      return failed(var.min_eig_of_difference, std::string("covariance relation ") + to_string(var.relation));
    }
    return passed(std::min(info.min_eig_of_difference, var.min_eig_of_difference));
  }
  return passed(info.min_eig_of_difference, "cc_X singular: covariance order not defined");
}

Thm2Report check_thm2_blocks(const MatrixXd& cc_x, const MatrixXd& cc_y, const VectorXd& v, bool by_nonzero) {
  Thm2Report r;
  if (!(v.norm() > 0)) throw InvalidInput("direction v must be nonzero");
  if (!by_nonzero) {
    r.outcome = unmet("B_c v = 0 for every Y design");
    return r;
  }
  const MatrixXd cc_xy = cc_x + cc_y;
  const double scale = scale_of(cc_x, cc_xy) * v.squaredNorm();
  r.info_x = v.dot(cc_x * v);
  r.info_joint = v.dot(cc_xy * v);
  r.var_x = directional_variance(cc_x, v);
  r.var_joint = directional_variance(cc_xy, v);
  const double info_gain = r.info_joint - r.info_x;
  if (!(info_gain > kStrictRel * scale)) {
    r.outcome = failed(info_gain, "information did not increase along v");
    return r;
  }

  if (!r.var_x.finite) {
    r.variance_case = 1;
    if (!r.var_joint.finite) {
      r.outcome = failed(-1.0, "joint directional variance is not finite");
      return r;
    }
    r.pinv_strict_reduction = true;
    r.outcome = passed(info_gain);
    return r;
  }

  r.variance_case = 2;
  const MatrixXd u = range_basis(cc_x);
  const MatrixXd mx = u.transpose() * cc_x * u;
  const MatrixXd mxy = u.transpose() * cc_xy * u;
  const VectorXd vs = u.transpose() * v;
  const auto lemma = check_directional_lemma(mx, mxy, vs);
  r.condition_norm = lemma.condition_norm;
  r.condition_holds = lemma.strict_expected;
  const VectorXd mx_inv_vs = mx.llt().solve(vs);
  r.restricted_var_x = vs.dot(mx_inv_vs);
  r.restricted_var_joint = vs.dot(mxy.llt().solve(vs));
  r.u_gap = lemma.u_gap;
  r.pinv_strict_reduction =
      r.var_joint.finite && (r.var_x.value - r.var_joint.value) > kStrictRel * (1.0 + r.var_x.value);
  if (lemma.outcome.status == CheckStatus::PreconditionUnmet) {
    r.outcome = failed(0.0, "restricted blocks violate the ordering premise: " + lemma.outcome.detail);
    return r;
  }
  r.outcome = lemma.outcome;
  return r;
}

double realized_contraction(const MatrixXd& cc_x, const MatrixXd& cc_y, const VectorXd& v) {
  const double joint = v.dot(pinv(MatrixXd(cc_x + cc_y)) * v);
  const double x_only = v.dot(pinv(cc_x) * v);
  if (!(x_only > 0)) throw InvalidInput("v carries no X information");
  return joint / x_only;
}

double contraction_factor(double a, double b) {
  if (!(a > 0) || !(b > 0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidInput("contraction_factor needs finite a > 0 and b > 0");
  }
  return a / (a + b);
}

CheckOutcome check_rescue_blocks(const MatrixXd& cc_x, const MatrixXd& cc_y, const VectorXd& v) {
  const double zero_tol = kZeroRel * scale_of(cc_x) * v.squaredNorm();
  const double ix = v.dot(cc_x * v);
  const double iy = v.dot(cc_y * v);
  if (std::abs(ix) > zero_tol) return unmet("v^T cc_X v is not zero");
  if (!(iy > kStrictRel * scale_of(cc_y) * v.squaredNorm())) return unmet("v^T cc_Y v is not positive");
  const auto vx = directional_variance(cc_x, v);
  const auto vxy = directional_variance(MatrixXd(cc_x + cc_y), v);
  if (vx.finite) return failed(-1.0, "X-only variance along v is finite");
  if (!vxy.finite) return failed(-1.0, "joint variance along v is not finite");
  return passed(iy);
}

CheckOutcome check_eigenvector_blocks(const MatrixXd& cc_x, const MatrixXd& cc_y, const VectorXd& v) {
  const double vv = v.squaredNorm();
  const double lambda = v.dot(cc_x * v) / vv;
  if (!(lambda > kStrictRel * scale_of(cc_x))) return unmet("eigenvalue is not positive");
  if ((cc_x * v - lambda * v).norm() > kRangeTol * scale_of(cc_x) * std::sqrt(vv)) return unmet("v is not an eigenvector");
  if (!(v.dot(cc_y * v) > kStrictRel * scale_of(cc_y) * vv)) return unmet("v^T cc_Y v is not positive");

  const double var_x = v.dot(pinv(cc_x) * v);
  const double expected = vv / lambda;
  if (std::abs(var_x - expected) > 1e-9 * expected) {
    return failed(-std::abs(var_x - expected), "X-only variance differs from |v|^2 / lambda");
  }
  const auto t2 = check_thm2_blocks(cc_x, cc_y, v, true);
  if (t2.variance_case != 2) return failed(-1.0, "eigenvector with positive eigenvalue fell outside range(cc_X)");
  if (!t2.condition_holds) return failed(-t2.condition_norm, "strictness condition does not hold");
  if (t2.outcome.status != CheckStatus::Passed) return t2.outcome;
  if (is_pd(cc_x) && !t2.pinv_strict_reduction) {
    return failed(t2.var_x.value - t2.var_joint.value, "no strict reduction with positive definite cc_X");
  }
  return passed(t2.restricted_var_x - t2.restricted_var_joint);
}

Thm3Report check_thm3_blocks(const MatrixXd& i_x, const MatrixXd& i_y) {
  Thm3Report r;
  const MatrixXd ux = range_basis(i_x);
  const MatrixXd uy = range_basis(i_y);
  const MatrixXd px = ux * ux.transpose();
  const Index d = i_x.rows();
  // Pick the range(I_Y) basis vector that sticks out of range(I_X) the most.
  double best = 0.0;
  Index best_k = -1;
  for (Index k = 0; k < uy.cols(); ++k) {
    const double res = (uy.col(k) - px * uy.col(k)).norm();
    if (res > best) {
      best = res;
      best_k = k;
    }
  }
  if (best_k < 0 || best <= kRangeTol) {
    r.outcome = unmet("range(I_Y) is contained in range(I_X)");
    return r;
  }
  r.witness = (MatrixXd::Identity(d, d) - px) * uy.col(best_k);
  const double vv = r.witness.squaredNorm();
  r.info_x = r.witness.dot(i_x * r.witness);
  r.info_y = r.witness.dot(i_y * r.witness);
  if (std::abs(r.info_x) > kZeroRel * scale_of(i_x) * vv) {
    r.outcome = failed(-std::abs(r.info_x), "witness carries X information");
  } else if (!(r.info_y > kStrictRel * scale_of(i_y) * vv)) {
    r.outcome = failed(r.info_y, "witness carries no Y information");
  } else {
    r.outcome = passed(r.info_y - r.info_x);
  }
  return r;
}

namespace {

MatrixXd cc_block(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y, bool profile = false) {
  const auto f = fisher_info(spec, mode, n_x, n_y, false);
  return profile ? profile_information(f) : MatrixXd(f.cc());
}

Index used_slots(std::size_t slots, Index n) { return std::min(static_cast<Index>(slots), n); }

bool some_b_c_full_rank(const LinearDgpSpec& spec, Index n_y) {
  for (Index j = 0; j < used_slots(spec.y_designs.size(), n_y); ++j) {
    const auto& b = spec.y_designs[static_cast<std::size_t>(j)].b_c;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(b);
    qr.setThreshold(1e-10);
    if (qr.rank() == spec.partition.d_c) return true;
  }
  return false;
}

bool some_b_c_v_nonzero(const LinearDgpSpec& spec, Index n_y, const VectorXd& v) {
  for (Index j = 0; j < used_slots(spec.y_designs.size(), n_y); ++j) {
    const auto& b = spec.y_designs[static_cast<std::size_t>(j)].b_c;
    if ((b * v).norm() > kStrictRel * (1.0 + b.norm()) * v.norm()) return true;
  }
  return false;
}

void require_both(const LinearDgpSpec& spec, Index n_x, Index n_y) {
  validate(spec);
  if (spec.x_designs.empty() || spec.y_designs.empty()) throw InvalidInput("spec needs X and Y designs");
  if (n_x < 1 || n_y < 1) throw InvalidInput("n_x and n_y must be >= 1");
}

}  // namespace

CheckOutcome check_thm1(const LinearDgpSpec& spec, Index n_x, Index n_y) {
  require_both(spec, n_x, n_y);
  if (!some_b_c_full_rank(spec, n_y)) return unmet("no used B_c has full column rank");
  return check_thm1_blocks(cc_block(spec, EstimatorMode::XOnly, n_x, 0), cc_block(spec, EstimatorMode::YOnly, 0, n_y));
}

Thm2Report check_thm2(const LinearDgpSpec& spec, const VectorXd& v, Index n_x, Index n_y) {
  require_both(spec, n_x, n_y);
  if (v.size() != spec.partition.d_c) throw InvalidInput("direction v must have length d_c");
  return check_thm2_blocks(cc_block(spec, EstimatorMode::XOnly, n_x, 0), cc_block(spec, EstimatorMode::YOnly, 0, n_y),
                           v, some_b_c_v_nonzero(spec, n_y, v));
}

Thm3Report check_thm3(const LinearDgpSpec& spec, Index m) {
  require_both(spec, m, m);
  return check_thm3_blocks(cc_block(spec, EstimatorMode::XOnly, m, 0), cc_block(spec, EstimatorMode::YOnly, 0, m));
}

LinearDgpSpec make_common_eigen_spec(const VectorXd& a, const VectorXd& b, Index d_x, Index d_y, double sigma,
                                     std::uint64_t seed, MatrixXd* q_out) {
  const Index d_c = a.size();
  if (d_c < 1 || b.size() != d_c) throw InvalidInput("a and b must have the same nonzero length");
  if ((a.array() < 0).any() || (b.array() < 0).any()) throw InvalidInput("eigenvalues must be nonnegative");
  if (d_x < 0 || d_y < 0) throw InvalidInput("d_x and d_y must be nonnegative");
  Rng rng(seed, {stream::kSpec});
  const MatrixXd q = random_orthonormal(rng, d_c, d_c);
  if (q_out) *q_out = q;

  LinearDgpSpec spec;
  spec.partition = {d_c, d_x, d_y};
  spec.sigma_x = sigma;
  spec.sigma_y = sigma;
  XDesign xd;
  xd.a_c = MatrixXd::Zero(d_c + d_x, d_c);
  xd.a_c.topRows(d_c) = a.cwiseSqrt().asDiagonal() * q.transpose();
  xd.a_x = MatrixXd::Zero(d_c + d_x, d_x);
  xd.a_x.bottomRows(d_x) = rng.normal_matrix(d_x, d_x);
  YDesign yd;
  yd.b_c = MatrixXd::Zero(d_c + d_y, d_c);
  yd.b_c.topRows(d_c) = b.cwiseSqrt().asDiagonal() * q.transpose();
  yd.b_y = MatrixXd::Zero(d_c + d_y, d_y);
  yd.b_y.bottomRows(d_y) = rng.normal_matrix(d_y, d_y);
  spec.x_designs.push_back(std::move(xd));
  spec.y_designs.push_back(std::move(yd));
  Rng theta_rng(seed, {stream::kTheta});
  spec.theta_true = theta_rng.normal_vector(spec.partition.total());
  validate(spec);
  return spec;
}

// ---- ensembles -------------------------------------------------------------

namespace {

struct ConfigResult {
  CheckOutcome outcome;
  std::string digest;
  std::map<std::string, double> reported;  // summed across configs
};

struct EnsembleSpec {
  LinearDgpSpec spec;
  Index n_x = 1;
  Index n_y = 1;
  MatrixXd x_projector;  // identity when X is full rank
};

// Random designs in the ensemble ranges. x_rank < d_c restricts every A_c to
// a shared rank-x_rank row space so cc_X is singular.
EnsembleSpec random_spec(Rng& rng, bool orthogonal, bool rank_deficient_x, Index min_d_c = 1) {
  EnsembleSpec e;
  const Index d_c = rng.integer(std::max<Index>(min_d_c, rank_deficient_x ? 2 : 1), 6);
  const Index d_x = rng.integer(0, 3);
  const Index d_y = rng.integer(0, 3);
  const Index m = rng.integer(d_c + d_x, 12);
  const Index n = rng.integer(d_c + d_y, 12);
  const Index slots_x = rng.integer(1, 3);
  const Index slots_y = rng.integer(1, 3);
  const std::uint64_t spec_seed = rng.engine()();
  const LatentPartition p{d_c, d_x, d_y};
  if (orthogonal) {
    e.spec = make_orthogonal_spec(p, m, n, slots_x, slots_y, 1.0, 1.0, spec_seed);
  } else {
    Rng srng(spec_seed);
    e.spec.partition = p;
    e.spec.theta_true = srng.normal_vector(p.total());
    for (Index s = 0; s < slots_x; ++s) e.spec.x_designs.push_back({srng.normal_matrix(m, d_c), srng.normal_matrix(m, d_x)});
    for (Index s = 0; s < slots_y; ++s) e.spec.y_designs.push_back({srng.normal_matrix(n, d_c), srng.normal_matrix(n, d_y)});
  }
  e.x_projector = MatrixXd::Identity(d_c, d_c);
  if (rank_deficient_x) {
    const Index r = rng.integer(1, d_c - 1);
    const MatrixXd u = random_orthonormal(rng, d_c, r);
    e.x_projector = u * u.transpose();
    // Column space only shrinks, so A_c^T A_x = 0 survives.
    for (auto& d : e.spec.x_designs) d.a_c = d.a_c * e.x_projector;
  }
  e.n_x = rng.integer(1, 2 * slots_x);
  e.n_y = rng.integer(1, 2 * slots_y);
  return e;
}

void add_profile_side_by_side(const EnsembleSpec& e, bool orthogonal, ConfigResult& out) {
  const MatrixXd px = cc_block(e.spec, EstimatorMode::XOnly, e.n_x, 0, true);
  const MatrixXd py = cc_block(e.spec, EstimatorMode::YOnly, 0, e.n_y, true);
  const MatrixXd bx = cc_block(e.spec, EstimatorMode::XOnly, e.n_x, 0);
  const MatrixXd by = cc_block(e.spec, EstimatorMode::YOnly, 0, e.n_y);
  out.reported["max_block_profile_gap"] = std::max((px - bx).norm(), (py - by).norm());
  if (!orthogonal) {
    const auto profile = check_thm1_blocks(px, py);
    out.reported["profile_passed"] = profile.status == CheckStatus::Passed ? 1.0 : 0.0;
    out.reported["profile_precondition_unmet"] = profile.status == CheckStatus::PreconditionUnmet ? 1.0 : 0.0;
  }
}

ConfigResult run_lemma1(Rng& rng) {
  const Index d = rng.integer(1, 6);
  const bool strict = rng.integer(0, 1) == 1;
  const MatrixXd m = random_pd(rng, d);
  MatrixXd n = m;
  if (strict) {
    const MatrixXd h = rng.normal_matrix(d, d);
    n += h * h.transpose() + rng.uniform(0.05, 1.0) * MatrixXd::Identity(d, d);
  } else {
    const MatrixXd h = rng.normal_matrix(d, rng.integer(0, d - 1));
    n += h * h.transpose();
  }
  return {check_order_reversal(m, n, strict), matrices_digest({&m, &n}), {}};
}

ConfigResult run_lemma2(Rng& rng) {
  const Index d = rng.integer(1, 6);
  const Index r = rng.integer(1, d);
  const MatrixXd u = random_orthonormal(rng, d, r);
  const MatrixXd base = random_pd(rng, r);
  const MatrixXd h = rng.normal_matrix(r, r);
  const MatrixXd gap = h * h.transpose() + rng.uniform(0.05, 1.0) * MatrixXd::Identity(r, r);
  const MatrixXd m = u * base * u.transpose();
  const MatrixXd n = u * (base + gap) * u.transpose();
  return {check_pinv_monotonicity(m, n), matrices_digest({&m, &n}), {}};
}

ConfigResult run_directional(Rng& rng) {
  const Index d = rng.integer(1, 6);
  const Index r = rng.integer(1, d);
  const MatrixXd m = random_pd(rng, d);
  const MatrixXd h = rng.normal_matrix(d, r);
  const MatrixXd n = m + h * h.transpose();
  VectorXd v;
  // Half the time (when possible) aim v so that (N - M) M^-1 v = 0.
  if (r < d && rng.integer(0, 1) == 1) {
    Eigen::HouseholderQR<MatrixXd> qr(h);
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(d, d);
    const VectorXd k = q.rightCols(d - r) * rng.normal_vector(d - r);
    v = m * k;
  } else {
    v = rng.normal_vector(d);
  }
  const MatrixXd vmat = v;
  auto rep = check_directional_lemma(m, n, v);
  ConfigResult out{rep.outcome, matrices_digest({&m, &n, &vmat}), {}};
  out.reported["strict_cases"] = rep.strict_expected ? 1.0 : 0.0;
  return out;
}

ConfigResult run_thm1(Rng& rng, bool orthogonal) {
  const bool deficient = rng.integer(0, 1) == 1;
  const auto e = random_spec(rng, orthogonal, deficient);
  ConfigResult out{check_thm1(e.spec, e.n_x, e.n_y), spec_digest(e.spec), {}};
  add_profile_side_by_side(e, orthogonal, out);
  return out;
}

ConfigResult run_thm2(Rng& rng, bool orthogonal, int which_case) {
  const bool deficient = which_case == 1 || rng.integer(0, 1) == 1;
  const auto e = random_spec(rng, orthogonal, deficient);
  const Index d_c = e.spec.partition.d_c;
  VectorXd v;
  if (which_case == 1) {
    const MatrixXd kernel = MatrixXd::Identity(d_c, d_c) - e.x_projector;
    v = kernel * rng.normal_vector(d_c) + rng.uniform(0.0, 1.0) * (e.x_projector * rng.normal_vector(d_c));
  } else {
    v = e.x_projector * rng.normal_vector(d_c);
  }
  const auto rep = check_thm2(e.spec, v, e.n_x, e.n_y);
  ConfigResult out{rep.outcome, spec_digest(e.spec), {}};
  if (rep.outcome.status != CheckStatus::PreconditionUnmet && rep.variance_case != which_case) {
    out.outcome = failed(-1.0, "direction landed in case " + std::to_string(rep.variance_case));
  }
  if (which_case == 2) out.reported["pinv_strict_reduction"] = rep.pinv_strict_reduction ? 1.0 : 0.0;
  add_profile_side_by_side(e, orthogonal, out);
  return out;
}

ConfigResult run_thm3(Rng& rng, bool orthogonal) {
  auto e = random_spec(rng, orthogonal, true);
  const Index m = rng.integer(1, 3);
  const auto rep = check_thm3(e.spec, m);
  return {rep.outcome, spec_digest(e.spec), {}};
}

ConfigResult run_contraction(Rng& rng) {
  const Index d_c = rng.integer(1, 6);
  VectorXd a(d_c), b(d_c);
  for (Index i = 0; i < d_c; ++i) {
    a(i) = rng.uniform(0.1, 10.0);
    b(i) = rng.uniform(0.1, 10.0);
  }
  MatrixXd q;
  const auto spec = make_common_eigen_spec(a, b, rng.integer(0, 3), rng.integer(0, 3), 1.0, rng.engine()(), &q);
  const Index k = rng.integer(0, d_c - 1);
  const MatrixXd cc_x = cc_block(spec, EstimatorMode::XOnly, 1, 0);
  const MatrixXd cc_y = cc_block(spec, EstimatorMode::YOnly, 0, 1);
  const double realized = realized_contraction(cc_x, cc_y, q.col(k));
  const double expected = contraction_factor(a(k), b(k));
  const double err = std::abs(realized - expected);
  ConfigResult out{err <= kContractionRel * expected ? passed(kContractionRel * expected - err)
                                                      : failed(-err, "ratio differs from a/(a+b)"),
                   spec_digest(spec), {}};
  out.reported["max_abs_error"] = err;
  return out;
}

ConfigResult run_rescue(Rng& rng, bool orthogonal) {
  const auto e = random_spec(rng, orthogonal, true);
  const Index d_c = e.spec.partition.d_c;
  const VectorXd v = (MatrixXd::Identity(d_c, d_c) - e.x_projector) * rng.normal_vector(d_c);
  const MatrixXd cc_x = cc_block(e.spec, EstimatorMode::XOnly, e.n_x, 0);
  const MatrixXd cc_y = cc_block(e.spec, EstimatorMode::YOnly, 0, e.n_y);
  return {check_rescue_blocks(cc_x, cc_y, v), spec_digest(e.spec), {}};
}

ConfigResult run_eigenvector(Rng& rng, bool orthogonal) {
  const bool deficient = rng.integer(0, 1) == 1;
  const auto e = random_spec(rng, orthogonal, deficient);
  const MatrixXd cc_x = cc_block(e.spec, EstimatorMode::XOnly, e.n_x, 0);
  const MatrixXd cc_y = cc_block(e.spec, EstimatorMode::YOnly, 0, e.n_y);
  const auto eig = sym_eig(cc_x);
  const Index rank = numerical_rank(cc_x);
  const Index k = rng.integer(0, std::max<Index>(rank, 1) - 1);
  ConfigResult out{check_eigenvector_blocks(cc_x, cc_y, eig.eigenvectors.col(k)), spec_digest(e.spec), {}};
  const auto t2 = check_thm2_blocks(cc_x, cc_y, eig.eigenvectors.col(k), true);
  out.reported["pinv_strict_reduction"] = t2.pinv_strict_reduction ? 1.0 : 0.0;
  return out;
}

ConfigResult run_config(const std::string& id, std::uint64_t config_seed, bool orthogonal) {
  Rng rng(config_seed);
  if (id == "lemma1_order_reversal") return run_lemma1(rng);
  if (id == "lemma2_pinv_monotonicity") return run_lemma2(rng);
  if (id == "directional_lemma") return run_directional(rng);
  if (id == "thm1") return run_thm1(rng, orthogonal);
  if (id == "thm2_case1") return run_thm2(rng, orthogonal, 1);
  if (id == "thm2_case2") return run_thm2(rng, orthogonal, 2);
  if (id == "thm3") return run_thm3(rng, orthogonal);
  if (id == "cor_variance_contraction") return run_contraction(rng);
  if (id == "cor_rescue_unidentifiable") return run_rescue(rng, orthogonal);
  if (id == "cor_eigenvector_reduction") return run_eigenvector(rng, orthogonal);
  throw InvalidInput("unknown theorem id '" + id + "'");
}

std::size_t theorem_index(const std::string& id) {
  const auto& ids = theorem_ids();
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw InvalidInput("unknown theorem id '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

TheoremReport fresh_report(const std::string& id) {
  TheoremReport r;
  r.theorem_id = id;
  r.tolerances = {{"strict_margin_rel", kStrictRel},
                  {"range_residual_rel", kRangeTol},
                  {"zero_form_rel", kZeroRel},
                  {"contraction_rel", kContractionRel}};
  return r;
}

void absorb(TheoremReport& report, const ConfigResult& c, std::uint64_t config_seed) {
  ++report.n_configs_tested;
  switch (c.outcome.status) {
    case CheckStatus::Passed: ++report.n_passed; break;
    case CheckStatus::PreconditionUnmet: ++report.n_precondition_unmet; break;
    case CheckStatus::Failed:
      report.failures.push_back({config_seed, c.digest, std::abs(c.outcome.margin), c.outcome.detail});
      break;
  }
  for (const auto& [k, v] : c.reported) {
    if (k.rfind("max_", 0) == 0) {
      report.reported[k] = std::max(report.reported[k], v);
    } else {
      report.reported[k] += v;
    }
  }
}

}  // namespace

const std::vector<std::string>& theorem_ids() {
  static const std::vector<std::string> ids = {
      "lemma1_order_reversal", "lemma2_pinv_monotonicity", "directional_lemma", "thm1", "thm2_case1",
      "thm2_case2",            "thm3",                     "cor_variance_contraction", "cor_rescue_unidentifiable",
      "cor_eigenvector_reduction"};
  return ids;
}

TheoremReport run_ensemble(const std::string& theorem_id, const EnsembleOptions& options) {
  if (options.configs < 1) throw InvalidInput("configs must be >= 1");
  const std::uint64_t tag = theorem_index(theorem_id);
  const auto n = static_cast<std::size_t>(options.configs);
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t k = 0; k < n; ++k) seeds[k] = derive_seed(options.seed, {stream::kEnsemble, tag, k});
  std::vector<ConfigResult> results(n);
  auto work = [&](unsigned w, unsigned stride) {
    for (std::size_t k = w; k < n; k += stride) results[k] = run_config(theorem_id, seeds[k], options.orthogonal);
  };
  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  TheoremReport report = fresh_report(theorem_id);
  for (std::size_t k = 0; k < n; ++k) absorb(report, results[k], seeds[k]);
  return report;
}

std::vector<TheoremReport> verify_theorems(const EnsembleOptions& options) {
  std::vector<TheoremReport> out;
  for (const auto& id : theorem_ids()) out.push_back(run_ensemble(id, options));
  return out;
}

TheoremReport replay_config(const std::string& theorem_id, std::uint64_t config_seed, bool orthogonal) {
  theorem_index(theorem_id);
  TheoremReport report = fresh_report(theorem_id);
  absorb(report, run_config(theorem_id, config_seed, orthogonal), config_seed);
  return report;
}

// ---- budget sweep -----------------------------------------------------------

Index BudgetCurve::argmin() const {
  Index best = -1;
  for (Index i = 0; i < static_cast<Index>(points.size()); ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    if (!p.identifiable) continue;
    if (best < 0 || p.crlb_trace < points[static_cast<std::size_t>(best)].crlb_trace) best = i;
  }
  return best;
}

BudgetCurve budget_sweep(const LinearDgpSpec& spec, Index total, const std::vector<double>& grid, std::uint64_t seed,
                         Index trials, unsigned workers) {
  validate(spec);
  if (total < 2) throw InvalidInput("total budget must be >= 2");
  if (grid.empty()) throw InvalidInput("allocation grid must be nonempty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw InvalidInput("grid fractions must lie in [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidInput("grid fractions must be strictly increasing");
  }
  if (trials == 1 || trials < 0) throw InvalidInput("trials must be 0 (analytic only) or >= 2");

  BudgetCurve curve;
  curve.total_budget = total;
  for (double f : grid) {
    BudgetPoint p;
    p.fraction = f;
    p.n_y = static_cast<Index>(std::llround(f * static_cast<double>(total)));
    p.n_x = total - p.n_y;
    const EstimatorMode mode = p.n_y == 0 ? EstimatorMode::XOnly : p.n_x == 0 ? EstimatorMode::YOnly : EstimatorMode::Joint;
    const bool needs_x = mode != EstimatorMode::YOnly;
    const bool needs_y = mode != EstimatorMode::XOnly;
    if ((needs_x && spec.x_designs.empty()) || (needs_y && spec.y_designs.empty())) {
      throw InvalidInput("allocation at fraction " + format_double(f) + " needs designs the spec does not have");
    }
    const bool scaled = estimator_weights(spec, mode).noise_scaled;
    const auto fisher = fisher_info(spec, mode, p.n_x, p.n_y, scaled);
    const MatrixXd profile = profile_information(fisher);
    p.identifiable = numerical_rank(profile) == spec.partition.d_c;
    p.crlb_trace = crlb_common(fisher, true).trace();
    if (trials > 0) p.mc_trace = monte_carlo_cov(spec, mode, p.n_x, p.n_y, trials, seed, workers).cov.trace();
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace uml
