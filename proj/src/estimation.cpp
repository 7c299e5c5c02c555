#include "uml/estimation.hpp"

#include <algorithm>
#include <string>
#include <thread>

#include "uml/errors.hpp"
#include "uml/matrix_kernels.hpp"
#include "uml/rng.hpp"

namespace uml {

const char* to_string(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::XOnly: return "x_only";
    case EstimatorMode::YOnly: return "y_only";
    case EstimatorMode::Joint: return "joint";
  }
  return "unknown";
}

namespace {

bool uses_x(EstimatorMode mode) { return mode != EstimatorMode::YOnly; }
bool uses_y(EstimatorMode mode) { return mode != EstimatorMode::XOnly; }

// Number of the first `count` samples that land on `slot` under round-robin.
Index slot_uses(Index count, Index slots, Index slot) { return count / slots + (slot < count % slots ? 1 : 0); }

Eigen::MatrixXd x_information(const LinearDgpSpec& spec, Index n_x) {
  const auto& p = spec.partition;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p.total(), p.total());
  const Index slots = static_cast<Index>(spec.x_designs.size());
  for (Index s = 0; s < slots && s < n_x; ++s) {
    const auto& d = spec.x_designs[static_cast<std::size_t>(s)];
    const double uses = static_cast<double>(slot_uses(n_x, slots, s));
    info.topLeftCorner(p.d_c, p.d_c) += uses * (d.a_c.transpose() * d.a_c);
    info.block(0, p.d_c, p.d_c, p.d_x) += uses * (d.a_c.transpose() * d.a_x);
    info.block(p.d_c, p.d_c, p.d_x, p.d_x) += uses * (d.a_x.transpose() * d.a_x);
  }
  info.block(p.d_c, 0, p.d_x, p.d_c) = info.block(0, p.d_c, p.d_c, p.d_x).transpose();
  return info;
}

Eigen::MatrixXd y_information(const LinearDgpSpec& spec, Index n_y) {
  const auto& p = spec.partition;
  const Index off = p.d_c + p.d_x;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p.total(), p.total());
  const Index slots = static_cast<Index>(spec.y_designs.size());
  for (Index s = 0; s < slots && s < n_y; ++s) {
    const auto& d = spec.y_designs[static_cast<std::size_t>(s)];
    const double uses = static_cast<double>(slot_uses(n_y, slots, s));
    info.topLeftCorner(p.d_c, p.d_c) += uses * (d.b_c.transpose() * d.b_c);
    info.block(0, off, p.d_c, p.d_y) += uses * (d.b_c.transpose() * d.b_y);
    info.block(off, off, p.d_y, p.d_y) += uses * (d.b_y.transpose() * d.b_y);
  }
  info.block(off, 0, p.d_y, p.d_c) = info.block(0, off, p.d_c, p.d_y).transpose();
  return info;
}

void check_mode_counts(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y) {
  if (n_x < 0 || n_y < 0) throw InvalidInput("sample counts must be nonnegative");
  if (uses_x(mode) && (n_x == 0 || spec.x_designs.empty())) {
    throw InvalidInput(std::string("mode ") + to_string(mode) + " needs at least one X sample");
  }
  if (uses_y(mode) && (n_y == 0 || spec.y_designs.empty())) {
    throw InvalidInput(std::string("mode ") + to_string(mode) + " needs at least one Y sample");
  }
}

// Adds weight * D_i^T obs_i for every row of the dataset.
void accumulate_rhs(const LinearDgpSpec& spec, const ModalityDataset& ds, double weight, Eigen::VectorXd& rhs) {
  const auto& p = spec.partition;
  for (Index i = 0; i < ds.size(); ++i) {
    const Index slot = ds.design_index[static_cast<std::size_t>(i)];
    const auto obs = ds.observations.row(i).transpose();
    if (ds.modality == Modality::X) {
      const auto& d = spec.x_designs[static_cast<std::size_t>(slot)];
      rhs.head(p.d_c).noalias() += weight * (d.a_c.transpose() * obs);
      rhs.segment(p.d_c, p.d_x).noalias() += weight * (d.a_x.transpose() * obs);
    } else {
      const auto& d = spec.y_designs[static_cast<std::size_t>(slot)];
      rhs.head(p.d_c).noalias() += weight * (d.b_c.transpose() * obs);
      rhs.tail(p.d_y).noalias() += weight * (d.b_y.transpose() * obs);
    }
  }
}

void check_dataset(const LinearDgpSpec& spec, const ModalityDataset& ds, Modality expected) {
  if (ds.modality != expected) throw InvalidInput(std::string("expected a ") + to_string(expected) + " dataset");
  if (ds.size() == 0) throw InvalidInput(std::string("empty ") + to_string(expected) + " dataset");
  const bool is_x = expected == Modality::X;
  const Index rows = is_x ? spec.x_rows() : spec.y_rows();
  const std::size_t slots = is_x ? spec.x_designs.size() : spec.y_designs.size();
  if (ds.observations.cols() != rows) throw InvalidInput("observation length does not match the design row count");
  if (ds.design_index.size() != static_cast<std::size_t>(ds.size())) {
    throw InvalidInput("design_index length must equal the number of observations");
  }
  for (Index idx : ds.design_index) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= slots) throw InvalidInput("design_index out of range");
  }
}

// Shared solver for a fixed (spec, mode, n_x, n_y): pinv of the weighted
// information is computed once and applied to each right-hand side.
struct NormalEquations {
  ModalityWeights weights;
  FisherBlocks fisher;
  Eigen::MatrixXd info_pinv;

  NormalEquations(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y)
      : weights(estimator_weights(spec, mode)),
        fisher(fisher_info(spec, mode, n_x, n_y, weights.noise_scaled)),
        info_pinv(pinv(fisher.full)) {}

  Eigen::VectorXd solve(const LinearDgpSpec& spec, const ModalityDataset* x, const ModalityDataset* y) const {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(spec.partition.total());
    if (x) accumulate_rhs(spec, *x, weights.x, rhs);
    if (y) accumulate_rhs(spec, *y, weights.y, rhs);
    return info_pinv * rhs;
  }
};

EstimatorResult estimate(const LinearDgpSpec& spec, EstimatorMode mode, const ModalityDataset* x,
                         const ModalityDataset* y) {
  validate(spec);
  if (x) check_dataset(spec, *x, Modality::X);
  if (y) check_dataset(spec, *y, Modality::Y);
  const Index n_x = x ? x->size() : 0;
  const Index n_y = y ? y->size() : 0;
  check_mode_counts(spec, mode, n_x, n_y);
  // Information is accumulated from the datasets' own design indices, so
  // non round-robin datasets are handled exactly.
  const ModalityWeights weights = estimator_weights(spec, mode);

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(spec.partition.total(), spec.partition.total());
  Eigen::MatrixXd noise_info = info;
  auto add_rows = [&](const ModalityDataset& ds, double weight, double sigma) {
    for (Index i = 0; i < ds.size(); ++i) {
      const Index slot = ds.design_index[static_cast<std::size_t>(i)];
      Eigen::MatrixXd row_design = Eigen::MatrixXd::Zero(ds.observations.cols(), spec.partition.total());
      const auto& p = spec.partition;
      if (ds.modality == Modality::X) {
        const auto& d = spec.x_designs[static_cast<std::size_t>(slot)];
        row_design.leftCols(p.d_c) = d.a_c;
        row_design.middleCols(p.d_c, p.d_x) = d.a_x;
      } else {
        const auto& d = spec.y_designs[static_cast<std::size_t>(slot)];
        row_design.leftCols(p.d_c) = d.b_c;
        row_design.rightCols(p.d_y) = d.b_y;
      }
      const Eigen::MatrixXd g = row_design.transpose() * row_design;
      info += weight * g;
      noise_info += weight * weight * sigma * sigma * g;
    }
  };
  if (x) add_rows(*x, weights.x, spec.sigma_x);
  if (y) add_rows(*y, weights.y, spec.sigma_y);

  EstimatorResult r;
  r.mode = mode;
  r.fisher.partition = spec.partition;
  r.fisher.mode = mode;
  r.fisher.noise_scaled = weights.noise_scaled;
  r.fisher.full = (info + info.transpose()) / 2.0;
  const Eigen::MatrixXd info_pinv = pinv(r.fisher.full);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(spec.partition.total());
  if (x) accumulate_rhs(spec, *x, weights.x, rhs);
  if (y) accumulate_rhs(spec, *y, weights.y, rhs);
  r.theta_hat = info_pinv * rhs;

  const Index d = spec.partition.total();
  r.identifiable_mask.resize(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    r.identifiable_mask[static_cast<std::size_t>(k)] =
        r.fisher.full.norm() > 0 && range_contains(r.fisher.full, Eigen::VectorXd::Unit(d, k), 1e-9);
  }
  if (weights.noise_scaled) {
    r.cov_cc = crlb_common(r.fisher, /*profile=*/true);
  } else {
    // Sandwich form covers zero or unequal noise with unweighted normal equations.
    const Eigen::MatrixXd full_cov = info_pinv * noise_info * info_pinv;
    r.cov_cc = full_cov.topLeftCorner(spec.partition.d_c, spec.partition.d_c);
    r.cov_cc = (r.cov_cc + r.cov_cc.transpose()) / 2.0;
  }
  return r;
}

}  // namespace

FisherBlocks fisher_info(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y, bool noise_scaled) {
  validate(spec);
  check_mode_counts(spec, mode, n_x, n_y);
  FisherBlocks f;
  f.partition = spec.partition;
  f.mode = mode;
  f.noise_scaled = noise_scaled;
  const Index d = spec.partition.total();
  Eigen::MatrixXd ix = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd iy = Eigen::MatrixXd::Zero(d, d);
  if (uses_x(mode)) {
    ix = x_information(spec, n_x);
    if (noise_scaled) {
      if (!(spec.sigma_x > 0)) throw InvalidInput("noise-scaled information needs sigma_x > 0");
      ix /= spec.sigma_x * spec.sigma_x;
    }
  }
  if (uses_y(mode)) {
    iy = y_information(spec, n_y);
    if (noise_scaled) {
      if (!(spec.sigma_y > 0)) throw InvalidInput("noise-scaled information needs sigma_y > 0");
      iy /= spec.sigma_y * spec.sigma_y;
    }
  }
  f.full = ix + iy;
  return f;
}

Eigen::MatrixXd profile_information(const FisherBlocks& fisher) {
  const auto& p = fisher.partition;
  const Index nuisance = p.d_x + p.d_y;
  Eigen::MatrixXd cc = fisher.cc();
  if (nuisance == 0 || p.d_c == 0) return cc;
  const Eigen::MatrixXd n_block = fisher.full.bottomRightCorner(nuisance, nuisance);
  const Eigen::MatrixXd coupling = fisher.full.topRightCorner(p.d_c, nuisance);
  if (coupling.isZero(0.0) || n_block.isZero(0.0)) return cc;
  Eigen::MatrixXd schur = cc - coupling * pinv(n_block) * coupling.transpose();
  return (schur + schur.transpose()) / 2.0;
}

Eigen::MatrixXd crlb_common(const FisherBlocks& fisher, bool profile) {
  const Index d_c = fisher.partition.d_c;
  if (d_c == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::MatrixXd info = profile ? profile_information(fisher) : Eigen::MatrixXd(fisher.cc());
  if (info.isZero(0.0)) return Eigen::MatrixXd::Zero(d_c, d_c);
  return pinv(info);
}

bool EstimatorResult::theta_c_identifiable() const {
  const Index d_c = fisher.partition.d_c;
  return std::all_of(identifiable_mask.begin(), identifiable_mask.begin() + d_c, [](bool b) { return b; });
}

ModalityWeights estimator_weights(const LinearDgpSpec& spec, EstimatorMode mode) {
  ModalityWeights w;
  const bool x_ok = !uses_x(mode) || spec.sigma_x > 0;
  const bool y_ok = !uses_y(mode) || spec.sigma_y > 0;
  if (x_ok && y_ok) {
    w.noise_scaled = true;
    if (uses_x(mode)) w.x = 1.0 / (spec.sigma_x * spec.sigma_x);
    if (uses_y(mode)) w.y = 1.0 / (spec.sigma_y * spec.sigma_y);
  }
  return w;
}

EstimatorResult estimate_x_only(const ModalityDataset& x, const LinearDgpSpec& spec) {
  return estimate(spec, EstimatorMode::XOnly, &x, nullptr);
}

EstimatorResult estimate_y_only(const ModalityDataset& y, const LinearDgpSpec& spec) {
  return estimate(spec, EstimatorMode::YOnly, nullptr, &y);
}

EstimatorResult estimate_joint(const ModalityDataset& x, const ModalityDataset& y, const LinearDgpSpec& spec) {
  return estimate(spec, EstimatorMode::Joint, &x, &y);
}

MonteCarloResult monte_carlo_cov(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y, Index trials,
                                 std::uint64_t seed, unsigned workers) {
  if (trials < 2) throw InvalidInput("monte_carlo_cov needs at least 2 trials");
  validate(spec);
  check_mode_counts(spec, mode, n_x, n_y);
  const Index d_c = spec.partition.d_c;
  const Index nx = uses_x(mode) ? n_x : 0;
  const Index ny = uses_y(mode) ? n_y : 0;
  const NormalEquations eq(spec, mode, nx, ny);

  Eigen::MatrixXd estimates(trials, d_c);
  auto run_range = [&](unsigned worker, unsigned stride) {
    for (Index t = worker; t < trials; t += stride) {
      const DatasetPair data = sample_datasets(spec, nx, ny, derive_seed(seed, {stream::kTrial, static_cast<std::uint64_t>(t)}));
      const Eigen::VectorXd theta = eq.solve(spec, nx ? &data.x : nullptr, ny ? &data.y : nullptr);
      estimates.row(t) = theta.head(d_c).transpose();
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
  }

  // Welford in trial order: identical inputs give an exactly zero covariance.
  MonteCarloResult r;
  r.trials = trials;
  r.mean = Eigen::VectorXd::Zero(d_c);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(d_c, d_c);
  for (Index t = 0; t < trials; ++t) {
    const Eigen::VectorXd xt = estimates.row(t).transpose();
    const Eigen::VectorXd delta = xt - r.mean;
    r.mean += delta / static_cast<double>(t + 1);
    m2.noalias() += delta * (xt - r.mean).transpose();
  }
  r.cov = (m2 + m2.transpose()) / (2.0 * static_cast<double>(trials - 1));
  return r;
}

}  // namespace uml
