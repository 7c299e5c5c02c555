#include "uml/dgp.hpp"

#include <cmath>
#include <string>

#include "uml/errors.hpp"
#include "uml/rng.hpp"

namespace uml {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

// Column space of `cols` with everything in range(basis_cols) removed.
Eigen::MatrixXd orthogonal_complement_part(const Eigen::MatrixXd& basis_cols, const Eigen::MatrixXd& cols) {
  if (basis_cols.cols() == 0 || cols.cols() == 0) return cols;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis_cols);
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(basis_cols.rows(), basis_cols.cols());
  Eigen::MatrixXd out = cols - q * (q.transpose() * cols);
  // Second pass keeps the cross product at rounding level.
  out -= q * (q.transpose() * out);
  return out;
}

}  // namespace

void validate(const LinearDgpSpec& spec) {
  const auto& p = spec.partition;
  require(p.d_c >= 0 && p.d_x >= 0 && p.d_y >= 0 && p.total() >= 1, "latent partition must be nonnegative and nonempty");
  require(spec.theta_true.size() == p.total(), "theta_true length must equal d_c + d_x + d_y");
  require(spec.theta_true.allFinite(), "theta_true must be finite");
  require(!spec.x_designs.empty() || !spec.y_designs.empty(), "at least one design list must be nonempty");
  require(std::isfinite(spec.sigma_x) && spec.sigma_x >= 0, "sigma_x must be finite and >= 0");
  require(std::isfinite(spec.sigma_y) && spec.sigma_y >= 0, "sigma_y must be finite and >= 0");
  const Index m = spec.x_rows();
  for (const auto& d : spec.x_designs) {
    require(d.a_c.rows() == m && d.a_x.rows() == m, "X design blocks must share a row count");
    require(d.a_c.cols() == p.d_c && d.a_x.cols() == p.d_x, "X design block column counts must match the partition");
    require(d.a_c.allFinite() && d.a_x.allFinite(), "X design blocks must be finite");
  }
  const Index n = spec.y_rows();
  for (const auto& d : spec.y_designs) {
    require(d.b_c.rows() == n && d.b_y.rows() == n, "Y design blocks must share a row count");
    require(d.b_c.cols() == p.d_c && d.b_y.cols() == p.d_y, "Y design block column counts must match the partition");
    require(d.b_c.allFinite() && d.b_y.allFinite(), "Y design blocks must be finite");
  }
}

namespace {

template <typename MeanFn>
ModalityDataset sample_modality(Modality modality, Index count, Index rows, Index slots, double sigma,
                                std::uint64_t seed, std::uint64_t tag, MeanFn&& mean) {
  ModalityDataset ds;
  ds.modality = modality;
  ds.observations.resize(count, rows);
  ds.design_index.resize(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    Rng rng(seed, {tag, static_cast<std::uint64_t>(i)});
    const Index slot = i % slots;
    ds.design_index[static_cast<std::size_t>(i)] = slot;
    Eigen::VectorXd obs = mean(slot, rng);
    for (Index r = 0; r < rows; ++r) obs(r) += sigma * rng.normal();
    ds.observations.row(i) = obs.transpose();
  }
  return ds;
}

void check_counts(const LinearDgpSpec& spec, Index n_x, Index n_y) {
  require(n_x >= 0 && n_y >= 0, "sample counts must be nonnegative");
  require(n_x == 0 || !spec.x_designs.empty(), "X samples requested but the spec has no X designs");
  require(n_y == 0 || !spec.y_designs.empty(), "Y samples requested but the spec has no Y designs");
}

}  // namespace

DatasetPair sample_datasets(const LinearDgpSpec& spec, Index n_x, Index n_y, std::uint64_t seed) {
  validate(spec);
  check_counts(spec, n_x, n_y);
  const Eigen::VectorXd tc = spec.theta_c(), tx = spec.theta_x(), ty = spec.theta_y();
  DatasetPair out;
  out.x = sample_modality(Modality::X, n_x, spec.x_rows(), static_cast<Index>(spec.x_designs.size()), spec.sigma_x,
                          seed, stream::kSampleX, [&](Index slot, Rng&) -> Eigen::VectorXd {
                            const auto& d = spec.x_designs[static_cast<std::size_t>(slot)];
                            return d.a_c * tc + d.a_x * tx;
                          });
  out.y = sample_modality(Modality::Y, n_y, spec.y_rows(), static_cast<Index>(spec.y_designs.size()), spec.sigma_y,
                          seed, stream::kSampleY, [&](Index slot, Rng&) -> Eigen::VectorXd {
                            const auto& d = spec.y_designs[static_cast<std::size_t>(slot)];
                            return d.b_c * tc + d.b_y * ty;
                          });
  return out;
}

DatasetPair sample_latent_datasets(const LinearDgpSpec& spec, Index n_x, Index n_y, std::uint64_t seed) {
  validate(spec);
  check_counts(spec, n_x, n_y);
  const auto& p = spec.partition;
  DatasetPair out;
  out.x = sample_modality(Modality::X, n_x, spec.x_rows(), static_cast<Index>(spec.x_designs.size()), spec.sigma_x,
                          seed, stream::kSampleX, [&](Index slot, Rng& rng) -> Eigen::VectorXd {
                            const auto& d = spec.x_designs[static_cast<std::size_t>(slot)];
                            const Eigen::VectorXd tc = rng.normal_vector(p.d_c);
                            const Eigen::VectorXd tx = rng.normal_vector(p.d_x);
                            return d.a_c * tc + d.a_x * tx;
                          });
  out.y = sample_modality(Modality::Y, n_y, spec.y_rows(), static_cast<Index>(spec.y_designs.size()), spec.sigma_y,
                          seed, stream::kSampleY, [&](Index slot, Rng& rng) -> Eigen::VectorXd {
                            const auto& d = spec.y_designs[static_cast<std::size_t>(slot)];
                            const Eigen::VectorXd tc = rng.normal_vector(p.d_c);
                            const Eigen::VectorXd ty = rng.normal_vector(p.d_y);
                            return d.b_c * tc + d.b_y * ty;
                          });
  return out;
}

LinearDgpSpec make_orthogonal_spec(LatentPartition partition, Index m, Index n, Index n_slots_x, Index n_slots_y,
                                   double sigma_x, double sigma_y, std::uint64_t seed) {
  require(partition.d_c >= 0 && partition.d_x >= 0 && partition.d_y >= 0 && partition.total() >= 1,
          "latent partition must be nonnegative and nonempty");
  require(n_slots_x >= 0 && n_slots_y >= 0 && n_slots_x + n_slots_y >= 1, "need at least one design slot");
  require(n_slots_x == 0 || m >= partition.d_c + partition.d_x, "X rows m must be >= d_c + d_x");
  require(n_slots_y == 0 || n >= partition.d_c + partition.d_y, "Y rows n must be >= d_c + d_y");

  LinearDgpSpec spec;
  spec.partition = partition;
  spec.sigma_x = sigma_x;
  spec.sigma_y = sigma_y;
  Rng theta_rng(seed, {stream::kTheta});
  spec.theta_true = theta_rng.normal_vector(partition.total());
  for (Index s = 0; s < n_slots_x; ++s) {
    Rng rng(seed, {stream::kSpec, 0, static_cast<std::uint64_t>(s)});
    XDesign d;
    d.a_c = rng.normal_matrix(m, partition.d_c);
    d.a_x = orthogonal_complement_part(d.a_c, rng.normal_matrix(m, partition.d_x));
    spec.x_designs.push_back(std::move(d));
  }
  for (Index s = 0; s < n_slots_y; ++s) {
    Rng rng(seed, {stream::kSpec, 1, static_cast<std::uint64_t>(s)});
    YDesign d;
    d.b_c = rng.normal_matrix(n, partition.d_c);
    d.b_y = orthogonal_complement_part(d.b_c, rng.normal_matrix(n, partition.d_y));
    spec.y_designs.push_back(std::move(d));
  }
  validate(spec);
  return spec;
}

AttenuatedSpecPair make_attenuated_gaussian_spec(std::uint64_t seed, const AttenuatedSpecOptions& options) {
  const auto& o = options;
  require(o.d_c >= 1 && o.d_x >= 0 && o.d_y >= 0 && o.obs_dim >= 1, "invalid attenuated spec dimensions");
  require(o.noise_variance >= 0, "noise variance must be nonnegative");
  const LatentPartition partition{o.d_c, o.d_x, o.d_y};
  const double scale = o.entry_scale > 0 ? o.entry_scale : 1.0 / std::sqrt(static_cast<double>(partition.total()));

  Rng rng(seed, {stream::kSpec});
  const Eigen::MatrixXd a_c = scale * rng.normal_matrix(o.obs_dim, o.d_c);
  const Eigen::MatrixXd a_x = scale * rng.normal_matrix(o.obs_dim, o.d_x);
  const Eigen::MatrixXd b_c_drawn = scale * rng.normal_matrix(o.obs_dim, o.d_c);
  const Eigen::MatrixXd b_y = scale * rng.normal_matrix(o.obs_dim, o.d_y);
  const Eigen::MatrixXd b_c = o.shared_projection ? a_c : b_c_drawn;

  AttenuatedSpecPair out;
  out.options = o;
  out.full_strength_columns = static_cast<Index>(std::ceil(o.full_strength_fraction * static_cast<double>(o.d_c) - 1e-9));
  Eigen::VectorXd gains = Eigen::VectorXd::Constant(o.d_c, o.attenuation);
  gains.head(std::min(out.full_strength_columns, o.d_c)).setOnes();

  Rng theta_rng(seed, {stream::kTheta});
  const Eigen::VectorXd theta = theta_rng.normal_vector(partition.total());
  const double sigma = std::sqrt(o.noise_variance);

  auto build = [&](const Eigen::VectorXd& x_gains) {
    LinearDgpSpec spec;
    spec.partition = partition;
    spec.theta_true = theta;
    spec.sigma_x = sigma;
    spec.sigma_y = sigma;
    spec.x_designs.push_back({a_c * x_gains.asDiagonal(), a_x});
    spec.y_designs.push_back({b_c, b_y});
    return spec;
  };
  out.train = build(gains);
  out.validation = build(Eigen::VectorXd::Ones(o.d_c));
  return out;
}

}  // namespace uml
