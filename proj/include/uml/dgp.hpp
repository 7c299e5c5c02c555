#pragma once

// Linear multimodal data-generating process:
//   X_i = A_c,i theta_c + A_x,i theta_x + eps_x,   eps_x ~ N(0, sigma_x^2 I_m)
//   Y_j = B_c,j theta_c + B_y,j theta_y + eps_y,   eps_y ~ N(0, sigma_y^2 I_n)
// Design slots are reused round-robin when there are more samples than slots.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace uml {

using Eigen::Index;

struct LatentPartition {
  Index d_c = 0;
  Index d_x = 0;
  Index d_y = 0;

  Index total() const { return d_c + d_x + d_y; }
  bool operator==(const LatentPartition&) const = default;
};

struct XDesign {
  Eigen::MatrixXd a_c;  // m x d_c
  Eigen::MatrixXd a_x;  // m x d_x
};

struct YDesign {
  Eigen::MatrixXd b_c;  // n x d_c
  Eigen::MatrixXd b_y;  // n x d_y
};

struct LinearDgpSpec {
  LatentPartition partition;
  Eigen::VectorXd theta_true;  // [theta_c, theta_x, theta_y]
  std::vector<XDesign> x_designs;
  std::vector<YDesign> y_designs;
  double sigma_x = 1.0;
  double sigma_y = 1.0;

  Index x_rows() const { return x_designs.empty() ? 0 : x_designs.front().a_c.rows(); }
  Index y_rows() const { return y_designs.empty() ? 0 : y_designs.front().b_c.rows(); }
  auto theta_c() const { return theta_true.head(partition.d_c); }
  auto theta_x() const { return theta_true.segment(partition.d_c, partition.d_x); }
  auto theta_y() const { return theta_true.tail(partition.d_y); }
};

// Throws InvalidInput when shapes disagree, noise is negative or non-finite,
// or both design lists are empty. Zero noise is accepted (noiseless runs).
void validate(const LinearDgpSpec& spec);

enum class Modality { X, Y };

inline const char* to_string(Modality m) { return m == Modality::X ? "X" : "Y"; }

struct ModalityDataset {
  Modality modality = Modality::X;
  Eigen::MatrixXd observations;     // one observation per row
  std::vector<Index> design_index;  // slot that generated each row

  Index size() const { return observations.rows(); }
};

struct DatasetPair {
  ModalityDataset x;
  ModalityDataset y;
};

// Fixed-parameter sampling: every row uses spec.theta_true. X and Y come
// from independent sub-streams; sample i of a modality depends only on
// (seed, modality, i).
DatasetPair sample_datasets(const LinearDgpSpec& spec, Index n_x, Index n_y, std::uint64_t seed);

// Latent-per-sample sampling used by the autoencoder experiment: each row
// draws its own theta ~ N(0, I) and pushes it through the spec's projections.
DatasetPair sample_latent_datasets(const LinearDgpSpec& spec, Index n_x, Index n_y, std::uint64_t seed);

// Random designs with A_c^T A_x = 0 and B_c^T B_y = 0 per slot. Entries are
// standard normal before orthogonalization; theta_true ~ N(0, I).
LinearDgpSpec make_orthogonal_spec(LatentPartition partition, Index m, Index n, Index n_slots_x,
                                   Index n_slots_y, double sigma_x, double sigma_y, std::uint64_t seed);

struct AttenuatedSpecOptions {
  Index d_c = 10;
  Index d_x = 5;
  Index d_y = 5;
  Index obs_dim = 50;
  double noise_variance = 0.09;
  double full_strength_fraction = 0.1;
  double attenuation = 0.05;
  // Projection entries are N(0, entry_scale^2); a non-positive value selects
  // 1/sqrt(d_c + d_x + d_y).
  double entry_scale = 1.0;
  // When true, X and Y share one unattenuated theta_c projection.
  bool shared_projection = false;
};

struct AttenuatedSpecPair {
  LinearDgpSpec train;       // X shared columns beyond the first ones attenuated
  LinearDgpSpec validation;  // identical projections, no attenuation
  AttenuatedSpecOptions options;
  Index full_strength_columns = 0;
};

AttenuatedSpecPair make_attenuated_gaussian_spec(std::uint64_t seed, const AttenuatedSpecOptions& options = {});

}  // namespace uml
