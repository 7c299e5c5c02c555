#pragma once

// Least-squares estimators for the linear multimodal model and the block
// Fisher information they are governed by. Parameter ordering everywhere is
// [theta_c, theta_x, theta_y].

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "uml/dgp.hpp"

namespace uml {

enum class EstimatorMode { XOnly, YOnly, Joint };

const char* to_string(EstimatorMode mode);

struct FisherBlocks {
  Eigen::MatrixXd full;
  LatentPartition partition;
  EstimatorMode mode = EstimatorMode::Joint;
  bool noise_scaled = false;

  auto cc() const { return full.topLeftCorner(partition.d_c, partition.d_c); }
  auto xx() const { return full.block(partition.d_c, partition.d_c, partition.d_x, partition.d_x); }
  auto yy() const { return full.bottomRightCorner(partition.d_y, partition.d_y); }
  auto cx() const { return full.block(0, partition.d_c, partition.d_c, partition.d_x); }
  auto cy() const { return full.topRightCorner(partition.d_c, partition.d_y); }
};

// Exact block assembly over the first n_x X samples and n_y Y samples
// (design slots cycle). noise_scaled divides each modality by sigma^2.
// Joint is computed as the sum of the X and Y contributions.
FisherBlocks fisher_info(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y, bool noise_scaled);

// Covariance floor on theta_c: pinv of the cc block (profile = false) or of
// the Schur complement cc - C pinv(N) C^T eliminating theta_x, theta_y.
Eigen::MatrixXd crlb_common(const FisherBlocks& fisher, bool profile);

// Schur complement of the nuisance blocks; the effective information on theta_c.
Eigen::MatrixXd profile_information(const FisherBlocks& fisher);

struct EstimatorResult {
  EstimatorMode mode = EstimatorMode::Joint;
  // Minimum-norm solution. Entries with identifiable_mask false are not
  // estimates of anything and must not be read as such.
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd cov_cc;  // profile covariance of theta_c (noise-scaled when sigma > 0)
  std::vector<bool> identifiable_mask;
  FisherBlocks fisher;

  bool theta_c_identifiable() const;
};

// Each mode takes only the data it is allowed to read.
EstimatorResult estimate_x_only(const ModalityDataset& x, const LinearDgpSpec& spec);
EstimatorResult estimate_y_only(const ModalityDataset& y, const LinearDgpSpec& spec);
EstimatorResult estimate_joint(const ModalityDataset& x, const ModalityDataset& y, const LinearDgpSpec& spec);

// Per-modality weights used in the normal equations: 1/sigma^2 when every
// active modality has positive noise, otherwise 1 (plain least squares).
struct ModalityWeights {
  double x = 1.0;
  double y = 1.0;
  bool noise_scaled = false;
};
ModalityWeights estimator_weights(const LinearDgpSpec& spec, EstimatorMode mode);

struct MonteCarloResult {
  Eigen::MatrixXd cov;   // sample covariance of theta_c-hat (divisor trials - 1)
  Eigen::VectorXd mean;  // sample mean of theta_c-hat
  Index trials = 0;
};

// Independent trials (trial t samples with seed derived from (seed, t)); the
// per-trial estimates are reduced in trial order, so the result does not
// depend on the worker count.
MonteCarloResult monte_carlo_cov(const LinearDgpSpec& spec, EstimatorMode mode, Index n_x, Index n_y, Index trials,
                                 std::uint64_t seed, unsigned workers = 1);

}  // namespace uml
