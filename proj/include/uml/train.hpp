#pragma once

// Shared-weight training across unpaired modalities: supervised training with
// a shared classifier, the causal-window self-supervised variant, and the
// attenuated-Gaussian shared autoencoder.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "uml/dgp.hpp"
#include "uml/neural.hpp"

namespace uml {

// f_X, f_Y -> h -> heads. The trunk h is the only part both modalities update.
struct SharedNet {
  DenseNet adapter_x;
  DenseNet adapter_y;
  DenseNet trunk;
  DenseNet head_x;  // decoder g_X, or the shared classifier c
  DenseNet head_y;  // decoder g_Y; unused when shared_head
  bool shared_head = true;

  const DenseNet& head_for(Modality m) const { return (m == Modality::X || shared_head) ? head_x : head_y; }
  DenseNet& head_for(Modality m) { return (m == Modality::X || shared_head) ? head_x : head_y; }
  const DenseNet& adapter_for(Modality m) const { return m == Modality::X ? adapter_x : adapter_y; }
  DenseNet& adapter_for(Modality m) { return m == Modality::X ? adapter_x : adapter_y; }
  void validate() const;
};

struct SharedNetShape {
  Index input_x = 0;
  Index input_y = 0;
  std::vector<Index> trunk_dims;  // {Z, ..., trunk output}
  std::vector<Activation> trunk_activations;
  Index head_out = 0;    // classes, or reconstruction dim for head_x
  Index head_y_out = 0;  // reconstruction dim for head_y (0: shared head)
};

// Each parameter group draws from its own stream (seed, kInit, group), so the
// X pathway initializes identically whether or not Y is ever used.
SharedNet make_shared_net(const SharedNetShape& shape, std::uint64_t seed);

// Per-group gradients of one modality's loss. Groups the modality never
// touches stay exactly zero.
struct GroupGrads {
  NetGrad adapter_x;
  NetGrad adapter_y;
  NetGrad trunk;
  NetGrad head_x;
  NetGrad head_y;

  static GroupGrads zeros_like(const SharedNet& net);
  void add(const GroupGrads& other, double scale);
};

struct ModalLoss {
  double value = 0.0;
  GroupGrads grads;
};

// Cross-entropy of head(trunk(adapter_m(x))) against labels.
ModalLoss classification_loss(const SharedNet& net, Modality m, const Eigen::MatrixXd& x, const std::vector<int>& labels);
// Reconstruction MSE of head_m(trunk(adapter_m(x))) against x.
ModalLoss reconstruction_loss(const SharedNet& net, Modality m, const Eigen::MatrixXd& x);

Eigen::MatrixXd embed(const SharedNet& net, Modality m, const Eigen::MatrixXd& x);  // trunk output
Eigen::MatrixXd logits(const SharedNet& net, Modality m, const Eigen::MatrixXd& x);
double accuracy(const SharedNet& net, Modality m, const Eigen::MatrixXd& x, const std::vector<int>& labels);

enum class HeadInit { Zero, Random, ClassMeanAuxiliary };
const char* to_string(HeadInit h);
HeadInit head_init_from_string(const std::string& s);

struct TrainConfig {
  double lambda = 1.0;
  double batch_ratio = 1.0;  // auxiliary batches per primary batch
  Index epochs = 1000;
  Index batch_size = 16;
  std::uint64_t seed = 0;
  Index curriculum_step = 0;  // leading epochs that use X only
  HeadInit head_init = HeadInit::Random;
  bool freeze_adapter_x = false;
  bool freeze_adapter_y = false;
  AdamConfig adam;

  void validate() const;
};

struct LabeledData {
  Eigen::MatrixXd x;
  std::vector<int> labels;
};

struct EpochLosses {
  double x = 0.0;
  double y = 0.0;  // 0 when no auxiliary batch ran in the epoch
  Index y_batches = 0;
};

struct TrainReport {
  std::vector<EpochLosses> epochs;
  double x_test_accuracy = 0.0;  // supervised runs
  double x_val_mse = 0.0;        // autoencoder runs
  double y_val_mse = 0.0;
  std::string parameter_digest;
  std::string schedule_digest;            // digest of every batch's row indices
  std::vector<int> aux_batches_per_step;  // k for each primary step
  Index steps = 0;
};

// Row k = mean of the rows of `embeddings` labelled k; bias zero.
DenseLayer init_head_from_class_means(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, Index classes);

// Each step takes one X batch and k auxiliary batches (k = floor(r), plus one
// with probability frac(r)), and applies one Adam update to
// loss_x + lambda * mean(loss_y over the k batches). Auxiliary batches are
// skipped entirely when lambda = 0, aux is empty or during the curriculum.
// X order, Y order and the k draws use separate random streams.
TrainReport train_supervised(SharedNet& net, const LabeledData& train_x, const LabeledData* train_y,
                             const LabeledData& test_x, const TrainConfig& cfg);

std::string parameter_digest(const SharedNet& net);

// ---- synthetic supervised task ------------------------------------------

struct SupervisedTaskOptions {
  Index classes = 10;
  Index latent_dim = 16;
  Index embed_x = 32;
  Index embed_y = 32;
  Index shots_x = 2;       // X training samples per class
  Index aux_per_class = 50;
  Index test_per_class = 50;
  double share = 0.8;      // weight of the common component of the two modality maps
  double jitter_x = 1.0;   // within-class latent spread for X
  double jitter_y = 0.5;   // within-class latent spread for Y
  double noise = 0.5;      // observation noise
};

struct SupervisedTask {
  LabeledData train_x;
  LabeledData test_x;
  LabeledData train_y;
  SupervisedTaskOptions options;
};

// Class means mu_k ~ N(0, I); samples are P_m (mu_k + jitter) + noise with
// P_m = sqrt(share) M + sqrt(1 - share) R_m. shuffled_aux relabels the
// auxiliary data through a random derangement of the classes.
SupervisedTask make_supervised_task(std::uint64_t seed, const SupervisedTaskOptions& options, bool shuffled_aux = false);

// Maps every label through one random permutation with no fixed points.
void relabel_derangement(std::vector<int>& labels, Index classes, std::uint64_t seed);

struct SupervisedArchitecture {
  Index embed = 32;
  std::vector<Index> trunk_hidden;  // empty: a single Z -> Z ReLU layer
};
SharedNetShape supervised_shape(const SupervisedTask& task, const SupervisedArchitecture& arch = {});

// ---- Gaussian autoencoder ---------------------------------------------------

struct GaussianExpConfig {
  AttenuatedSpecOptions spec;
  Index n_unimodal = 10000;
  Index n_joint_x = 5000;
  Index n_joint_y = 5000;
  Index n_validation = 2000;
  Index common_dim = 128;
  Index hidden_dim = 128;
  Index latent_dim = 10;
  Index epochs = 200;
  Index batch_size = 128;
  AdamConfig adam;

  void validate() const;
};

struct GaussianArmResult {
  TrainReport report;
  double x_val_mse = 0.0;
};

struct GaussianSeedResult {
  std::uint64_t seed = 0;
  GaussianArmResult unimodal;
  GaussianArmResult joint;
};

// Trains the shared autoencoder on X alone (n_unimodal) and on unpaired X+Y
// (n_joint_x + n_joint_y) with identical initialization, and reports X
// reconstruction MSE on the unattenuated validation spec.
GaussianSeedResult train_shared_autoencoder(const GaussianExpConfig& cfg, std::uint64_t seed);

SharedNetShape autoencoder_shape(const GaussianExpConfig& cfg);

// One autoencoder arm; y may be null. Every epoch walks the X data once in
// batches; each X step is followed by one Y step when Y is present.
TrainReport train_autoencoder_arm(SharedNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd* y,
                                  const Eigen::MatrixXd& x_val, Index epochs, Index batch_size, const AdamConfig& adam,
                                  std::uint64_t seed);

// ---- self-supervised shared trunk ------------------------------------------

struct SequenceData {
  std::vector<Eigen::MatrixXd> sequences;  // each T x e, one position per row
  std::vector<int> labels;                 // optional, for probing
};

struct SslConfig {
  Index window = 4;
  Index embed = 16;        // adapter output Z
  Index trunk_hidden = 32;
  Index epochs = 200;
  Index batch_size = 8;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

// Adapters map each position to Z; the trunk sees the concatenation of the
// last `window` adapter outputs (zero before the sequence start) and each
// head predicts the next position's embedding.
struct SslModel {
  DenseNet adapter_x;
  DenseNet adapter_y;
  DenseNet trunk;
  DenseNet head_x;
  DenseNet head_y;
  Index window = 4;
};

SslModel make_ssl_model(Index embed_x, Index embed_y, const SslConfig& cfg);

struct SslLoss {
  double value = 0.0;
  NetGrad adapter;
  NetGrad trunk;
  NetGrad head;
};

// MSE between predictions at positions 0..T-2 and inputs at 1..T-1.
SslLoss ssl_sequence_loss(const SslModel& model, Modality m, const std::vector<Eigen::MatrixXd>& batch);

// Trunk outputs for every position of one sequence (T x Z).
Eigen::MatrixXd ssl_trunk_outputs(const SslModel& model, Modality m, const Eigen::MatrixXd& sequence);
// Mean of the trunk outputs over positions, one row per sequence.
Eigen::MatrixXd ssl_representation(const SslModel& model, Modality m, const std::vector<Eigen::MatrixXd>& sequences);
// Next-position predictions for one sequence (T x e).
Eigen::MatrixXd ssl_predict_next(const SslModel& model, Modality m, const Eigen::MatrixXd& sequence);

struct SslReport {
  std::vector<EpochLosses> epochs;
  std::string parameter_digest;
  Index steps = 0;
};

// y may be null (unimodal). Each step: one X batch, then one Y batch with
// the loss weighted by lambda, as separate Adam updates.
SslReport train_ssl_shared_trunk(SslModel& model, const SequenceData& x, const SequenceData* y, const SslConfig& cfg);

struct SslTaskOptions {
  Index classes = 8;
  Index latent_dim = 8;
  Index embed_x = 16;
  Index embed_y = 16;
  Index length = 8;
  Index train_x_per_class = 3;
  Index train_y_per_class = 60;
  Index test_x_per_class = 40;
  double rho = 0.8;      // latent AR(1) coefficient
  double drive = 1.0;    // innovation scale
  double noise = 1.0;    // observation noise
  double share = 0.8;
};

struct SslTask {
  SequenceData train_x;
  SequenceData test_x;
  SequenceData train_y;
};

// Latent z_{t+1} = rho z_t + (1 - rho) mu_k + drive eps, observed through
// modality maps built like the supervised task's.
SslTask make_ssl_task(std::uint64_t seed, const SslTaskOptions& options);

// Multinomial logistic regression on standardized features (full-batch Adam).
double linear_probe_accuracy(const Eigen::MatrixXd& train, const std::vector<int>& train_labels,
                             const Eigen::MatrixXd& test, const std::vector<int>& test_labels, std::uint64_t seed,
                             Index steps = 500, double lr = 0.05);

}  // namespace uml
