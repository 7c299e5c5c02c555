#pragma once

// Minimal dense networks with manual backpropagation, losses and Adam.
// Batches are row-major in the sense of one sample per row.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace uml {

using Eigen::Index;

class Rng;

enum class Activation { Identity, ReLU };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  Index input_dim() const;
  Index output_dim() const;
  Index parameter_count() const;
  // Throws InvalidInput if dims do not chain or parameters are not finite.
  void validate() const;
};

// dims = {in, h1, ..., out}; one activation per layer. Weights and biases are
// uniform in [-1/sqrt(in), 1/sqrt(in)].
DenseNet make_dense_net(const std::vector<Index>& dims, const std::vector<Activation>& activations, Rng& rng);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  Eigen::MatrixXd output;
};

ForwardCache forward(const DenseNet& net, const Eigen::MatrixXd& inputs);
// Output only, no cache.
Eigen::MatrixXd predict(const DenseNet& net, const Eigen::MatrixXd& inputs);

struct NetGrad {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static NetGrad zeros_like(const DenseNet& net);
  void add(const NetGrad& other, double scale = 1.0);
  double squared_norm() const;
};

// ReLU'(0) = 0. When input_grad is non-null it receives dLoss/dInputs.
NetGrad backward(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
                 Eigen::MatrixXd* input_grad = nullptr);

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as the prediction / logits
};

// Mean over every element.
LossResult mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
// Mean over rows; labels in [0, logits.cols()).
LossResult cross_entropy_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  NetGrad m;
  NetGrad v;
};

AdamState make_adam(const DenseNet& net, const AdamConfig& config = {});
void adam_step(DenseNet& net, const NetGrad& grad, AdamState& state);

// Binary weights: "UMLW", u32 version, u32 layer count, per layer u32 out,
// u32 in, u32 activation, then row-major f64 weights followed by the bias.
// A JSON sidecar (<path>.json) records the architecture.
void save_weights(const std::filesystem::path& path, const DenseNet& net);
DenseNet load_weights(const std::filesystem::path& path);
std::string weights_bytes(const DenseNet& net);
DenseNet weights_from_bytes(const std::string& bytes);
std::string architecture_json(const DenseNet& net);

// Fourth-order central differences (five-point stencil) on randomly chosen
// parameters across one or more networks. loss_fn must be a pure function of
// the current parameters. A parameter whose central differences at h and 2h
// disagree beyond smooth-function scale sits within 2h of a ReLU kink; it is
// skipped and another one is drawn, up to 10x samples draws.
struct GradCheckResult {
  Index checked = 0;
  Index skipped_kinks = 0;
  double max_rel_error = 0.0;
};
struct GradCheckTarget {
  DenseNet* net;
  const NetGrad* analytic;
};
template <typename LossFn>
GradCheckResult gradient_check(const std::vector<GradCheckTarget>& targets, LossFn&& loss_fn, Index samples, Rng& rng,
                               double h = 1e-4, double floor = 1e-8);

}  // namespace uml

#include "uml/rng.hpp"

namespace uml {

template <typename LossFn>
GradCheckResult gradient_check(const std::vector<GradCheckTarget>& targets, LossFn&& loss_fn, Index samples, Rng& rng,
                               double h, double floor) {
  GradCheckResult out;
  Index total = 0;
  for (const auto& t : targets) total += t.net->parameter_count();
  for (Index draws = 0; out.checked < samples && draws < 10 * samples; ++draws) {
    Index k = rng.integer(0, total - 1);
    double* p = nullptr;
    double g = 0.0;
    for (const auto& t : targets) {
      for (std::size_t l = 0; l < t.net->layers.size() && !p; ++l) {
        auto& layer = t.net->layers[l];
        const Index nw = layer.weight.size();
        const Index nb = layer.bias.size();
        if (k >= nw + nb) {
          k -= nw + nb;
          continue;
        }
        p = k < nw ? layer.weight.data() + k : layer.bias.data() + (k - nw);
        g = k < nw ? t.analytic->weight[l].data()[k] : t.analytic->bias[l].data()[k - nw];
      }
      if (p) break;
    }
    const double saved = *p;
    auto at = [&](double offset) {
      *p = saved + offset;
      return loss_fn();
    };
    const double c1 = (at(h) - at(-h)) / (2 * h);
    const double c2 = (at(2 * h) - at(-2 * h)) / (4 * h);
    *p = saved;
    if (std::abs(c2 - c1) > 1e-6 * std::max(1.0, std::abs(c1))) {
      ++out.skipped_kinks;
      continue;
    }
    const double numeric = (4 * c1 - c2) / 3;
    const double rel = std::abs(numeric - g) / std::max({std::abs(numeric), std::abs(g), floor});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
  }
  return out;
}

}  // namespace uml
