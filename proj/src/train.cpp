#include "uml/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <string>

#include "uml/errors.hpp"
#include "uml/io.hpp"
#include "uml/rng.hpp"

namespace uml {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum Group : std::uint64_t { kAdapterX = 0, kAdapterY = 1, kTrunk = 2, kHeadX = 3, kHeadY = 4 };

std::vector<Index> permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  // Fisher-Yates with our own integer draws keeps the order library-independent.
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.engine()() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

MatrixXd gather_rows(const MatrixXd& m, const std::vector<Index>& idx, std::size_t begin, std::size_t end) {
  MatrixXd out(static_cast<Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Index>(i - begin)) = m.row(idx[i]);
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& l, const std::vector<Index>& idx, std::size_t begin,
                               std::size_t end) {
  std::vector<int> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(l[static_cast<std::size_t>(idx[i])]);
  return out;
}

void append_indices(std::string& log, const std::vector<Index>& idx, std::size_t begin, std::size_t end, char tag) {
  log.push_back(tag);
  for (std::size_t i = begin; i < end; ++i) {
    const auto v = static_cast<std::int32_t>(idx[i]);
    log.append(reinterpret_cast<const char*>(&v), sizeof(v));
  }
}

// Endless stream of batches over a dataset, reshuffled on every pass.
class BatchCursor {
 public:
  BatchCursor(Index n, Index batch, std::uint64_t seed, std::uint64_t tag)
      : n_(n), batch_(batch), seed_(seed), tag_(tag) {
    reshuffle();
  }

  // Returns [begin, end) into order(); a batch never straddles two passes.
  std::pair<std::size_t, std::size_t> next() {
    if (pos_ >= static_cast<std::size_t>(n_)) reshuffle();
    const std::size_t begin = pos_;
    const std::size_t end = std::min(pos_ + static_cast<std::size_t>(batch_), static_cast<std::size_t>(n_));
    pos_ = end;
    return {begin, end};
  }
  const std::vector<Index>& order() const { return order_; }

 private:
  void reshuffle() {
    Rng rng(seed_, {stream::kShuffle, tag_, pass_++});
    order_ = permutation(n_, rng);
    pos_ = 0;
  }

  Index n_;
  Index batch_;
  std::uint64_t seed_;
  std::uint64_t tag_;
  std::uint64_t pass_ = 0;
  std::size_t pos_ = 0;
  std::vector<Index> order_;
};

struct GroupAdam {
  AdamState adapter_x, adapter_y, trunk, head_x, head_y;

  GroupAdam(const SharedNet& net, const AdamConfig& c)
      : adapter_x(make_adam(net.adapter_x, c)),
        adapter_y(make_adam(net.adapter_y, c)),
        trunk(make_adam(net.trunk, c)),
        head_x(make_adam(net.head_x, c)),
        head_y(net.shared_head ? AdamState{} : make_adam(net.head_y, c)) {}
};

struct Touched {
  bool adapter_x = false, adapter_y = false, trunk = false, head_x = false, head_y = false;
};

Touched touched_by(const SharedNet& net, Modality m) {
  Touched t;
  t.trunk = true;
  if (m == Modality::X) {
    t.adapter_x = true;
    t.head_x = true;
  } else {
    t.adapter_y = true;
    (net.shared_head ? t.head_x : t.head_y) = true;
  }
  return t;
}

void merge(Touched& a, const Touched& b) {
  a.adapter_x |= b.adapter_x;
  a.adapter_y |= b.adapter_y;
  a.trunk |= b.trunk;
  a.head_x |= b.head_x;
  a.head_y |= b.head_y;
}

// Groups without a gradient this step are skipped, like parameters whose
// gradient was never populated.
void apply(SharedNet& net, const GroupGrads& g, GroupAdam& adam, const Touched& t, bool freeze_x = false,
           bool freeze_y = false) {
  if (t.adapter_x && !freeze_x) adam_step(net.adapter_x, g.adapter_x, adam.adapter_x);
  if (t.adapter_y && !freeze_y) adam_step(net.adapter_y, g.adapter_y, adam.adapter_y);
  if (t.trunk) adam_step(net.trunk, g.trunk, adam.trunk);
  if (t.head_x) adam_step(net.head_x, g.head_x, adam.head_x);
  if (t.head_y && !net.shared_head) adam_step(net.head_y, g.head_y, adam.head_y);
}

struct Pass {
  ForwardCache adapter, trunk, head;
};

Pass run_forward(const SharedNet& net, Modality m, const MatrixXd& x) {
  Pass p;
  p.adapter = forward(net.adapter_for(m), x);
  p.trunk = forward(net.trunk, p.adapter.output);
  p.head = forward(net.head_for(m), p.trunk.output);
  return p;
}

GroupGrads run_backward(const SharedNet& net, Modality m, const Pass& p, const MatrixXd& output_grad) {
  GroupGrads g = GroupGrads::zeros_like(net);
  MatrixXd d_trunk_out, d_adapter_out;
  NetGrad gh = backward(net.head_for(m), p.head, output_grad, &d_trunk_out);
  g.trunk = backward(net.trunk, p.trunk, d_trunk_out, &d_adapter_out);
  NetGrad ga = backward(net.adapter_for(m), p.adapter, d_adapter_out);
  if (m == Modality::X) {
    g.adapter_x = std::move(ga);
    g.head_x = std::move(gh);
  } else {
    g.adapter_y = std::move(ga);
    (net.shared_head ? g.head_x : g.head_y) = std::move(gh);
  }
  return g;
}

std::vector<int> argmax_rows(const MatrixXd& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index k = 0;
    m.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

MatrixXd modality_map(Rng& rng, const MatrixXd& common, Index out, Index latent, double share) {
  const double s = 1.0 / std::sqrt(static_cast<double>(latent));
  return std::sqrt(share) * common + std::sqrt(1.0 - share) * (s * rng.normal_matrix(out, latent));
}

}  // namespace

// ---- shared net ------------------------------------------------------------

void SharedNet::validate() const {
  adapter_x.validate();
  adapter_y.validate();
  trunk.validate();
  head_x.validate();
  if (adapter_x.output_dim() != trunk.input_dim() || adapter_y.output_dim() != trunk.input_dim()) {
    throw InvalidInput("adapter outputs must match the trunk input");
  }
  if (head_x.input_dim() != trunk.output_dim()) throw InvalidInput("head input must match the trunk output");
  if (!shared_head) {
    head_y.validate();
    if (head_y.input_dim() != trunk.output_dim()) throw InvalidInput("head_y input must match the trunk output");
  }
}

SharedNet make_shared_net(const SharedNetShape& shape, std::uint64_t seed) {
  if (shape.input_x < 1 || shape.input_y < 1 || shape.head_out < 1) throw InvalidInput("shared net dims must be positive");
  if (shape.trunk_dims.size() < 2 || shape.trunk_activations.size() != shape.trunk_dims.size() - 1) {
    throw InvalidInput("trunk needs dims {in, ..., out} and one activation per layer");
  }
  const Index z = shape.trunk_dims.front();
  const Index t_out = shape.trunk_dims.back();
  SharedNet net;
  Rng r0(seed, {stream::kInit, kAdapterX});
  net.adapter_x = make_dense_net({shape.input_x, z}, {Activation::Identity}, r0);
  Rng r1(seed, {stream::kInit, kAdapterY});
  net.adapter_y = make_dense_net({shape.input_y, z}, {Activation::Identity}, r1);
  Rng r2(seed, {stream::kInit, kTrunk});
  net.trunk = make_dense_net(shape.trunk_dims, shape.trunk_activations, r2);
  Rng r3(seed, {stream::kInit, kHeadX});
  net.head_x = make_dense_net({t_out, shape.head_out}, {Activation::Identity}, r3);
  net.shared_head = shape.head_y_out == 0;
  if (!net.shared_head) {
    Rng r4(seed, {stream::kInit, kHeadY});
    net.head_y = make_dense_net({t_out, shape.head_y_out}, {Activation::Identity}, r4);
  }
  return net;
}

GroupGrads GroupGrads::zeros_like(const SharedNet& net) {
  GroupGrads g;
  g.adapter_x = NetGrad::zeros_like(net.adapter_x);
  g.adapter_y = NetGrad::zeros_like(net.adapter_y);
  g.trunk = NetGrad::zeros_like(net.trunk);
  g.head_x = NetGrad::zeros_like(net.head_x);
  g.head_y = net.shared_head ? NetGrad{} : NetGrad::zeros_like(net.head_y);
  return g;
}

void GroupGrads::add(const GroupGrads& other, double scale) {
  adapter_x.add(other.adapter_x, scale);
  adapter_y.add(other.adapter_y, scale);
  trunk.add(other.trunk, scale);
  head_x.add(other.head_x, scale);
  head_y.add(other.head_y, scale);
}

ModalLoss classification_loss(const SharedNet& net, Modality m, const MatrixXd& x, const std::vector<int>& labels) {
  const Pass p = run_forward(net, m, x);
  const LossResult l = cross_entropy_loss(p.head.output, labels);
  return {l.value, run_backward(net, m, p, l.grad)};
}

ModalLoss reconstruction_loss(const SharedNet& net, Modality m, const MatrixXd& x) {
  const Pass p = run_forward(net, m, x);
  const LossResult l = mse_loss(p.head.output, x);
  return {l.value, run_backward(net, m, p, l.grad)};
}

MatrixXd embed(const SharedNet& net, Modality m, const MatrixXd& x) {
  return predict(net.trunk, predict(net.adapter_for(m), x));
}

MatrixXd logits(const SharedNet& net, Modality m, const MatrixXd& x) { return predict(net.head_for(m), embed(net, m, x)); }

double accuracy(const SharedNet& net, Modality m, const MatrixXd& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
    throw InvalidInput("accuracy needs one label per row");
  }
  const auto pred = argmax_rows(logits(net, m, x));
  Index hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::string parameter_digest(const SharedNet& net) {
  std::vector<const MatrixXd*> mats;
  std::vector<MatrixXd> biases;
  std::vector<const DenseNet*> nets = {&net.adapter_x, &net.adapter_y, &net.trunk, &net.head_x};
  if (!net.shared_head) nets.push_back(&net.head_y);
  for (const auto* n : nets) {
    for (const auto& l : n->layers) biases.emplace_back(l.bias);
  }
  std::size_t b = 0;
  for (const auto* n : nets) {
    for (const auto& l : n->layers) {
      mats.push_back(&l.weight);
      mats.push_back(&biases[b++]);
    }
  }
  return matrices_digest(mats);
}

// ---- supervised ---------------------------------------------------------------

const char* to_string(HeadInit h) {
  switch (h) {
    case HeadInit::Zero: return "zero";
    case HeadInit::Random: return "random";
    case HeadInit::ClassMeanAuxiliary: return "class_mean_auxiliary";
  }
  return "unknown";
}

HeadInit head_init_from_string(const std::string& s) {
  if (s == "zero") return HeadInit::Zero;
  if (s == "random") return HeadInit::Random;
  if (s == "class_mean_auxiliary") return HeadInit::ClassMeanAuxiliary;
  throw InvalidInput("unknown head_init '" + s + "' (expected zero, random or class_mean_auxiliary)");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and >= 0");
  if (!(batch_ratio > 0) || !std::isfinite(batch_ratio)) throw InvalidInput("batch_ratio must be finite and > 0");
  if (epochs < 1) throw InvalidInput("epochs must be >= 1");
  if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
  if (curriculum_step < 0 || curriculum_step > epochs) throw InvalidInput("curriculum_step must be in [0, epochs]");
}

DenseLayer init_head_from_class_means(const MatrixXd& embeddings, const std::vector<int>& labels, Index classes) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) throw InvalidInput("one label per row required");
  if (classes < 1) throw InvalidInput("classes must be >= 1");
  DenseLayer layer;
  layer.weight = MatrixXd::Zero(classes, embeddings.cols());
  layer.bias = VectorXd::Zero(classes);
  std::vector<Index> counts(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw InvalidInput("label " + std::to_string(y) + " out of range");
    layer.weight.row(y) += embeddings.row(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(y)];
  }
  for (Index k = 0; k < classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw InvalidInput("class " + std::to_string(k) + " has no auxiliary samples");
    }
    layer.weight.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }
  return layer;
}

TrainReport train_supervised(SharedNet& net, const LabeledData& train_x, const LabeledData* train_y,
                             const LabeledData& test_x, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (!net.shared_head) throw InvalidInput("supervised training needs a shared classifier");
  const Index classes = net.head_x.output_dim();
  auto check_labels = [&](const LabeledData& d, const char* what) {
    if (d.x.rows() < 1 || static_cast<std::size_t>(d.x.rows()) != d.labels.size()) {
      throw InvalidInput(std::string(what) + " needs one label per row and at least one row");
    }
    for (int y : d.labels) {
      if (y < 0 || y >= classes) throw InvalidInput(std::string(what) + " label " + std::to_string(y) + " out of range");
    }
  };
  check_labels(train_x, "X training data");
  check_labels(test_x, "X test data");
  if (train_y) {
    check_labels(*train_y, "auxiliary data");
    const std::set<int> sx(train_x.labels.begin(), train_x.labels.end());
    const std::set<int> sy(train_y->labels.begin(), train_y->labels.end());
    if (sx != sy) throw InvalidInput("label spaces of X and auxiliary data differ");
  }

  if (cfg.head_init == HeadInit::Zero) {
    for (auto& l : net.head_x.layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  } else if (cfg.head_init == HeadInit::ClassMeanAuxiliary) {
    if (!train_y) throw InvalidInput("class_mean_auxiliary head init needs auxiliary data");
    if (net.head_x.layers.size() != 1) throw InvalidInput("class_mean_auxiliary head init needs a single-layer head");
    const auto act = net.head_x.layers[0].activation;
    net.head_x.layers[0] = init_head_from_class_means(embed(net, Modality::Y, train_y->x), train_y->labels, classes);
    net.head_x.layers[0].activation = act;
  }

  GroupAdam adam(net, cfg.adam);
  TrainReport report;
  std::string schedule_log;
  Rng schedule_rng(cfg.seed, {stream::kSchedule});
  std::optional<BatchCursor> y_cursor;
  if (train_y) y_cursor.emplace(train_y->x.rows(), cfg.batch_size, cfg.seed, 1);
  const double whole = std::floor(cfg.batch_ratio);
  const double frac = cfg.batch_ratio - whole;

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed, {stream::kShuffle, 0, static_cast<std::uint64_t>(epoch)});
    const auto order = permutation(train_x.x.rows(), shuffle_rng);
    const bool use_aux = train_y && cfg.lambda > 0 && epoch >= cfg.curriculum_step;
    EpochLosses el;
    Index x_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      append_indices(schedule_log, order, begin, end, 'x');
      ModalLoss lx = classification_loss(net, Modality::X, gather_rows(train_x.x, order, begin, end),
                                         gather_labels(train_x.labels, order, begin, end));
      el.x += lx.value;
      ++x_batches;
      Touched t = touched_by(net, Modality::X);
      int k = 0;
      if (use_aux) {
        k = static_cast<int>(whole) + (schedule_rng.uniform() < frac ? 1 : 0);
        for (int j = 0; j < k; ++j) {
          const auto [yb, ye] = y_cursor->next();
          append_indices(schedule_log, y_cursor->order(), yb, ye, 'y');
          const ModalLoss ly = classification_loss(net, Modality::Y, gather_rows(train_y->x, y_cursor->order(), yb, ye),
                                                   gather_labels(train_y->labels, y_cursor->order(), yb, ye));
          lx.grads.add(ly.grads, cfg.lambda / k);
          el.y += ly.value;
          ++el.y_batches;
        }
        if (k > 0) merge(t, touched_by(net, Modality::Y));
      }
      report.aux_batches_per_step.push_back(k);
      apply(net, lx.grads, adam, t, cfg.freeze_adapter_x, cfg.freeze_adapter_y);
      ++report.steps;
    }
    el.x /= static_cast<double>(x_batches);
    if (el.y_batches) el.y /= static_cast<double>(el.y_batches);
    report.epochs.push_back(el);
  }
  report.x_test_accuracy = accuracy(net, Modality::X, test_x.x, test_x.labels);
  report.parameter_digest = parameter_digest(net);
  report.schedule_digest = sha256_hex(schedule_log);
  return report;
}

SupervisedTask make_supervised_task(std::uint64_t seed, const SupervisedTaskOptions& o, bool shuffled_aux) {
  if (o.classes < 2 || o.latent_dim < 1 || o.embed_x < 1 || o.embed_y < 1) throw InvalidInput("invalid task dims");
  if (o.shots_x < 1 || o.aux_per_class < 1 || o.test_per_class < 1) throw InvalidInput("sample counts must be >= 1");
  if (!(o.share >= 0 && o.share <= 1)) throw InvalidInput("share must be in [0, 1]");
  if (o.jitter_x < 0 || o.jitter_y < 0 || o.noise < 0) throw InvalidInput("spreads must be >= 0");
  Rng g(seed, {stream::kData, 0});
  const MatrixXd mu = g.normal_matrix(o.classes, o.latent_dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(o.latent_dim));
  const MatrixXd common_x = s * g.normal_matrix(o.embed_x, o.latent_dim);
  // When both modalities share an embedding width, they share the common map.
  const MatrixXd common_y = o.embed_y == o.embed_x ? common_x : s * g.normal_matrix(o.embed_y, o.latent_dim);
  const MatrixXd px = modality_map(g, common_x, o.embed_x, o.latent_dim, o.share);
  const MatrixXd py = modality_map(g, common_y, o.embed_y, o.latent_dim, o.share);

  auto gen = [&](const MatrixXd& p, Index per_class, double jitter, std::uint64_t split) {
    Rng r(seed, {stream::kData, 1, split});
    LabeledData d;
    d.x.resize(o.classes * per_class, p.rows());
    for (Index k = 0; k < o.classes; ++k) {
      for (Index i = 0; i < per_class; ++i) {
        const VectorXd z = mu.row(k).transpose() + jitter * r.normal_vector(o.latent_dim);
        d.x.row(k * per_class + i) = (p * z + o.noise * r.normal_vector(p.rows())).transpose();
        d.labels.push_back(static_cast<int>(k));
      }
    }
    return d;
  };
  SupervisedTask t;
  t.options = o;
  t.train_x = gen(px, o.shots_x, o.jitter_x, 0);
  t.test_x = gen(px, o.test_per_class, o.jitter_x, 1);
  t.train_y = gen(py, o.aux_per_class, o.jitter_y, 2);
  if (shuffled_aux) relabel_derangement(t.train_y.labels, o.classes, derive_seed(seed, {stream::kData, 2}));
  return t;
}

void relabel_derangement(std::vector<int>& labels, Index classes, std::uint64_t seed) {
  if (classes < 2) throw InvalidInput("a derangement needs at least 2 classes");
  Rng r(seed);
  std::vector<Index> perm;
  bool fixed = true;
  while (fixed) {
    perm = permutation(classes, r);
    fixed = false;
    for (Index k = 0; k < classes; ++k) fixed |= perm[static_cast<std::size_t>(k)] == k;
  }
  for (int& y : labels) {
    if (y < 0 || y >= classes) throw InvalidInput("label " + std::to_string(y) + " out of range");
    y = static_cast<int>(perm[static_cast<std::size_t>(y)]);
  }
}

SharedNetShape supervised_shape(const SupervisedTask& task, const SupervisedArchitecture& arch) {
  SharedNetShape s;
  s.input_x = task.options.embed_x;
  s.input_y = task.options.embed_y;
  s.trunk_dims = {arch.embed};
  for (Index h : arch.trunk_hidden) s.trunk_dims.push_back(h);
  s.trunk_dims.push_back(arch.embed);
  s.trunk_activations.assign(s.trunk_dims.size() - 1, Activation::ReLU);
  s.head_out = task.options.classes;
  return s;
}

// ---- Gaussian autoencoder -------------------------------------------------------

void GaussianExpConfig::validate() const {
  if (n_unimodal < 1 || n_joint_x < 1 || n_joint_y < 1 || n_validation < 1) {
    throw InvalidInput("sample counts must be >= 1");
  }
  if (common_dim < 1 || hidden_dim < 1 || latent_dim < 1) throw InvalidInput("layer widths must be >= 1");
  if (epochs < 1 || batch_size < 1) throw InvalidInput("epochs and batch_size must be >= 1");
}

SharedNetShape autoencoder_shape(const GaussianExpConfig& cfg) {
  SharedNetShape s;
  s.input_x = cfg.spec.obs_dim;
  s.input_y = cfg.spec.obs_dim;
  s.trunk_dims = {cfg.common_dim, cfg.hidden_dim, cfg.latent_dim, cfg.hidden_dim, cfg.common_dim};
  s.trunk_activations = {Activation::ReLU, Activation::Identity, Activation::ReLU, Activation::Identity};
  s.head_out = cfg.spec.obs_dim;
  s.head_y_out = cfg.spec.obs_dim;
  return s;
}

TrainReport train_autoencoder_arm(SharedNet& net, const MatrixXd& x, const MatrixXd* y, const MatrixXd& x_val,
                                  Index epochs, Index batch_size, const AdamConfig& adam_cfg, std::uint64_t seed) {
  net.validate();
  if (net.shared_head) throw InvalidInput("the autoencoder needs one decoder head per modality");
  if (x.rows() < 1 || x.cols() != net.adapter_x.input_dim()) throw InvalidInput("X data shape mismatch");
  if (y && (y->rows() < 1 || y->cols() != net.adapter_y.input_dim())) throw InvalidInput("Y data shape mismatch");
  GroupAdam adam(net, adam_cfg);
  TrainReport report;
  std::string schedule_log;
  std::optional<BatchCursor> y_cursor;
  if (y) y_cursor.emplace(y->rows(), batch_size, seed, 1);
  const Touched tx = touched_by(net, Modality::X);
  const Touched ty = touched_by(net, Modality::Y);
  for (Index epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(seed, {stream::kShuffle, 0, static_cast<std::uint64_t>(epoch)});
    const auto order = permutation(x.rows(), shuffle_rng);
    EpochLosses el;
    Index x_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      append_indices(schedule_log, order, begin, end, 'x');
      const ModalLoss lx = reconstruction_loss(net, Modality::X, gather_rows(x, order, begin, end));
      apply(net, lx.grads, adam, tx);
      el.x += lx.value;
      ++x_batches;
      ++report.steps;
      if (y) {
        const auto [yb, ye] = y_cursor->next();
        append_indices(schedule_log, y_cursor->order(), yb, ye, 'y');
        const ModalLoss ly = reconstruction_loss(net, Modality::Y, gather_rows(*y, y_cursor->order(), yb, ye));
        apply(net, ly.grads, adam, ty);
        el.y += ly.value;
        ++el.y_batches;
        ++report.steps;
      }
      report.aux_batches_per_step.push_back(y ? 1 : 0);
    }
    el.x /= static_cast<double>(x_batches);
    if (el.y_batches) el.y /= static_cast<double>(el.y_batches);
    report.epochs.push_back(el);
  }
  const MatrixXd recon = predict(net.head_x, embed(net, Modality::X, x_val));
  report.x_val_mse = (recon - x_val).squaredNorm() / static_cast<double>(x_val.size());
  report.parameter_digest = parameter_digest(net);
  report.schedule_digest = sha256_hex(schedule_log);
  return report;
}

GaussianSeedResult train_shared_autoencoder(const GaussianExpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto spec = make_attenuated_gaussian_spec(derive_seed(seed, {stream::kSpec}), cfg.spec);
  const std::uint64_t data_seed = derive_seed(seed, {stream::kData, 0});
  // Samples are keyed by index, so the joint arm's X rows are the first
  // n_joint_x rows of the unimodal arm's data.
  const auto uni = sample_latent_datasets(spec.train, cfg.n_unimodal, 0, data_seed);
  const auto joint = sample_latent_datasets(spec.train, cfg.n_joint_x, cfg.n_joint_y, data_seed);
  const auto val = sample_latent_datasets(spec.validation, cfg.n_validation, 0, derive_seed(seed, {stream::kData, 1}));
  const auto shape = autoencoder_shape(cfg);
  const std::uint64_t init_seed = derive_seed(seed, {stream::kInit});

  GaussianSeedResult out;
  out.seed = seed;
  SharedNet net_u = make_shared_net(shape, init_seed);
  out.unimodal.report = train_autoencoder_arm(net_u, uni.x.observations, nullptr, val.x.observations, cfg.epochs,
                                              cfg.batch_size, cfg.adam, seed);
  out.unimodal.x_val_mse = out.unimodal.report.x_val_mse;
  SharedNet net_j = make_shared_net(shape, init_seed);
  out.joint.report = train_autoencoder_arm(net_j, joint.x.observations, &joint.y.observations, val.x.observations,
                                           cfg.epochs, cfg.batch_size, cfg.adam, seed);
  out.joint.x_val_mse = out.joint.report.x_val_mse;
  return out;
}

// ---- self-supervised ---------------------------------------------------------------

void SslConfig::validate() const {
  if (window < 1) throw InvalidInput("window must be >= 1");
  if (embed < 1 || trunk_hidden < 1) throw InvalidInput("widths must be >= 1");
  if (epochs < 1 || batch_size < 1) throw InvalidInput("epochs and batch_size must be >= 1");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and >= 0");
}

SslModel make_ssl_model(Index embed_x, Index embed_y, const SslConfig& cfg) {
  cfg.validate();
  if (embed_x < 1 || embed_y < 1) throw InvalidInput("embedding dims must be >= 1");
  SslModel m;
  m.window = cfg.window;
  Rng r0(cfg.seed, {stream::kInit, kAdapterX});
  m.adapter_x = make_dense_net({embed_x, cfg.embed}, {Activation::Identity}, r0);
  Rng r1(cfg.seed, {stream::kInit, kAdapterY});
  m.adapter_y = make_dense_net({embed_y, cfg.embed}, {Activation::Identity}, r1);
  Rng r2(cfg.seed, {stream::kInit, kTrunk});
  m.trunk = make_dense_net({cfg.window * cfg.embed, cfg.trunk_hidden, cfg.embed}, {Activation::ReLU, Activation::Identity}, r2);
  Rng r3(cfg.seed, {stream::kInit, kHeadX});
  m.head_x = make_dense_net({cfg.embed, embed_x}, {Activation::Identity}, r3);
  Rng r4(cfg.seed, {stream::kInit, kHeadY});
  m.head_y = make_dense_net({cfg.embed, embed_y}, {Activation::Identity}, r4);
  return m;
}

namespace {

struct SslPass {
  MatrixXd stacked;  // (B*T) x e
  ForwardCache adapter, trunk, head;
  Index batch = 0;
  Index length = 0;
};

SslPass ssl_forward(const SslModel& model, Modality m, const std::vector<MatrixXd>& seqs) {
  if (seqs.empty()) throw InvalidInput("empty sequence batch");
  const Index t_len = seqs.front().rows();
  const Index e = seqs.front().cols();
  if (t_len < 2) throw InvalidInput("sequences must have at least 2 positions");
  SslPass p;
  p.batch = static_cast<Index>(seqs.size());
  p.length = t_len;
  p.stacked.resize(p.batch * t_len, e);
  for (Index b = 0; b < p.batch; ++b) {
    const auto& s = seqs[static_cast<std::size_t>(b)];
    if (s.rows() != t_len || s.cols() != e) throw InvalidInput("sequences in a batch must share their shape");
    p.stacked.middleRows(b * t_len, t_len) = s;
  }
  const DenseNet& adapter = m == Modality::X ? model.adapter_x : model.adapter_y;
  const DenseNet& head = m == Modality::X ? model.head_x : model.head_y;
  p.adapter = forward(adapter, p.stacked);
  const Index z = adapter.output_dim();
  MatrixXd window = MatrixXd::Zero(p.batch * t_len, model.window * z);
  for (Index b = 0; b < p.batch; ++b) {
    for (Index t = 0; t < t_len; ++t) {
      for (Index j = 0; j < model.window && j <= t; ++j) {
        window.block(b * t_len + t, j * z, 1, z) = p.adapter.output.row(b * t_len + t - j);
      }
    }
  }
  p.trunk = forward(model.trunk, window);
  p.head = forward(head, p.trunk.output);
  return p;
}

}  // namespace

SslLoss ssl_sequence_loss(const SslModel& model, Modality m, const std::vector<MatrixXd>& batch) {
  const SslPass p = ssl_forward(model, m, batch);
  const Index t_len = p.length;
  const Index e = p.stacked.cols();
  const double count = static_cast<double>(p.batch * (t_len - 1) * e);
  MatrixXd grad = MatrixXd::Zero(p.head.output.rows(), e);
  SslLoss out;
  for (Index b = 0; b < p.batch; ++b) {
    // pred[:, :-1] against input[:, 1:]
    const auto diff = p.head.output.middleRows(b * t_len, t_len - 1) - p.stacked.middleRows(b * t_len + 1, t_len - 1);
    out.value += diff.squaredNorm();
    grad.middleRows(b * t_len, t_len - 1) = (2.0 / count) * diff;
  }
  out.value /= count;
  const DenseNet& adapter = m == Modality::X ? model.adapter_x : model.adapter_y;
  const DenseNet& head = m == Modality::X ? model.head_x : model.head_y;
  MatrixXd d_trunk_out, d_window;
  out.head = backward(head, p.head, grad, &d_trunk_out);
  out.trunk = backward(model.trunk, p.trunk, d_trunk_out, &d_window);
  const Index z = adapter.output_dim();
  MatrixXd d_adapter = MatrixXd::Zero(p.adapter.output.rows(), z);
  for (Index b = 0; b < p.batch; ++b) {
    for (Index t = 0; t < t_len; ++t) {
      for (Index j = 0; j < model.window && j <= t; ++j) {
        d_adapter.row(b * t_len + t - j) += d_window.block(b * t_len + t, j * z, 1, z);
      }
    }
  }
  out.adapter = backward(adapter, p.adapter, d_adapter);
  return out;
}

MatrixXd ssl_trunk_outputs(const SslModel& model, Modality m, const MatrixXd& sequence) {
  return ssl_forward(model, m, {sequence}).trunk.output;
}

MatrixXd ssl_representation(const SslModel& model, Modality m, const std::vector<MatrixXd>& sequences) {
  if (sequences.empty()) throw InvalidInput("no sequences");
  MatrixXd out(static_cast<Index>(sequences.size()), model.trunk.output_dim());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    out.row(static_cast<Index>(i)) = ssl_trunk_outputs(model, m, sequences[i]).colwise().mean();
  }
  return out;
}

MatrixXd ssl_predict_next(const SslModel& model, Modality m, const MatrixXd& sequence) {
  return ssl_forward(model, m, {sequence}).head.output;
}

SslReport train_ssl_shared_trunk(SslModel& model, const SequenceData& x, const SequenceData* y, const SslConfig& cfg) {
  cfg.validate();
  if (x.sequences.empty()) throw InvalidInput("no X sequences");
  if (y && y->sequences.empty()) throw InvalidInput("no Y sequences");
  AdamState a_x = make_adam(model.adapter_x, cfg.adam), a_y = make_adam(model.adapter_y, cfg.adam);
  AdamState a_t = make_adam(model.trunk, cfg.adam);
  AdamState h_x = make_adam(model.head_x, cfg.adam), h_y = make_adam(model.head_y, cfg.adam);
  std::optional<BatchCursor> y_cursor;
  if (y) y_cursor.emplace(static_cast<Index>(y->sequences.size()), cfg.batch_size, cfg.seed, 1);
  SslReport report;
  auto pick = [](const std::vector<MatrixXd>& all, const std::vector<Index>& order, std::size_t b, std::size_t e) {
    std::vector<MatrixXd> out;
    for (std::size_t i = b; i < e; ++i) out.push_back(all[static_cast<std::size_t>(order[i])]);
    return out;
  };
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed, {stream::kShuffle, 0, static_cast<std::uint64_t>(epoch)});
    const auto order = permutation(static_cast<Index>(x.sequences.size()), shuffle_rng);
    EpochLosses el;
    Index x_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const SslLoss lx = ssl_sequence_loss(model, Modality::X, pick(x.sequences, order, begin, end));
      adam_step(model.adapter_x, lx.adapter, a_x);
      adam_step(model.trunk, lx.trunk, a_t);
      adam_step(model.head_x, lx.head, h_x);
      el.x += lx.value;
      ++x_batches;
      ++report.steps;
      if (y && cfg.lambda > 0) {
        const auto [yb, ye] = y_cursor->next();
        SslLoss ly = ssl_sequence_loss(model, Modality::Y, pick(y->sequences, y_cursor->order(), yb, ye));
        ly.adapter.add(ly.adapter, cfg.lambda - 1.0);
        ly.trunk.add(ly.trunk, cfg.lambda - 1.0);
        ly.head.add(ly.head, cfg.lambda - 1.0);
        adam_step(model.adapter_y, ly.adapter, a_y);
        adam_step(model.trunk, ly.trunk, a_t);
        adam_step(model.head_y, ly.head, h_y);
        el.y += ly.value;
        ++el.y_batches;
        ++report.steps;
      }
    }
    el.x /= static_cast<double>(x_batches);
    if (el.y_batches) el.y /= static_cast<double>(el.y_batches);
    report.epochs.push_back(el);
  }
  std::vector<MatrixXd> biases;
  for (const DenseNet* n : {&model.adapter_x, &model.adapter_y, &model.trunk, &model.head_x, &model.head_y}) {
    for (const auto& l : n->layers) biases.emplace_back(l.bias);
  }
  std::vector<const MatrixXd*> mats;
  std::size_t b = 0;
  for (const DenseNet* n : {&model.adapter_x, &model.adapter_y, &model.trunk, &model.head_x, &model.head_y}) {
    for (const auto& l : n->layers) {
      mats.push_back(&l.weight);
      mats.push_back(&biases[b++]);
    }
  }
  report.parameter_digest = matrices_digest(mats);
  return report;
}

SslTask make_ssl_task(std::uint64_t seed, const SslTaskOptions& o) {
  if (o.classes < 2 || o.latent_dim < 1 || o.embed_x < 1 || o.embed_y < 1 || o.length < 2) {
    throw InvalidInput("invalid sequence task dims");
  }
  if (!(o.share >= 0 && o.share <= 1)) throw InvalidInput("share must be in [0, 1]");
  Rng g(seed, {stream::kData, 0});
  const MatrixXd mu = g.normal_matrix(o.classes, o.latent_dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(o.latent_dim));
  const MatrixXd common_x = s * g.normal_matrix(o.embed_x, o.latent_dim);
  const MatrixXd common_y = o.embed_y == o.embed_x ? common_x : s * g.normal_matrix(o.embed_y, o.latent_dim);
  const MatrixXd px = modality_map(g, common_x, o.embed_x, o.latent_dim, o.share);
  const MatrixXd py = modality_map(g, common_y, o.embed_y, o.latent_dim, o.share);
  auto gen = [&](const MatrixXd& p, Index per_class, std::uint64_t split) {
    Rng r(seed, {stream::kData, 1, split});
    SequenceData d;
    for (Index k = 0; k < o.classes; ++k) {
      for (Index i = 0; i < per_class; ++i) {
        MatrixXd seq(o.length, p.rows());
        VectorXd z = mu.row(k).transpose() + o.drive * r.normal_vector(o.latent_dim);
        for (Index t = 0; t < o.length; ++t) {
          seq.row(t) = (p * z + o.noise * r.normal_vector(p.rows())).transpose();
          z = o.rho * z + (1.0 - o.rho) * mu.row(k).transpose() + o.drive * r.normal_vector(o.latent_dim);
        }
        d.sequences.push_back(std::move(seq));
        d.labels.push_back(static_cast<int>(k));
      }
    }
    return d;
  };
  SslTask t;
  t.train_x = gen(px, o.train_x_per_class, 0);
  t.test_x = gen(px, o.test_x_per_class, 1);
  t.train_y = gen(py, o.train_y_per_class, 2);
  return t;
}

double linear_probe_accuracy(const MatrixXd& train, const std::vector<int>& train_labels, const MatrixXd& test,
                             const std::vector<int>& test_labels, std::uint64_t seed, Index steps, double lr) {
  if (train.rows() < 1 || static_cast<std::size_t>(train.rows()) != train_labels.size()) {
    throw InvalidInput("probe training data needs one label per row");
  }
  if (test.cols() != train.cols() || static_cast<std::size_t>(test.rows()) != test_labels.size() || test.rows() < 1) {
    throw InvalidInput("probe test data shape mismatch");
  }
  const int classes = 1 + std::max(*std::max_element(train_labels.begin(), train_labels.end()),
                                   *std::max_element(test_labels.begin(), test_labels.end()));
  const Eigen::RowVectorXd mean = train.colwise().mean();
  Eigen::RowVectorXd sd = ((train.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(train.rows()))
                              .sqrt()
                              .matrix();
  for (Index c = 0; c < sd.size(); ++c) {
    if (!(sd(c) > 1e-12)) sd(c) = 1.0;
  }
  const MatrixXd tr = (train.rowwise() - mean).array().rowwise() / sd.array();
  const MatrixXd te = (test.rowwise() - mean).array().rowwise() / sd.array();
  Rng rng(seed, {stream::kInit, 99});
  DenseNet probe = make_dense_net({train.cols(), classes}, {Activation::Identity}, rng);
  probe.layers[0].weight.setZero();
  probe.layers[0].bias.setZero();
  AdamConfig ac;
  ac.lr = lr;
  AdamState st = make_adam(probe, ac);
  for (Index s = 0; s < steps; ++s) {
    const auto fc = forward(probe, tr);
    const auto l = cross_entropy_loss(fc.output, train_labels);
    adam_step(probe, backward(probe, fc, l.grad), st);
  }
  const auto pred = argmax_rows(predict(probe, te));
  Index hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test_labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(test_labels.size());
}

}  // namespace uml
