#include "uml/neural.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "json.hpp"
#include "uml/errors.hpp"
#include "uml/io.hpp"
#include "uml/rng.hpp"

namespace uml {

static_assert(std::endian::native == std::endian::little, "UMLW files are little-endian");

const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw InvalidInput("unknown activation '" + s + "'");
}

Index DenseNet::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
Index DenseNet::output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

Index DenseNet::parameter_count() const {
  Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void DenseNet::validate() const {
  if (layers.empty()) throw InvalidInput("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() < 1 || l.weight.cols() < 1) throw InvalidInput("layer " + std::to_string(i) + " is empty");
    if (l.bias.size() != l.weight.rows()) throw InvalidInput("layer " + std::to_string(i) + " bias length mismatch");
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw InvalidInput("layer " + std::to_string(i) + " input dim does not chain");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw InvalidInput("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

DenseNet make_dense_net(const std::vector<Index>& dims, const std::vector<Activation>& activations, Rng& rng) {
  if (dims.size() < 2) throw InvalidInput("network needs at least input and output dims");
  if (activations.size() != dims.size() - 1) throw InvalidInput("need one activation per layer");
  DenseNet net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] < 1 || dims[i + 1] < 1) throw InvalidInput("layer dims must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    DenseLayer layer;
    layer.weight.resize(dims[i + 1], dims[i]);
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    layer.bias.resize(dims[i + 1]);
    for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
    layer.activation = activations[i];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

void check_input(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  if (net.layers.empty()) throw InvalidInput("network has no layers");
  if (inputs.cols() != net.input_dim()) {
    throw InvalidInput("input has " + std::to_string(inputs.cols()) + " features, network expects " +
                       std::to_string(net.input_dim()));
  }
}

void affine(const DenseLayer& layer, const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
  out.noalias() = in * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
}

}  // namespace

ForwardCache forward(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs);
  ForwardCache cache;
  cache.inputs.resize(net.layers.size());
  cache.pre.resize(net.layers.size());
  const Eigen::MatrixXd* current = &inputs;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    cache.inputs[i] = *current;
    affine(net.layers[i], cache.inputs[i], cache.pre[i]);
    if (i + 1 < net.layers.size()) {
      cache.inputs[i + 1] = net.layers[i].activation == Activation::ReLU ? Eigen::MatrixXd(cache.pre[i].cwiseMax(0.0))
                                                                         : cache.pre[i];
      current = &cache.inputs[i + 1];
    }
  }
  const auto& last = net.layers.back();
  cache.output = last.activation == Activation::ReLU ? Eigen::MatrixXd(cache.pre.back().cwiseMax(0.0)) : cache.pre.back();
  return cache;
}

Eigen::MatrixXd predict(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs);
  Eigen::MatrixXd current = inputs;
  Eigen::MatrixXd next;
  for (const auto& layer : net.layers) {
    affine(layer, current, next);
    if (layer.activation == Activation::ReLU) next = next.cwiseMax(0.0);
    current.swap(next);
  }
  return current;
}

NetGrad NetGrad::zeros_like(const DenseNet& net) {
  NetGrad g;
  for (const auto& l : net.layers) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

void NetGrad::add(const NetGrad& other, double scale) {
  if (other.weight.size() != weight.size()) throw InvalidInput("gradient layer count mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += scale * other.weight[i];
    bias[i] += scale * other.bias[i];
  }
}

double NetGrad::squared_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) s += weight[i].squaredNorm() + bias[i].squaredNorm();
  return s;
}

NetGrad backward(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
                 Eigen::MatrixXd* input_grad) {
  if (cache.pre.size() != net.layers.size()) throw InvalidInput("cache does not belong to this network");
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols()) {
    throw InvalidInput("output gradient shape mismatch");
  }
  NetGrad g;
  g.weight.resize(net.layers.size());
  g.bias.resize(net.layers.size());
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& layer = net.layers[k];
    if (layer.activation == Activation::ReLU) delta = delta.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
    g.weight[k].noalias() = delta.transpose() * cache.inputs[k];
    g.bias[k] = delta.colwise().sum().transpose();
    if (k > 0 || input_grad) {
      Eigen::MatrixXd prev;
      prev.noalias() = delta * layer.weight;
      delta.swap(prev);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
  return g;
}

LossResult mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw InvalidInput("mse_loss shape mismatch");
  if (pred.size() == 0) throw InvalidInput("mse_loss on an empty batch");
  const double n = static_cast<double>(pred.size());
  LossResult r;
  r.grad = pred - target;
  r.value = r.grad.squaredNorm() / n;
  r.grad *= 2.0 / n;
  return r;
}

LossResult cross_entropy_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw InvalidInput("one label per row required");
  if (logits.rows() == 0 || logits.cols() == 0) throw InvalidInput("cross_entropy_loss on an empty batch");
  const double n = static_cast<double>(logits.rows());
  LossResult r;
  r.grad.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw InvalidInput("label " + std::to_string(y) + " out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    total += std::log(z) - (logits(i, y) - mx);
    r.grad.row(i) = e / z;
    r.grad(i, y) -= 1.0;
  }
  r.value = total / n;
  r.grad /= n;
  return r;
}

AdamState make_adam(const DenseNet& net, const AdamConfig& config) {
  if (!(config.lr > 0) || !(config.beta1 >= 0 && config.beta1 < 1) || !(config.beta2 >= 0 && config.beta2 < 1) ||
      !(config.eps > 0)) {
    throw InvalidInput("invalid Adam hyperparameters");
  }
  AdamState s;
  s.config = config;
  s.m = NetGrad::zeros_like(net);
  s.v = NetGrad::zeros_like(net);
  return s;
}

void adam_step(DenseNet& net, const NetGrad& grad, AdamState& state) {
  if (grad.weight.size() != net.layers.size() || state.m.weight.size() != net.layers.size()) {
    throw InvalidInput("adam_step: layer count mismatch");
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    update(net.layers[i].weight, grad.weight[i], state.m.weight[i], state.v.weight[i]);
    update(net.layers[i].bias, grad.bias[i], state.m.bias[i], state.v.bias[i]);
  }
}

namespace {

constexpr char kMagic[4] = {'U', 'M', 'L', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw InvalidInput("UMLW file is truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string weights_bytes(const DenseNet& net) {
  net.validate();
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    put<std::uint32_t>(out, l.activation == Activation::ReLU ? 1u : 0u);
  }
  for (const auto& l : net.layers) {
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) put<double>(out, l.weight(r, c));
    }
    for (Index r = 0; r < l.bias.size(); ++r) put<double>(out, l.bias(r));
  }
  return out;
}

DenseNet weights_from_bytes(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw InvalidInput("not a UMLW file");
  Reader rd(bytes);
  rd.get<std::uint32_t>();  // magic
  const auto version = rd.get<std::uint32_t>();
  if (version != kVersion) throw InvalidInput("unsupported UMLW version " + std::to_string(version));
  const auto count = rd.get<std::uint32_t>();
  if (count == 0 || count > 4096) throw InvalidInput("implausible UMLW layer count");
  DenseNet net;
  net.layers.resize(count);
  for (auto& l : net.layers) {
    const auto out = rd.get<std::uint32_t>();
    const auto in = rd.get<std::uint32_t>();
    const auto act = rd.get<std::uint32_t>();
    if (out == 0 || in == 0 || out > (1u << 20) || in > (1u << 20)) throw InvalidInput("implausible UMLW layer dims");
    if (act > 1) throw InvalidInput("unknown UMLW activation code");
    l.weight.resize(out, in);
    l.bias.resize(out);
    l.activation = act ? Activation::ReLU : Activation::Identity;
  }
  for (auto& l : net.layers) {
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rd.get<double>();
    }
    for (Index r = 0; r < l.bias.size(); ++r) l.bias(r) = rd.get<double>();
  }
  if (!rd.done()) throw InvalidInput("UMLW file has trailing bytes");
  net.validate();
  return net;
}

std::string architecture_json(const DenseNet& net) {
  nlohmann::json j;
  j["format"] = "UMLW";
  j["version"] = kVersion;
  j["parameter_count"] = net.parameter_count();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"out", l.out_dim()}, {"in", l.in_dim()}, {"activation", to_string(l.activation)}});
  }
  return j.dump(2) + "\n";
}

void save_weights(const std::filesystem::path& path, const DenseNet& net) {
  write_text_file(path, weights_bytes(net));
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  write_text_file(sidecar, architecture_json(net));
}

DenseNet load_weights(const std::filesystem::path& path) { return weights_from_bytes(read_text_file(path)); }

}  // namespace uml
