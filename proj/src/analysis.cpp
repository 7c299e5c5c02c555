#include "uml/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "uml/errors.hpp"

namespace uml {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_labelled(const MatrixXd& embeddings, const std::vector<int>& labels) {
  if (embeddings.rows() < 1) throw InvalidInput("no embeddings");
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw InvalidInput("expected one label per embedding row, got " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(embeddings.rows()) + " rows");
  }
  if (!embeddings.allFinite()) throw InvalidInput("embeddings must be finite");
}

std::map<int, std::vector<Index>> group_by_label(const std::vector<int>& labels) {
  std::map<int, std::vector<Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Index>(i));
  return groups;
}

VectorXd group_mean(const MatrixXd& m, const std::vector<Index>& rows) {
  VectorXd mean = VectorXd::Zero(m.cols());
  for (Index r : rows) mean += m.row(r).transpose();
  return mean / static_cast<double>(rows.size());
}

}  // namespace

void ClassifierHead::validate() const {
  if (weight.rows() < 1 || weight.cols() < 1) throw InvalidInput("classifier head is empty");
  if (bias.size() != weight.rows()) throw InvalidInput("classifier bias must have one entry per class");
  if (!weight.allFinite() || !bias.allFinite()) throw InvalidInput("classifier head must be finite");
}

MarginResult functional_margin(const ClassifierHead& head, const VectorXd& x, int y, bool include_bias) {
  head.validate();
  if (head.classes() < 2) throw InvalidInput("functional margin needs at least 2 classes");
  if (x.size() != head.dim()) throw InvalidInput("embedding dim does not match the head");
  if (y < 0 || y >= head.classes()) throw InvalidInput("class " + std::to_string(y) + " out of range");
  VectorXd logit = head.weight * x;
  if (include_bias) logit += head.bias;
  MarginResult out;
  out.bias_included = include_bias;
  double best = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < head.classes(); ++j) {
    if (j != y && logit(j) > best) {
      best = logit(j);
      out.competitor = j;
    }
  }
  const VectorXd dw = head.weight.row(y) - head.weight.row(out.competitor);
  const double norm = dw.norm();
  if (norm == 0.0) {
    throw DegenerateHead("classifier rows " + std::to_string(y) + " and " + std::to_string(out.competitor) +
                         " coincide");
  }
  out.margin = (logit(y) - logit(out.competitor)) / norm;
  return out;
}

double silhouette(const MatrixXd& embeddings, const std::vector<int>& labels) {
  check_labelled(embeddings, labels);
  const auto groups = group_by_label(labels);
  if (groups.size() < 2) throw InvalidInput("silhouette needs at least 2 classes");
  const Index n = embeddings.rows();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto& own = groups.at(labels[static_cast<std::size_t>(i)]);
    if (own.size() < 2) continue;  // singleton scores 0
    double a = 0.0;
    for (Index j : own) a += (embeddings.row(i) - embeddings.row(j)).norm();
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, rows] : groups) {
      if (label == labels[static_cast<std::size_t>(i)]) continue;
      double d = 0.0;
      for (Index j : rows) d += (embeddings.row(i) - embeddings.row(j)).norm();
      b = std::min(b, d / static_cast<double>(rows.size()));
    }
    const double denom = std::max(a, b);
    total += denom > 0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

DaviesBouldin davies_bouldin(const MatrixXd& embeddings, const std::vector<int>& labels) {
  check_labelled(embeddings, labels);
  const auto groups = group_by_label(labels);
  if (groups.size() < 2) throw InvalidInput("Davies-Bouldin needs at least 2 classes");
  std::vector<VectorXd> centroids;
  std::vector<double> scatter;
  for (const auto& [label, rows] : groups) {
    centroids.push_back(group_mean(embeddings, rows));
    double s = 0.0;
    for (Index r : rows) s += (embeddings.row(r).transpose() - centroids.back()).norm();
    scatter.push_back(s / static_cast<double>(rows.size()));
  }
  DaviesBouldin out;
  const std::size_t k = centroids.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = (centroids[i] - centroids[j]).norm();
      if (sep == 0.0) {
        out.degenerate = true;
        break;
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    if (out.degenerate) break;
    sum += worst;
  }
  out.value = out.degenerate ? kDaviesBouldinSentinel : sum / static_cast<double>(k);
  return out;
}

PrototypeAlignment prototype_alignment(const ClassifierHead& head, const MatrixXd& class_mean_aux) {
  head.validate();
  if (class_mean_aux.rows() != head.classes() || class_mean_aux.cols() != head.dim()) {
    throw InvalidInput("class means must be classes x dim of the head");
  }
  if (!class_mean_aux.allFinite()) throw InvalidInput("class means must be finite");
  PrototypeAlignment out;
  out.inner = head.weight * class_mean_aux.transpose();
  Index dominant = 0;
  for (Index k = 0; k < out.inner.rows(); ++k) {
    dominant += out.inner(k, k) >= out.inner.row(k).maxCoeff();
  }
  out.dominance = static_cast<double>(dominant) / static_cast<double>(out.inner.rows());
  return out;
}

BoundaryProjection boundary_projection(const ClassifierHead& head, const MatrixXd& embeddings,
                                       const std::vector<int>& labels, int y1, int y2) {
  head.validate();
  check_labelled(embeddings, labels);
  if (embeddings.cols() != head.dim()) throw InvalidInput("embedding dim does not match the head");
  if (y1 == y2 || y1 < 0 || y2 < 0 || y1 >= head.classes() || y2 >= head.classes()) {
    throw InvalidInput("class pair must be two distinct classes of the head");
  }
  const auto groups = group_by_label(labels);
  if (!groups.count(y1) || !groups.count(y2)) throw InvalidInput("both classes need at least one embedding");
  BoundaryProjection out;
  const VectorXd dw = head.weight.row(y1) - head.weight.row(y2);
  const double n1 = dw.norm();
  if (!(n1 > 1e-10)) throw DegenerateGeometry("classifier rows of the pair coincide");
  out.axis1 = dw / n1;
  VectorXd dm = group_mean(embeddings, groups.at(y1)) - group_mean(embeddings, groups.at(y2));
  dm -= out.axis1.dot(dm) * out.axis1;
  const double n2 = dm.norm();
  if (!(n2 > 1e-10)) throw DegenerateGeometry("class-mean difference is parallel to the weight difference");
  out.axis2 = dm / n2;
  // One re-orthogonalization pass keeps |a1 . a2| at rounding level.
  out.axis2 -= out.axis1.dot(out.axis2) * out.axis1;
  out.axis2.normalize();
  out.coords.resize(embeddings.rows(), 2);
  out.coords.col(0) = embeddings * out.axis1;
  out.coords.col(1) = embeddings * out.axis2;
  return out;
}

std::optional<double> pearson(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) throw InvalidInput("pearson needs equal-length inputs");
  if (a.size() < 2) return std::nullopt;
  if (a.minCoeff() == a.maxCoeff() || b.minCoeff() == b.maxCoeff()) return std::nullopt;
  const VectorXd ca = a.array() - a.mean();
  const VectorXd cb = b.array() - b.mean();
  const double na = ca.norm();
  const double nb = cb.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(ca.dot(cb) / (na * nb), -1.0, 1.0);
}

std::vector<NeuronCorrelation> neuron_correlations(const MatrixXd& acts_v, const MatrixXd& acts_t,
                                                   const std::vector<int>& labels) {
  if (acts_v.rows() != acts_t.rows() || acts_v.cols() != acts_t.cols()) {
    throw InvalidInput("activation matrices must have equal sample and neuron counts");
  }
  check_labelled(acts_v, labels);
  if (!acts_t.allFinite()) throw InvalidInput("activations must be finite");
  const auto groups = group_by_label(labels);
  std::vector<NeuronCorrelation> out;
  for (Index j = 0; j < acts_v.cols(); ++j) {
    NeuronCorrelation nc;
    nc.neuron = j;
    const auto r = pearson(acts_v.col(j), acts_t.col(j));
    nc.overall = r.value_or(0.0);
    nc.overall_undefined = !r;
    for (const auto& [label, rows] : groups) {
      VectorXd a(static_cast<Index>(rows.size())), b(static_cast<Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        a(static_cast<Index>(i)) = acts_v(rows[i], j);
        b(static_cast<Index>(i)) = acts_t(rows[i], j);
      }
      const auto ry = pearson(a, b);
      nc.per_label[label] = ry.value_or(0.0);
      nc.per_label_undefined[label] = !ry;
      nc.counts[label] = static_cast<Index>(rows.size());
    }
    out.push_back(std::move(nc));
  }
  return out;
}

double shot_transform(double n) {
  if (!(n >= 0) || !std::isfinite(n)) throw InvalidInput("shot counts must be finite and >= 0");
  return std::log2(1.0 + n);
}

MrsFit mrs_plane_fit(const std::vector<ShotPoint>& points, std::optional<double> mean_words_per_text) {
  if (points.size() < 3) throw InvalidInput("plane fit needs at least 3 points");
  if (mean_words_per_text && !(*mean_words_per_text > 0 && std::isfinite(*mean_words_per_text))) {
    throw InvalidInput("mean words per text must be finite and > 0");
  }
  const Index n = static_cast<Index>(points.size());
  MatrixXd a(n, 3);
  VectorXd acc(n);
  for (Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    if (!std::isfinite(p.accuracy)) throw InvalidInput("accuracies must be finite");
    a(i, 0) = shot_transform(p.img_shots);
    a(i, 1) = shot_transform(p.txt_shots);
    a(i, 2) = 1.0;
    acc(i) = p.accuracy;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw RankDeficientFit("shot points are collinear; the plane is not determined");
  const VectorXd coef = qr.solve(acc);
  MrsFit fit;
  fit.alpha_img = coef(0);
  fit.alpha_txt = coef(1);
  fit.intercept = coef(2);
  const VectorXd resid = acc - a * coef;
  fit.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
  if (n > 3) {
    const double s2 = resid.squaredNorm() / static_cast<double>(n - 3);
    const MatrixXd cov = s2 * (a.transpose() * a).inverse();
    fit.se_img = std::sqrt(std::max(0.0, cov(0, 0)));
    fit.se_txt = std::sqrt(std::max(0.0, cov(1, 1)));
  }
  const double scale = std::max({std::abs(fit.alpha_img), std::abs(fit.alpha_txt), acc.cwiseAbs().maxCoeff(), 1e-300});
  fit.texts_per_image_unbounded = std::abs(fit.alpha_txt) <= std::max(1e-9 * scale, 3.0 * fit.se_txt);
  fit.images_per_text_unbounded = std::abs(fit.alpha_img) <= std::max(1e-9 * scale, 3.0 * fit.se_img);
  if (!fit.texts_per_image_unbounded) fit.texts_per_image = fit.alpha_img / fit.alpha_txt;
  if (!fit.images_per_text_unbounded) fit.images_per_text = fit.alpha_txt / fit.alpha_img;
  if (fit.texts_per_image && mean_words_per_text) fit.words_per_image = *fit.texts_per_image * *mean_words_per_text;
  return fit;
}

}  // namespace uml
