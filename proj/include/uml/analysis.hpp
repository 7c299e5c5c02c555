#pragma once

// Post-hoc metrics on classifier heads and embeddings: margins, cluster
// quality, prototype alignment, boundary projections, cross-modal neuron
// correlations and the shot exchange-rate plane fit.

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uml {

using Eigen::Index;

struct ClassifierHead {
  Eigen::MatrixXd weight;  // classes x dim
  Eigen::VectorXd bias;    // classes

  Index classes() const { return weight.rows(); }
  Index dim() const { return weight.cols(); }
  // Throws InvalidInput on shape mismatch, no classes or non-finite values.
  void validate() const;
};

struct MarginResult {
  double margin = 0.0;
  Index competitor = 0;  // highest-logit class other than the true one
  bool bias_included = false;
};

// (w_y - w_j)^T x [+ b_y - b_j] over ||w_y - w_j||, j the strongest competitor.
// Biases enter the competitor argmax and the numerator when include_bias.
MarginResult functional_margin(const ClassifierHead& head, const Eigen::VectorXd& x, int y, bool include_bias = true);

// Mean silhouette with Euclidean distances. A sample alone in its class
// scores 0.
double silhouette(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels);

struct DaviesBouldin {
  double value = 0.0;
  bool degenerate = false;  // two centroids coincide; value is the sentinel
};
inline constexpr double kDaviesBouldinSentinel = 1e9;
DaviesBouldin davies_bouldin(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels);

struct PrototypeAlignment {
  Eigen::MatrixXd inner;  // (k, l) = <w_k, mean_aux_l>
  double dominance = 0.0;  // fraction of rows whose diagonal is the row max
};
PrototypeAlignment prototype_alignment(const ClassifierHead& head, const Eigen::MatrixXd& class_mean_aux);

struct BoundaryProjection {
  Eigen::VectorXd axis1;
  Eigen::VectorXd axis2;
  Eigen::MatrixXd coords;  // n x 2
};
// axis1 = normalized w_y1 - w_y2; axis2 = normalized part of the class-mean
// difference orthogonal to axis1.
BoundaryProjection boundary_projection(const ClassifierHead& head, const Eigen::MatrixXd& embeddings,
                                       const std::vector<int>& labels, int y1, int y2);

struct NeuronCorrelation {
  Index neuron = 0;
  double overall = 0.0;
  bool overall_undefined = false;
  std::map<int, double> per_label;
  std::map<int, bool> per_label_undefined;
  std::map<int, Index> counts;
};
// Pearson correlation per neuron between index-matched rows of the two
// activation matrices; undefined correlations are 0 and flagged.
std::vector<NeuronCorrelation> neuron_correlations(const Eigen::MatrixXd& acts_v, const Eigen::MatrixXd& acts_t,
                                                   const std::vector<int>& labels);

// Pearson correlation of two equal-length vectors; nullopt when undefined.
std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct ShotPoint {
  double img_shots = 0.0;
  double txt_shots = 0.0;
  double accuracy = 0.0;
};

struct MrsFit {
  double alpha_img = 0.0;
  double alpha_txt = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  double se_img = 0.0;  // standard errors; 0 without residual degrees of freedom
  double se_txt = 0.0;
  std::optional<double> texts_per_image;  // alpha_img / alpha_txt
  std::optional<double> images_per_text;
  bool texts_per_image_unbounded = false;  // alpha_txt below the significance floor
  bool images_per_text_unbounded = false;  // alpha_img below the significance floor
  std::optional<double> words_per_image;
  std::string shot_transform = "log2(1+n)";
};

double shot_transform(double n);

// Least-squares plane acc ~ a_img g(img) + a_txt g(txt) + c with g = log2(1+n).
// A coefficient counts as zero below max(1e-9 * scale, 3 * its standard error).
MrsFit mrs_plane_fit(const std::vector<ShotPoint>& points, std::optional<double> mean_words_per_text = std::nullopt);

}  // namespace uml
