#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "uml/analysis.hpp"
#include "uml/errors.hpp"
#include "uml/rng.hpp"

using namespace uml;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ClassifierHead make_head(const MatrixXd& w, const VectorXd& b) { return ClassifierHead{w, b}; }

// Brute force over every competitor: the margin against the strongest one.
double margin_oracle(const ClassifierHead& h, const VectorXd& x, int y) {
  double best_logit = -std::numeric_limits<double>::infinity();
  int best = -1;
  for (int j = 0; j < h.classes(); ++j) {
    if (j == y) continue;
    double l = h.bias(j);
    for (int d = 0; d < h.dim(); ++d) l += h.weight(j, d) * x(d);
    if (l > best_logit) {
      best_logit = l;
      best = j;
    }
  }
  double num = h.bias(y) - h.bias(best);
  double norm2 = 0.0;
  for (int d = 0; d < h.dim(); ++d) {
    const double diff = h.weight(y, d) - h.weight(best, d);
    num += diff * x(d);
    norm2 += diff * diff;
  }
  return num / std::sqrt(norm2);
}

double dist(const MatrixXd& e, int i, int j) {
  double s = 0.0;
  for (int d = 0; d < e.cols(); ++d) s += (e(i, d) - e(j, d)) * (e(i, d) - e(j, d));
  return std::sqrt(s);
}

// Pairwise-distance silhouette with singleton score 0.
double silhouette_oracle(const MatrixXd& e, const std::vector<int>& labels) {
  const int n = static_cast<int>(e.rows());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> by_label;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      auto& slot = by_label[labels[j]];
      slot.first += dist(e, i, j);
      slot.second += 1;
    }
    if (!by_label.count(labels[i])) continue;
    const double a = by_label[labels[i]].first / by_label[labels[i]].second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : by_label) {
      if (l != labels[i]) b = std::min(b, s.first / s.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / n;
}

double davies_bouldin_oracle(const MatrixXd& e, const std::vector<int>& labels) {
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) groups[labels[i]].push_back(i);
  std::vector<VectorXd> c;
  std::vector<double> s;
  for (const auto& [l, rows] : groups) {
    VectorXd m = VectorXd::Zero(e.cols());
    for (int r : rows) m += e.row(r).transpose();
    m /= rows.size();
    double sc = 0.0;
    for (int r : rows) sc += (e.row(r).transpose() - m).norm();
    c.push_back(m);
    s.push_back(sc / rows.size());
  }
  double total = 0.0;
  for (size_t i = 0; i < c.size(); ++i) {
    double worst = 0.0;
    for (size_t j = 0; j < c.size(); ++j) {
      if (i != j) worst = std::max(worst, (s[i] + s[j]) / (c[i] - c[j]).norm());
    }
    total += worst;
  }
  return total / c.size();
}

MatrixXd six_points() {
  MatrixXd e(6, 2);
  e << 0, 0, 1, 0, 0, 2, 5, 5, 6, 5, 5, 7;
  return e;
}

}  // namespace

TEST(FunctionalMargin, HandArithmetic) {
  MatrixXd w(2, 2);
  w << 1, 0, -1, 0;
  const auto r = functional_margin(make_head(w, VectorXd::Zero(2)), VectorXd::Unit(2, 0), 0);
  EXPECT_DOUBLE_EQ(r.margin, 1.0);
  EXPECT_EQ(r.competitor, 1);
}

TEST(FunctionalMargin, ZeroOnPairwiseBoundary) {
  MatrixXd w(2, 2);
  w << 1, 0, -1, 0;
  VectorXd x(2);
  x << 0, 3;
  EXPECT_EQ(functional_margin(make_head(w, VectorXd::Zero(2)), x, 0).margin, 0.0);
}

TEST(FunctionalMargin, MatchesExhaustiveCompetitorSearch) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto h = make_head(rng.normal_matrix(5, 4), rng.normal_vector(5));
    const VectorXd x = rng.normal_vector(4);
    const int y = static_cast<int>(rng.integer(0, 4));
    EXPECT_NEAR(functional_margin(h, x, y).margin, margin_oracle(h, x, y), 1e-12);
  }
}

TEST(FunctionalMargin, PositiveRescalingIsInvariant) {
  Rng rng(12);
  const auto h = make_head(rng.normal_matrix(6, 3), rng.normal_vector(6));
  for (double s : {0.01, 0.5, 3.0, 250.0}) {
    const auto scaled = make_head(s * h.weight, s * h.bias);
    for (int rep = 0; rep < 10; ++rep) {
      const VectorXd x = rng.normal_vector(3);
      const auto a = functional_margin(h, x, rep % 6);
      const auto b = functional_margin(scaled, x, rep % 6);
      EXPECT_EQ(a.competitor, b.competitor);
      EXPECT_NEAR(b.margin, a.margin, 1e-12 * (1.0 + std::abs(a.margin)));
    }
  }
}

TEST(FunctionalMargin, BiasFreeFormIgnoresBias) {
  MatrixXd w(2, 1);
  w << 1, -1;
  VectorXd b(2);
  b << 0.5, 0.0;
  VectorXd x(1);
  x << 1.0;
  EXPECT_DOUBLE_EQ(functional_margin(make_head(w, b), x, 0, true).margin, 1.25);
  EXPECT_DOUBLE_EQ(functional_margin(make_head(w, b), x, 0, false).margin, 1.0);
}

TEST(FunctionalMargin, Errors) {
  MatrixXd w(2, 2);
  w << 1, 1, 1, 1;
  EXPECT_THROW(functional_margin(make_head(w, VectorXd::Zero(2)), VectorXd::Ones(2), 0), DegenerateHead);
  EXPECT_THROW(functional_margin(make_head(MatrixXd::Ones(1, 2), VectorXd::Zero(1)), VectorXd::Ones(2), 0),
               InvalidInput);
  EXPECT_THROW(functional_margin(make_head(w, VectorXd::Zero(2)), VectorXd::Ones(3), 0), InvalidInput);
}

TEST(Silhouette, SeparatedClustersScoreHigh) {
  MatrixXd e(4, 2);
  e << 0, 0, 0.01, 0, 1, 0, 1.01, 0;
  e.bottomRows(2).col(0).array() += 100.0;
  EXPECT_GT(silhouette(e, {0, 0, 1, 1}), 0.95);
}

TEST(Silhouette, MatchesPairwiseOracle) {
  const MatrixXd e = six_points();
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  EXPECT_NEAR(silhouette(e, labels), silhouette_oracle(e, labels), 1e-12);
  const std::vector<int> mixed = {0, 1, 0, 1, 0, 2};
  EXPECT_NEAR(silhouette(e, mixed), silhouette_oracle(e, mixed), 1e-12);
}

TEST(Silhouette, SingletonScoresZero) {
  MatrixXd e(3, 1);
  e << 0, 1, 10;
  // Samples 0 and 1: a = 1, b = 10 and 9; sample 2 is alone.
  EXPECT_NEAR(silhouette(e, {0, 0, 1}), ((10.0 - 1.0) / 10.0 + (9.0 - 1.0) / 9.0) / 3.0, 1e-15);
}

TEST(Silhouette, DuplicationInvariant) {
  Rng rng(3);
  MatrixXd base(3, 2);
  base << 0, 0, 4, 0, 0, 5;
  for (int copies : {2, 3, 5}) {
    MatrixXd e(3 * copies, 2);
    std::vector<int> labels;
    for (int k = 0; k < 3; ++k) {
      for (int c = 0; c < copies; ++c) {
        e.row(k * copies + c) = base.row(k);
        labels.push_back(k);
      }
    }
    // Duplicated points at distinct locations: a = 0 and each sample scores 1.
    EXPECT_DOUBLE_EQ(silhouette(e, labels), 1.0);
  }
}

TEST(Silhouette, SingleClassRejected) {
  EXPECT_THROW(silhouette(six_points(), std::vector<int>(6, 0)), InvalidInput);
  EXPECT_THROW(silhouette(six_points(), {0, 1}), InvalidInput);
}

TEST(DaviesBouldin, MatchesOracle) {
  const MatrixXd e = six_points();
  for (const std::vector<int>& labels : {std::vector<int>{0, 0, 0, 1, 1, 1}, std::vector<int>{0, 1, 2, 0, 1, 2}}) {
    const auto db = davies_bouldin(e, labels);
    EXPECT_FALSE(db.degenerate);
    EXPECT_NEAR(db.value, davies_bouldin_oracle(e, labels), 1e-12);
  }
}

TEST(DaviesBouldin, CoincidentCentroidsFlagged) {
  MatrixXd e(4, 1);
  e << -1, 1, -2, 2;
  const auto db = davies_bouldin(e, {0, 0, 1, 1});
  EXPECT_TRUE(db.degenerate);
  EXPECT_EQ(db.value, kDaviesBouldinSentinel);
}

TEST(PrototypeAlignment, OrthonormalMeansGiveIdentity) {
  Rng rng(5);
  const Eigen::HouseholderQR<MatrixXd> qr(rng.normal_matrix(4, 4));
  const MatrixXd q = qr.householderQ();
  const auto pa = prototype_alignment(make_head(q.transpose(), VectorXd::Zero(4)), q.transpose());
  EXPECT_LT((pa.inner - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(pa.dominance, 1.0);
}

TEST(PrototypeAlignment, RandomHeadDominanceNearChance) {
  Rng rng(6);
  const int k = 4;
  const int draws = 4000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) {
    sum += prototype_alignment(make_head(rng.normal_matrix(k, 3), VectorXd::Zero(k)), rng.normal_matrix(k, 3)).dominance;
  }
  // Each row's diagonal is its max with probability 1/K by symmetry; the
  // dominance of one draw has variance at most 1/(4K).
  const double se = std::sqrt(0.25 / k / draws);
  EXPECT_NEAR(sum / draws, 1.0 / k, 4 * se);
}

TEST(PrototypeAlignment, SingleClass) {
  MatrixXd w(1, 2), m(1, 2);
  w << 1, 2;
  m << 3, 4;
  const auto pa = prototype_alignment(make_head(w, VectorXd::Zero(1)), m);
  ASSERT_EQ(pa.inner.rows(), 1);
  EXPECT_EQ(pa.inner(0, 0), 11.0);
  EXPECT_EQ(pa.dominance, 1.0);
}

TEST(BoundaryProjection, HandInstance) {
  MatrixXd w(2, 2);
  w << 2, 0, 0, 0;
  MatrixXd e(4, 2);
  e << 1, 2, 1, 0, 0, 1, 0, -1;
  const auto bp = boundary_projection(make_head(w, VectorXd::Zero(2)), e, {0, 0, 1, 1}, 0, 1);
  // axis1 = (1, 0); mean difference (1, 1) minus its axis1 part gives (0, 1).
  EXPECT_NEAR((bp.axis1 - VectorXd::Unit(2, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((bp.axis2 - VectorXd::Unit(2, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((bp.coords - e).norm(), 0.0, 1e-15);
}

TEST(BoundaryProjection, AxesOrthonormalAndAxis1Embedding) {
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const auto h = make_head(rng.normal_matrix(3, 6), VectorXd::Zero(3));
    const MatrixXd e = rng.normal_matrix(9, 6);
    const auto bp = boundary_projection(h, e, {0, 1, 2, 0, 1, 2, 0, 1, 2}, 0, 2);
    EXPECT_LE(std::abs(bp.axis1.dot(bp.axis2)), 1e-12);
    EXPECT_NEAR(bp.axis1.norm(), 1.0, 1e-12);
    EXPECT_NEAR(bp.axis2.norm(), 1.0, 1e-12);
    MatrixXd along = e;
    along.row(0) = 2.5 * bp.axis1.transpose();
    const auto again = boundary_projection(h, along, {0, 1, 2, 0, 1, 2, 0, 1, 2}, 0, 2);
    EXPECT_NEAR(along.row(0).dot(again.axis2), 0.0, 1e-12);
    EXPECT_NEAR(along.row(0).dot(again.axis1), 2.5, 1e-12);
  }
}

TEST(BoundaryProjection, DegenerateGeometry) {
  MatrixXd w(2, 2);
  w << 1, 0, 0, 0;
  MatrixXd e(2, 2);
  e << 1, 0, 0, 0;
  EXPECT_THROW(boundary_projection(make_head(w, VectorXd::Zero(2)), e, {0, 1}, 0, 1), DegenerateGeometry);
}

TEST(NeuronCorrelations, IdenticalAndNegated) {
  Rng rng(9);
  const MatrixXd v = rng.normal_matrix(30, 4);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[i] = i % 3;
  for (const auto& c : neuron_correlations(v, v, labels)) {
    EXPECT_NEAR(c.overall, 1.0, 1e-12);
    for (const auto& [l, r] : c.per_label) EXPECT_NEAR(r, 1.0, 1e-12);
    EXPECT_EQ(c.counts.at(0), 10);
  }
  for (const auto& c : neuron_correlations(v, -v, labels)) EXPECT_NEAR(c.overall, -1.0, 1e-12);
}

TEST(NeuronCorrelations, ConstantColumnIsZeroAndFlagged) {
  Rng rng(10);
  MatrixXd v = rng.normal_matrix(12, 2);
  v.col(1).setConstant(0.7);
  const auto nc = neuron_correlations(v, rng.normal_matrix(12, 2), std::vector<int>(12, 0));
  EXPECT_FALSE(nc[0].overall_undefined);
  EXPECT_TRUE(nc[1].overall_undefined);
  EXPECT_EQ(nc[1].overall, 0.0);
  EXPECT_TRUE(nc[1].per_label_undefined.at(0));
}

TEST(NeuronCorrelations, PositiveAffineInvariance) {
  Rng rng(13);
  const MatrixXd v = rng.normal_matrix(40, 3);
  const MatrixXd t = v + 0.8 * rng.normal_matrix(40, 3);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) labels[i] = i % 2;
  MatrixXd t2 = t;
  for (int j = 0; j < 3; ++j) t2.col(j) = (2.0 + j) * t.col(j).array() - 7.0 * j;
  const auto a = neuron_correlations(v, t, labels);
  const auto b = neuron_correlations(v, t2, labels);
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(a[j].overall, b[j].overall, 1e-12);
    EXPECT_NEAR(a[j].per_label.at(1), b[j].per_label.at(1), 1e-12);
  }
}

TEST(NeuronCorrelations, ShapeMismatch) {
  EXPECT_THROW(neuron_correlations(MatrixXd::Ones(3, 2), MatrixXd::Ones(4, 2), {0, 0, 0}), InvalidInput);
}

namespace {

// Normal equations on the log2(1 + n) design, solved independently of the fit.
Eigen::Vector3d normal_equations(const std::vector<ShotPoint>& pts) {
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d row(std::log2(1 + p.img_shots), std::log2(1 + p.txt_shots), 1.0);
    ata += row * row.transpose();
    atb += row * p.accuracy;
  }
  return ata.ldlt().solve(atb);
}

std::vector<ShotPoint> planted_grid(double a_img, double a_txt, double c) {
  std::vector<ShotPoint> pts;
  for (double i : {0, 1, 2, 4, 8, 16}) {
    for (double t : {0, 1, 2, 4, 8, 16}) {
      pts.push_back({i, t, a_img * std::log2(1 + i) + a_txt * std::log2(1 + t) + c});
    }
  }
  return pts;
}

}  // namespace

TEST(MrsPlaneFit, RecoversPlantedPlane) {
  const auto pts = planted_grid(0.10, 0.02, 0.3);
  const auto fit = mrs_plane_fit(pts, 12.0);
  const Eigen::Vector3d oracle = normal_equations(pts);
  EXPECT_NEAR(fit.alpha_img, oracle(0), 1e-9);
  EXPECT_NEAR(fit.alpha_txt, oracle(1), 1e-9);
  EXPECT_NEAR(fit.intercept, oracle(2), 1e-9);
  ASSERT_TRUE(fit.texts_per_image.has_value());
  EXPECT_NEAR(*fit.texts_per_image, 5.0, 1e-9);
  EXPECT_NEAR(*fit.images_per_text, 0.2, 1e-9);
  EXPECT_NEAR(*fit.words_per_image, 60.0, 1e-8);
  EXPECT_LT(fit.residual_rms, 1e-12);
  EXPECT_EQ(fit.shot_transform, "log2(1+n)");
}

TEST(MrsPlaneFit, ZeroTextSlopeIsUnbounded) {
  const auto fit = mrs_plane_fit(planted_grid(0.10, 0.0, 0.3));
  EXPECT_TRUE(fit.texts_per_image_unbounded);
  EXPECT_FALSE(fit.texts_per_image.has_value());
  EXPECT_FALSE(fit.images_per_text_unbounded);
  EXPECT_NEAR(*fit.images_per_text, 0.0, 1e-9);
}

TEST(MrsPlaneFit, CollinearRejected) {
  std::vector<ShotPoint> pts = {{0, 0, 0.1}, {1, 1, 0.2}, {3, 3, 0.3}, {7, 7, 0.4}};
  EXPECT_THROW(mrs_plane_fit(pts), RankDeficientFit);
  EXPECT_THROW(mrs_plane_fit({{0, 0, 0.1}, {1, 2, 0.2}}), InvalidInput);
}

TEST(MrsPlaneFit, NoisyRecoveryWithinThreeSigma) {
  Rng rng(21);
  int inside = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    auto pts = planted_grid(0.10, 0.02, 0.3);
    for (auto& p : pts) p.accuracy += 0.01 * rng.normal();
    const auto fit = mrs_plane_fit(pts);
    inside += std::abs(fit.alpha_img - 0.10) <= 3 * fit.se_img && std::abs(fit.alpha_txt - 0.02) <= 3 * fit.se_txt;
  }
  // Two 3-sigma intervals hold jointly with probability above 0.99 up to t-tails.
  EXPECT_GE(inside, static_cast<int>(0.95 * reps));
}
