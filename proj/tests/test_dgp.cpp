#include <gtest/gtest.h>

#include <cmath>

#include "uml/dgp.hpp"
#include "uml/errors.hpp"
#include "uml/matrix_kernels.hpp"
#include "uml/report_json.hpp"
#include "uml/rng.hpp"

using namespace uml;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LinearDgpSpec small_spec(double sigma, std::uint64_t seed = 11) {
  return make_orthogonal_spec({2, 1, 1}, 5, 4, 2, 3, sigma, sigma, seed);
}

VectorXd x_mean(const LinearDgpSpec& s, Index slot) {
  const auto& d = s.x_designs[static_cast<std::size_t>(slot)];
  return d.a_c * s.theta_c() + d.a_x * s.theta_x();
}

VectorXd y_mean(const LinearDgpSpec& s, Index slot) {
  const auto& d = s.y_designs[static_cast<std::size_t>(slot)];
  return d.b_c * s.theta_c() + d.b_y * s.theta_y();
}

}  // namespace

TEST(Dgp, ZeroNoiseReproducesMeansExactly) {
  const auto spec = small_spec(0.0);
  const auto data = sample_datasets(spec, 7, 9, 3);
  for (Index i = 0; i < 7; ++i) {
    EXPECT_EQ(data.x.design_index[static_cast<std::size_t>(i)], i % 2);
    EXPECT_EQ((data.x.observations.row(i).transpose() - x_mean(spec, i % 2)).norm(), 0.0);
  }
  for (Index j = 0; j < 9; ++j) {
    EXPECT_EQ(data.y.design_index[static_cast<std::size_t>(j)], j % 3);
    EXPECT_EQ((data.y.observations.row(j).transpose() - y_mean(spec, j % 3)).norm(), 0.0);
  }
}

TEST(Dgp, DeterministicAndPrefixStable) {
  const auto spec = small_spec(0.7);
  const auto a = sample_datasets(spec, 20, 10, 5);
  const auto b = sample_datasets(spec, 20, 10, 5);
  EXPECT_EQ(a.x.observations, b.x.observations);
  EXPECT_EQ(a.y.observations, b.y.observations);
  // Sample i depends only on (seed, modality, i).
  const auto shorter = sample_datasets(spec, 5, 0, 5);
  EXPECT_EQ(shorter.x.observations, a.x.observations.topRows(5));
  const auto other = sample_datasets(spec, 20, 10, 6);
  EXPECT_NE(other.x.observations, a.x.observations);
}

TEST(Dgp, NoiseVarianceWithinFivePercent) {
  const double sigma = 0.3;
  const auto spec = small_spec(sigma);
  const Index n = 20000;
  const auto data = sample_datasets(spec, n, n, 7);
  double sx = 0.0, sy = 0.0;
  for (Index i = 0; i < n; ++i) {
    sx += (data.x.observations.row(i).transpose() - x_mean(spec, i % 2)).squaredNorm();
    sy += (data.y.observations.row(i).transpose() - y_mean(spec, i % 3)).squaredNorm();
  }
  const double vx = sx / static_cast<double>(n * spec.x_rows());
  const double vy = sy / static_cast<double>(n * spec.y_rows());
  EXPECT_NEAR(vx / (sigma * sigma), 1.0, 0.05);
  EXPECT_NEAR(vy / (sigma * sigma), 1.0, 0.05);
}

TEST(Dgp, OrthogonalDesignsAndFullRank) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = make_orthogonal_spec({3, 2, 2}, 8, 6, 2, 2, 1.0, 1.0, seed);
    for (const auto& d : spec.x_designs) {
      EXPECT_LE((d.a_c.transpose() * d.a_x).cwiseAbs().maxCoeff(), 1e-12);
      MatrixXd full(d.a_c.rows(), 5);
      full << d.a_c, d.a_x;
      const auto e = sym_eig(MatrixXd(full.transpose() * full));
      EXPECT_GT(e.eigenvalues.minCoeff(), 1e-8);
    }
    for (const auto& d : spec.y_designs) {
      EXPECT_LE((d.b_c.transpose() * d.b_y).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Dgp, ZeroModalitySpecificDimension) {
  const auto spec = make_orthogonal_spec({3, 0, 1}, 4, 4, 1, 1, 0.1, 0.1, 2);
  EXPECT_EQ(spec.x_designs[0].a_x.cols(), 0);
  EXPECT_EQ(spec.theta_true.size(), 4);
  const auto data = sample_datasets(spec, 3, 3, 1);
  EXPECT_EQ(data.x.observations.cols(), 4);
}

TEST(Dgp, ValidationErrors) {
  auto spec = small_spec(1.0);
  spec.sigma_x = -1.0;
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = small_spec(1.0);
  spec.theta_true.conservativeResize(2);
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = small_spec(1.0);
  spec.x_designs[1].a_c = MatrixXd::Zero(3, 2);
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = small_spec(1.0);
  spec.x_designs.clear();
  spec.y_designs.clear();
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = small_spec(1.0);
  spec.x_designs.clear();
  EXPECT_THROW(sample_datasets(spec, 1, 0, 0), InvalidInput);
  EXPECT_THROW(make_orthogonal_spec({3, 2, 0}, 4, 4, 1, 1, 1, 1, 0), InvalidInput);
}

TEST(AttenuatedSpec, ColumnGainsAndValidationCopy) {
  AttenuatedSpecOptions o;
  const auto pair = make_attenuated_gaussian_spec(4, o);
  EXPECT_EQ(pair.full_strength_columns, 1);
  const MatrixXd& train = pair.train.x_designs[0].a_c;
  const MatrixXd& val = pair.validation.x_designs[0].a_c;
  EXPECT_EQ(train.col(0), val.col(0));
  for (Index c = 1; c < o.d_c; ++c) EXPECT_NEAR((train.col(c) - 0.05 * val.col(c)).norm(), 0.0, 1e-15);
  EXPECT_EQ(pair.train.x_designs[0].a_x, pair.validation.x_designs[0].a_x);
  EXPECT_EQ(pair.train.y_designs[0].b_c, pair.validation.y_designs[0].b_c);
  EXPECT_NEAR(pair.train.sigma_x, 0.3, 1e-15);

  o.shared_projection = true;
  const auto shared = make_attenuated_gaussian_spec(4, o);
  EXPECT_EQ(shared.validation.x_designs[0].a_c, shared.validation.y_designs[0].b_c);
  o.entry_scale = 0.0;
  const auto scaled = make_attenuated_gaussian_spec(4, o);
  EXPECT_NEAR((scaled.validation.x_designs[0].a_c - shared.validation.x_designs[0].a_c / std::sqrt(20.0)).norm(), 0.0,
              1e-12);
}

TEST(AttenuatedSpec, LatentSamplesShareCommonFactorCovariance) {
  AttenuatedSpecOptions o;
  o.noise_variance = 0.0;
  const auto pair = make_attenuated_gaussian_spec(9, o);
  const Index n = 20000;
  const auto data = sample_latent_datasets(pair.validation, n, 0, 3);
  // Cov(X) = A_c A_c^T + A_x A_x^T for theta ~ N(0, I).
  const auto& d = pair.validation.x_designs[0];
  const MatrixXd expected = d.a_c * d.a_c.transpose() + d.a_x * d.a_x.transpose();
  const MatrixXd centered = data.x.observations.rowwise() - data.x.observations.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  EXPECT_LE((cov - expected).norm() / expected.norm(), 0.05);
  EXPECT_LE(data.x.observations.colwise().mean().norm() / std::sqrt(expected.trace()), 0.05);
}

TEST(SpecJson, RoundTripIsExact) {
  const auto spec = make_orthogonal_spec({2, 0, 3}, 5, 6, 2, 1, 0.25, 0.5, 8);
  const Json j = to_json(spec);
  const auto back = spec_from_json(Json::parse(j.dump()));
  EXPECT_EQ(back.partition, spec.partition);
  EXPECT_EQ(back.theta_true, spec.theta_true);
  EXPECT_EQ(back.sigma_x, spec.sigma_x);
  ASSERT_EQ(back.x_designs.size(), 2u);
  EXPECT_EQ(back.x_designs[1].a_c, spec.x_designs[1].a_c);
  EXPECT_EQ(back.x_designs[1].a_x.rows(), 5);
  EXPECT_EQ(back.y_designs[0].b_y, spec.y_designs[0].b_y);
  EXPECT_EQ(sample_datasets(back, 4, 4, 1).y.observations, sample_datasets(spec, 4, 4, 1).y.observations);
}

TEST(SpecJson, MalformedDocumentsRejected) {
  Json j = to_json(small_spec(1.0));
  Json bad = j;
  bad.erase("sigma_x");
  EXPECT_THROW(spec_from_json(bad), InvalidInput);
  bad = j;
  bad["x_designs"][0]["a_c"][0].push_back(1.0);
  EXPECT_THROW(spec_from_json(bad), InvalidInput);
  bad = j;
  bad["theta_true"][0] = "one";
  EXPECT_THROW(spec_from_json(bad), InvalidInput);
}
