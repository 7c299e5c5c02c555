#include "uml/rng.hpp"

namespace uml {

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  SplitMix64 mix(seed);
  std::uint64_t h = mix();
  for (std::uint64_t p : path) {
    SplitMix64 step(h ^ (p * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    h = step();
  }
  return h;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill order so the draw sequence matches the serialized layout.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Eigen::VectorXd Rng::unit_vector(Eigen::Index n) {
  Eigen::VectorXd v = normal_vector(n);
  while (v.norm() == 0.0) v = normal_vector(n);
  return v.normalized();
}

}  // namespace uml
