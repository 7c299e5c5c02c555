#pragma once

// Dense symmetric kernels: spectral decomposition, pseudoinverse, Loewner
// comparisons and range tests. Everything is templated on the scalar type and
// accepts arbitrary Eigen expressions; inputs are symmetrized before use.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "uml/errors.hpp"

namespace uml {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct EigenDecomp {
  Vec<Scalar> eigenvalues;   // descending
  Mat<Scalar> eigenvectors;  // column k pairs with eigenvalues(k)
};

enum class LoewnerRelation { StrictlyLess, LessOrEqual, Incomparable, Equal };

inline const char* to_string(LoewnerRelation r) {
  switch (r) {
    case LoewnerRelation::StrictlyLess: return "strictly_less";
    case LoewnerRelation::LessOrEqual: return "less_or_equal";
    case LoewnerRelation::Incomparable: return "incomparable";
    case LoewnerRelation::Equal: return "equal";
  }
  return "unknown";
}

// Verdict on A relative to B, read off the spectrum of B - A. Incomparable
// covers every case where A <= B fails, including B < A.
template <typename Scalar>
struct LoewnerVerdict {
  LoewnerRelation relation = LoewnerRelation::Equal;
  std::optional<Vec<Scalar>> witness_direction;
  Scalar min_eig_of_difference = 0;
  Scalar max_eig_of_difference = 0;
  Scalar strict_tol = 0;
};

template <typename Derived>
Mat<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  if (s.rows() != s.cols() || s.rows() < 1) {
    throw InvalidInput("symmetric matrix must be square with dim >= 1, got " +
                       std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  }
  if (!s.allFinite()) throw InvalidInput("matrix has non-finite entries");
  Mat<Scalar> out = (s + s.transpose()) / Scalar(2);
  return out;
}

template <typename Derived>
EigenDecomp<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  const Mat<Scalar> sym = symmetrized(s);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success) throw InvalidInput("eigendecomposition did not converge");
  // Eigen returns ascending order.
  EigenDecomp<Scalar> out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

// Relative rank tolerance used when none is given: dim * 1e-12.
template <typename Scalar = double>
Scalar default_rank_tol(Eigen::Index dim) {
  return Scalar(dim) * Scalar(1e-12);
}

// Absolute eigenvalue cutoff: rel_tol * max|eigenvalue|.
template <typename Scalar>
Scalar eigenvalue_cutoff(const Vec<Scalar>& eigenvalues, Scalar rel_tol) {
  const Scalar scale = eigenvalues.size() ? eigenvalues.cwiseAbs().maxCoeff() : Scalar(0);
  return rel_tol * scale;
}

template <typename Derived>
Mat<typename Derived::Scalar> pinv(const Eigen::MatrixBase<Derived>& s,
                                   std::optional<typename Derived::Scalar> rel_tol = std::nullopt) {
  using Scalar = typename Derived::Scalar;
  const auto eig = sym_eig(s);
  const Scalar tol = rel_tol.value_or(default_rank_tol<Scalar>(s.rows()));
  if (!(tol > 0)) throw InvalidInput("rank tolerance must be positive");
  const Scalar cutoff = eigenvalue_cutoff<Scalar>(eig.eigenvalues, tol);
  Vec<Scalar> inv = Vec<Scalar>::Zero(eig.eigenvalues.size());
  for (Eigen::Index k = 0; k < inv.size(); ++k) {
    const Scalar lambda = eig.eigenvalues(k);
    if (std::abs(lambda) > cutoff) inv(k) = Scalar(1) / lambda;
  }
  Mat<Scalar> out = eig.eigenvectors * inv.asDiagonal() * eig.eigenvectors.transpose();
  return (out + out.transpose()) / Scalar(2);
}

// Orthonormal basis (columns) for range(S), using the same cutoff as pinv.
template <typename Derived>
Mat<typename Derived::Scalar> range_basis(const Eigen::MatrixBase<Derived>& s,
                                          std::optional<typename Derived::Scalar> rel_tol = std::nullopt) {
  using Scalar = typename Derived::Scalar;
  const auto eig = sym_eig(s);
  const Scalar cutoff =
      eigenvalue_cutoff<Scalar>(eig.eigenvalues, rel_tol.value_or(default_rank_tol<Scalar>(s.rows())));
  Eigen::Index rank = 0;
  Mat<Scalar> basis(s.rows(), s.rows());
  for (Eigen::Index k = 0; k < eig.eigenvalues.size(); ++k) {
    if (std::abs(eig.eigenvalues(k)) > cutoff) basis.col(rank++) = eig.eigenvectors.col(k);
  }
  return basis.leftCols(rank);
}

template <typename Derived>
Eigen::Index numerical_rank(const Eigen::MatrixBase<Derived>& s,
                            std::optional<typename Derived::Scalar> rel_tol = std::nullopt) {
  return range_basis(s, rel_tol).cols();
}

template <typename DerivedA, typename DerivedB>
LoewnerVerdict<typename DerivedA::Scalar> loewner_compare(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    std::optional<typename DerivedA::Scalar> strict_tol = std::nullopt) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("loewner_compare: dimension mismatch");
  }
  const Mat<Scalar> diff = symmetrized(b) - symmetrized(a);
  const auto eig = sym_eig(diff);
  LoewnerVerdict<Scalar> v;
  v.strict_tol = strict_tol.value_or(Scalar(1e-10) * (Scalar(1) + diff.norm()));
  const Eigen::Index last = eig.eigenvalues.size() - 1;
  v.max_eig_of_difference = eig.eigenvalues(0);
  v.min_eig_of_difference = eig.eigenvalues(last);
  const Vec<Scalar> min_dir = eig.eigenvectors.col(last);

  if (std::max(std::abs(v.max_eig_of_difference), std::abs(v.min_eig_of_difference)) <= v.strict_tol) {
    v.relation = LoewnerRelation::Equal;
  } else if (v.min_eig_of_difference > v.strict_tol) {
    v.relation = LoewnerRelation::StrictlyLess;
    v.witness_direction = min_dir;
  } else if (v.min_eig_of_difference >= -v.strict_tol) {
    v.relation = LoewnerRelation::LessOrEqual;
  } else {
    v.relation = LoewnerRelation::Incomparable;
    v.witness_direction = min_dir;
  }
  return v;
}

// True iff ||(I - P) v|| <= tol * ||v||, P the projector onto range(S).
template <typename DerivedS, typename DerivedV>
bool range_contains(const Eigen::MatrixBase<DerivedS>& s, const Eigen::MatrixBase<DerivedV>& v,
                    typename DerivedS::Scalar tol,
                    std::optional<typename DerivedS::Scalar> rel_rank_tol = std::nullopt) {
  using Scalar = typename DerivedS::Scalar;
  if (v.size() != s.rows()) throw InvalidInput("range_contains: vector length mismatch");
  const Scalar vnorm = v.norm();
  if (!(vnorm > 0)) throw InvalidInput("range_contains: zero vector");
  const Mat<Scalar> basis = range_basis(s, rel_rank_tol);
  const Vec<Scalar> residual = v - basis * (basis.transpose() * v);
  return residual.norm() <= tol * vnorm;
}

template <typename Derived>
bool is_psd(const Eigen::MatrixBase<Derived>& s, typename Derived::Scalar tol) {
  const auto eig = sym_eig(s);
  return eig.eigenvalues(eig.eigenvalues.size() - 1) >= -tol;
}

}  // namespace uml
