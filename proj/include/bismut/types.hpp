#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bismut {

// Upper bound on base dimension and bundle ranks. Every dense object in the
// hot path has this as its compile-time capacity, so no heap traffic occurs
// while simulating.
inline constexpr int kMaxDim = 4;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

using Vec = VectorX<double>;
using Mat = MatrixX<double>;

/// Rank-3 array T^a_{bc}; slice[a](b, c).
template <typename Scalar>
struct Tensor3 {
  int dim = 0;
  std::array<MatrixX<Scalar>, kMaxDim> slice;

  explicit Tensor3(int n = 0) : dim(n) {
    for (int a = 0; a < n; ++a) slice[a] = MatrixX<Scalar>::Zero(n, n);
  }
  Scalar operator()(int a, int b, int c) const { return slice[a](b, c); }
  Scalar& operator()(int a, int b, int c) { return slice[a](b, c); }
};

/// Rank-4 array R^a_{bcd}; slice[a * dim + b](c, d).
template <typename Scalar>
struct Tensor4 {
  int dim = 0;
  std::array<MatrixX<Scalar>, kMaxDim * kMaxDim> slice;

  explicit Tensor4(int n = 0) : dim(n) {
    for (int k = 0; k < n * n; ++k) slice[k] = MatrixX<Scalar>::Zero(n, n);
  }
  Scalar operator()(int a, int b, int c, int d) const { return slice[a * dim + b](c, d); }
  Scalar& operator()(int a, int b, int c, int d) { return slice[a * dim + b](c, d); }
};

using Christoffel = Tensor3<double>;
using Riemann = Tensor4<double>;

/// Matrix-valued 1-form in chart indices: forms[b] is the coefficient of dx^b.
using MatrixForm = std::array<Mat, kMaxDim>;

/// Matrix-valued 2-form in chart indices: forms[b * dim + c] is F_{bc}.
using MatrixTwoForm = std::array<Mat, kMaxDim * kMaxDim>;

/// Raised when a point leaves the usable chart domain. Simulation code turns
/// this into a rejected path; deterministic callers let it propagate.
class ChartError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Infinity-norm distance of a square matrix from the identity.
template <typename Derived>
double identity_defect(const Eigen::MatrixBase<Derived>& a) {
  return (a - Derived::PlainObject::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff();
}

/// Inverse through Eigen's closed-form fixed-size paths; a general LU on the
/// capacity-bounded type costs several times more in the stepper.
inline MatrixX<double> small_inverse(const MatrixX<double>& a) {
  switch (a.rows()) {
    case 1: return MatrixX<double>::Constant(1, 1, 1.0 / a(0, 0));
    case 2: return MatrixX<double>(Eigen::Matrix2d(a).inverse());
    case 3: return MatrixX<double>(Eigen::Matrix3d(a).inverse());
    case 4: return MatrixX<double>(Eigen::Matrix4d(a).inverse());
    default: return a.inverse();
  }
}

/// The 2x2 rotation generator [[0, -1], [1, 0]].
inline Mat rotation_generator() {
  Mat j(2, 2);
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

}  // namespace bismut
