#include "bismut/bundle.hpp"

#include <type_traits>

#include <cmath>

namespace bismut {

namespace {

Vec unit(int n, int k) {
  Vec e = Vec::Zero(n);
  e(k) = 1.0;
  return e;
}

// Slices of size rows×cols, `count` of them.
Tensor3<double> zero_slices(int count, int rows, int cols) {
  Tensor3<double> t;
  t.dim = count;
  for (int a = 0; a < count; ++a) t.slice[a] = Mat::Zero(rows, cols);
  return t;
}

}  // namespace

MatrixTwoForm BundleModel::curvature_fd(const Vec& x, double h) const {
  const int m = base_dim();
  std::array<MatrixForm, kMaxDim> da;  // da[b][c] = ∂_b A_c
  for (int b = 0; b < m; ++b) {
    Vec xp = x, xm = x;
    xp(b) += h;
    xm(b) -= h;
    const MatrixForm ap = connection(xp);
    const MatrixForm am = connection(xm);
    for (int c = 0; c < m; ++c) da[b][c] = (ap[c] - am[c]) / (2.0 * h);
  }
  const MatrixForm a = connection(x);
  MatrixTwoForm f;
  for (int b = 0; b < m; ++b)
    for (int c = 0; c < m; ++c)
      f[b * m + c] = da[b][c] - da[c][b] + a[b] * a[c] - a[c] * a[b];
  return f;
}

// ---------------------------------------------------------------------------

TrivialBundle::TrivialBundle(int rank, int base_dim) : rank_(rank), m_(base_dim) {
  if (rank < 1 || rank > kMaxDim) throw std::invalid_argument("TrivialBundle: rank out of range");
}

MatrixForm TrivialBundle::connection(const Vec&) const {
  MatrixForm a;
  for (int b = 0; b < m_; ++b) a[b] = Mat::Zero(rank_, rank_);
  return a;
}

MatrixTwoForm TrivialBundle::curvature(const Vec&) const {
  MatrixTwoForm f;
  for (int k = 0; k < m_ * m_; ++k) f[k] = Mat::Zero(rank_, rank_);
  return f;
}

// ---------------------------------------------------------------------------

TangentBundle::TangentBundle(ModelPtr model) : model_(std::move(model)) {}

MatrixForm TangentBundle::connection(const Vec& x) const {
  const int m = model_->dim();
  const Mat sigma = model_->frame_field(x);
  const Mat sigma_inv = small_inverse(sigma);
  const Christoffel gamma = model_->christoffel(x);
  MatrixForm a;
  for (int b = 0; b < m; ++b) {
    Mat gb(m, m);  // (Γ_b)^a_c = Γ^a_{bc}
    for (int r = 0; r < m; ++r) gb.row(r) = gamma.slice[r].row(b);
    a[b] = sigma_inv * (model_->frame_field_derivative(x, b) + gb * sigma);
  }
  return a;
}

MatrixTwoForm TangentBundle::curvature(const Vec& x) const {
  const int m = model_->dim();
  const Mat sigma = model_->frame_field(x);
  const Mat sigma_inv = small_inverse(sigma);
  const Riemann r = model_->riemann(x);
  MatrixTwoForm f;
  for (int b = 0; b < m; ++b)
    for (int c = 0; c < m; ++c) {
      Mat rbc(m, m);  // (R_{bc})^a_d = R^a_{dbc}
      for (int a = 0; a < m; ++a)
        for (int d = 0; d < m; ++d) rbc(a, d) = r(a, d, b, c);
      f[b * m + c] = sigma_inv * rbc * sigma;
    }
  return f;
}

// ---------------------------------------------------------------------------

TwistedPlaneBundle::TwistedPlaneBundle(int base_dim, double strength)
    : m_(base_dim), alpha_(strength) {
  if (base_dim < 2 || base_dim > kMaxDim)
    throw std::invalid_argument("TwistedPlaneBundle: needs base dimension ≥ 2");
}

MatrixForm TwistedPlaneBundle::connection(const Vec& x) const {
  MatrixForm a;
  for (int b = 0; b < m_; ++b) a[b] = Mat::Zero(2, 2);
  a[1] = alpha_ * std::sin(x(0)) * rotation_generator();
  return a;
}

MatrixTwoForm TwistedPlaneBundle::curvature(const Vec& x) const {
  MatrixTwoForm f;
  for (int k = 0; k < m_ * m_; ++k) f[k] = Mat::Zero(2, 2);
  const Mat f01 = alpha_ * std::cos(x(0)) * rotation_generator();
  f[0 * m_ + 1] = f01;
  f[1 * m_ + 0] = -f01;
  return f;
}

// ---------------------------------------------------------------------------

Mat contract_form(const MatrixForm& a, const Vec& xi) {
  Mat out = xi(0) * a[0];
  for (int b = 1; b < xi.size(); ++b) out += xi(b) * a[b];
  return out;
}

FrameConnection frame_connection(const MatrixForm& a, const Mat& u) {
  FrameConnection out;
  for (int k = 0; k < u.cols(); ++k) out[k] = contract_form(a, u.col(k));
  return out;
}

Mat contract_two_form(const MatrixTwoForm& f, int m, const Vec& x_dir, const Vec& y_dir) {
  Mat out = Mat::Zero(f[0].rows(), f[0].cols());
  for (int b = 0; b < m; ++b)
    for (int c = 0; c < m; ++c) {
      const double w = x_dir(b) * y_dir(c);
      if (w != 0.0) out += w * f[b * m + c];
    }
  return out;
}

ExtendedTangent horizontal_lift(const ProductBundle& pb, const ExtendedFrame& f, const Vec& w) {
  const Vec& x = f.base.x;
  if (!pb.base->in_chart(x)) throw ChartError("horizontal_lift: point outside chart");
  const Vec xi = f.base.u * w;
  ExtendedTangent t;
  t.dx = xi;
  t.du = -contract_christoffel(pb.base->christoffel(x), xi) * f.base.u;
  t.du1 = pb.e1->is_flat() && pb.e1->name() == "trivial"
              ? Mat::Zero(f.u1.rows(), f.u1.cols())
              : Mat(-contract_form(pb.e1->connection(x), xi) * f.u1);
  t.du2 = pb.e2->is_flat() && pb.e2->name() == "trivial"
              ? Mat::Zero(f.u2.rows(), f.u2.cols())
              : Mat(-contract_form(pb.e2->connection(x), xi) * f.u2);
  return t;
}

namespace {

ExtendedFrame axpy(const ExtendedFrame& f, double s, const ExtendedTangent& t) {
  return {{f.base.x + s * t.dx, f.base.u + s * t.du}, f.u1 + s * t.du1, f.u2 + s * t.du2};
}

}  // namespace

ExtendedFrame horizontal_flow(const ProductBundle& pb, const ExtendedFrame& f, int i, double t) {
  const int m = pb.m();
  if (i < 0 || i >= m) throw std::out_of_range("horizontal_flow: index out of range");
  if (t == 0.0) return f;
  const Vec w = unit(m, i);
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(t) / 0.005)));
  const double dt = t / steps;
  ExtendedFrame s = f;
  for (int k = 0; k < steps; ++k) {
    const ExtendedTangent k1 = horizontal_lift(pb, s, w);
    const ExtendedTangent k2 = horizontal_lift(pb, axpy(s, 0.5 * dt, k1), w);
    const ExtendedTangent k3 = horizontal_lift(pb, axpy(s, 0.5 * dt, k2), w);
    const ExtendedTangent k4 = horizontal_lift(pb, axpy(s, dt, k3), w);
    s.base.x += dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    s.base.u += dt / 6.0 * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);
    s.u1 += dt / 6.0 * (k1.du1 + 2.0 * k2.du1 + 2.0 * k3.du1 + k4.du1);
    s.u2 += dt / 6.0 * (k1.du2 + 2.0 * k2.du2 + 2.0 * k3.du2 + k4.du2);
  }
  if (!pb.base->in_chart(s.base.x)) throw ChartError("horizontal_flow: left the chart");
  return s;
}

ExtendedFrame geodesic_shift(const ProductBundle& pb, const ExtendedFrame& f, int j, double eps) {
  if (eps == 0.0) return f;
  ExtendedFrame s = horizontal_flow(pb, f, j, eps);
  s.base.u = frame_retraction(*pb.base, s.base.x, s.base.u);
  s.u1 = orthogonal_retraction(s.u1);
  s.u2 = orthogonal_retraction(s.u2);
  return s;
}

Mat bundle_curvature_scalarized(const BundleModel& bundle, const FramePoint& base, const Mat& ul,
                                int j, int i) {
  const int m = bundle.base_dim();
  if (i < 0 || i >= m || j < 0 || j >= m)
    throw std::out_of_range("bundle_curvature_scalarized: index out of range");
  if (bundle.is_flat() && bundle.name() == "trivial") return Mat::Zero(ul.rows(), ul.cols());
  const MatrixTwoForm f = bundle.curvature(base.x);
  return -ul.transpose() * contract_two_form(f, m, base.u.col(j), base.u.col(i)) * ul;
}

Mat bundle_curvature_scalarized(const ProductBundle& pb, const ExtendedFrame& f, int level, int j,
                                int i) {
  if (!pb.base->in_chart(f.base.x)) throw ChartError("bundle curvature: point outside chart");
  switch (level) {
    case 0:
      return curvature_scalarized_base(*pb.base, f.base, j, i);
    case 1:
      return bundle_curvature_scalarized(*pb.e1, f.base, f.u1, j, i);
    case 2:
      return bundle_curvature_scalarized(*pb.e2, f.base, f.u2, j, i);
    default:
      throw std::out_of_range("bundle curvature: level must be 0, 1 or 2");
  }
}

Mat horizontal_curvature_derivative(const ProductBundle& pb, const ExtendedFrame& f, int level,
                                    int i, int j, int k, double step) {
  const ExtendedFrame fp = horizontal_flow(pb, f, i, step);
  const ExtendedFrame fm = horizontal_flow(pb, f, i, -step);
  return (bundle_curvature_scalarized(pb, fp, level, j, k) -
          bundle_curvature_scalarized(pb, fm, level, j, k)) /
         (2.0 * step);
}

double frame_defect(const ProductBundle& pb, const ExtendedFrame& f) {
  return std::max({orthonormality_defect(*pb.base, f.base),
                   identity_defect(f.u1.transpose() * f.u1),
                   identity_defect(f.u2.transpose() * f.u2)});
}

// ---------------------------------------------------------------------------

AffineVerticalField::AffineVerticalField(int rank, int base_dim, CoefficientFn coefficients)
    : rank_(rank), m_(base_dim), coeff_(std::move(coefficients)) {}

AffineCoefficients AffineVerticalField::coefficients(const Vec& x) const {
  const Mat id = Mat::Identity(m_, m_);
  AffineCoefficients c;
  coeff_(x, &id, c);
  return c;
}

namespace {

// Fixed-size storage when the rank is known at compile time; N = Dynamic
// falls back to the capacity-bounded types.
template <int N>
using SquareN = std::conditional_t<N == Eigen::Dynamic, Mat, Eigen::Matrix<double, N, N>>;
template <int N>
using VectorN = std::conditional_t<N == Eigen::Dynamic, Vec, Eigen::Matrix<double, N, 1>>;

template <int N>
VerticalJet affine_jet(const AffineCoefficients& c, const ExtendedFrame& f, const Vec& y_scal,
                       const FrameConnection* connection, bool with_horizontal, int m) {
  using Sq = SquareN<N>;
  using V = VectorN<N>;
  const Sq u1 = f.u1;
  const Sq B = c.B;
  const V b = c.b;
  const V y = u1 * V(y_scal);
  VerticalJet out;
  out.value = u1.transpose() * (B * y + b);
  out.fiber = u1.transpose() * B * u1;
  if (!with_horizontal) return out;
  // H_k V = u₁ᵀ[(∂_k B + [A_k, B]) y + ∂_k b + A_k b]: the covariant derivative
  // of v along the horizontal lift of u e_k.
  for (int k = 0; k < m; ++k) {
    Sq cov = c.dB[k];
    V w = c.db[k];
    if (connection) {
      const Sq a = (*connection)[k];
      cov += a * B - B * a;
      w += a * b;
    }
    w += cov * y;
    out.horizontal[k] = u1.transpose() * w;
    out.horizontal_fiber[k] = u1.transpose() * cov * u1;
  }
  return out;
}

}  // namespace

VerticalJet AffineVerticalField::jet(const ExtendedFrame& f, const Vec& y_scal,
                                     const FrameConnection* connection,
                                     bool with_horizontal) const {
  AffineCoefficients c;
  coeff_(f.base.x, with_horizontal ? &f.base.u : nullptr, c);
  switch (rank_) {
    case 1: return affine_jet<1>(c, f, y_scal, connection, with_horizontal, m_);
    case 2: return affine_jet<2>(c, f, y_scal, connection, with_horizontal, m_);
    case 3: return affine_jet<3>(c, f, y_scal, connection, with_horizontal, m_);
    default: return affine_jet<Eigen::Dynamic>(c, f, y_scal, connection, with_horizontal, m_);
  }
}

Tensor3<double> AffineVerticalField::fiber_hessian(const ExtendedFrame&, const Vec&) const {
  return zero_slices(rank_, rank_, rank_);
}

bool VerticalFieldSpec::all_zero() const {
  if (v0) return false;
  for (const auto& v : v1)
    if (v) return false;
  return true;
}

// ---------------------------------------------------------------------------

QuadraticBundleMap::QuadraticBundleMap(int rank_in, int rank_out, CoefficientFn coefficients,
                                       bool quadratic)
    : n1_(rank_in), n2_(rank_out), coeff_(std::move(coefficients)), quadratic_(quadratic) {}

Vec QuadraticBundleMap::value(const ExtendedFrame& f, const Vec& y_scal) const {
  const QuadraticCoefficients c = coeff_(f.base.x);
  const Vec y = f.u1 * y_scal;
  Vec v = c.L * y + c.c;
  if (quadratic_)
    for (int r = 0; r < n2_; ++r) v(r) += y.dot(c.Q[r] * y);
  return f.u2.transpose() * v;
}

Mat QuadraticBundleMap::fiber_jacobian(const ExtendedFrame& f, const Vec& y_scal) const {
  const QuadraticCoefficients c = coeff_(f.base.x);
  Mat jac = c.L;
  if (quadratic_) {
    const Vec y = f.u1 * y_scal;
    for (int r = 0; r < n2_; ++r) jac.row(r) += ((c.Q[r] + c.Q[r].transpose()) * y).transpose();
  }
  return f.u2.transpose() * jac * f.u1;
}

Tensor3<double> QuadraticBundleMap::fiber_hessian(const ExtendedFrame& f, const Vec&) const {
  Tensor3<double> h = zero_slices(n2_, n1_, n1_);
  if (!quadratic_) return h;
  const QuadraticCoefficients c = coeff_(f.base.x);
  for (int s = 0; s < n2_; ++s)
    for (int r = 0; r < n2_; ++r)
      h.slice[s] += f.u2(r, s) * (f.u1.transpose() * (c.Q[r] + c.Q[r].transpose()) * f.u1);
  return h;
}

}  // namespace bismut
