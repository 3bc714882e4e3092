#include "bismut/geometry.hpp"

#include <cmath>
#include <numbers>

namespace bismut {

namespace {

Vec unit(int n, int k) {
  Vec e = Vec::Zero(n);
  e(k) = 1.0;
  return e;
}

// Constant sectional curvature K: R^a_{bcd} = K (δ^a_c g_{bd} − δ^a_d g_{bc}).
Riemann constant_curvature(const Mat& g, double k) {
  const int n = static_cast<int>(g.rows());
  Riemann r(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d)
          r(a, b, c, d) = k * ((a == c ? g(b, d) : 0.0) - (a == d ? g(b, c) : 0.0));
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// ManifoldModel defaults

Christoffel ManifoldModel::christoffel(const Vec& x) const { return christoffel_fd(x); }

Riemann ManifoldModel::riemann(const Vec& x) const { return riemann_fd(x); }

Christoffel ManifoldModel::christoffel_fd(const Vec& x) const {
  const int n = dim();
  const double h = fd_step_;
  std::array<Mat, kMaxDim> dg;  // dg[b] = ∂_b g
  for (int b = 0; b < n; ++b) {
    Vec xp = x, xm = x;
    xp(b) += h;
    xm(b) -= h;
    dg[b] = (metric(xp) - metric(xm)) / (2.0 * h);
  }
  const Mat ginv = small_inverse(metric(x));
  Christoffel gamma(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d)
          s += ginv(a, d) * (dg[b](d, c) + dg[c](d, b) - dg[d](b, c));
        gamma(a, b, c) = 0.5 * s;
      }
  return gamma;
}

Riemann ManifoldModel::riemann_fd(const Vec& x) const {
  const int n = dim();
  const double h = fd_step_;
  std::array<Christoffel, kMaxDim> dgamma;  // dgamma[c] = ∂_c Γ
  for (int c = 0; c < n; ++c) {
    Vec xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    const Christoffel gp = christoffel(xp);
    const Christoffel gm = christoffel(xm);
    dgamma[c] = Christoffel(n);
    for (int a = 0; a < n; ++a) dgamma[c].slice[a] = (gp.slice[a] - gm.slice[a]) / (2.0 * h);
  }
  const Christoffel gamma = christoffel(x);
  Riemann r(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = dgamma[c](a, d, b) - dgamma[d](a, c, b);
          for (int e = 0; e < n; ++e)
            s += gamma(a, c, e) * gamma(e, d, b) - gamma(a, d, e) * gamma(e, c, b);
          r(a, b, c, d) = s;
        }
  return r;
}

Mat ManifoldModel::metric_sqrt(const Vec& x) const {
  Eigen::SelfAdjointEigenSolver<Mat> es(metric(x));
  return es.operatorSqrt();
}

Mat ManifoldModel::frame_field(const Vec& x) const {
  Eigen::SelfAdjointEigenSolver<Mat> es(metric(x));
  return es.operatorInverseSqrt();
}

Mat ManifoldModel::frame_field_derivative(const Vec& x, int b) const {
  const double h = fd_step_;
  Vec xp = x, xm = x;
  xp(b) += h;
  xm(b) -= h;
  return (frame_field(xp) - frame_field(xm)) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// FlatTorus

FlatTorus::FlatTorus(int m, Vec periods) : m_(m), periods_(std::move(periods)) {
  if (m < 1 || m > kMaxDim) throw std::invalid_argument("FlatTorus: dimension out of range");
  if (periods_.size() != m) throw std::invalid_argument("FlatTorus: periods size mismatch");
}

FlatTorus::FlatTorus(int m, double period) : FlatTorus(m, Vec::Constant(m, period)) {}

Mat FlatTorus::metric(const Vec&) const { return Mat::Identity(m_, m_); }
Christoffel FlatTorus::christoffel(const Vec&) const { return Christoffel(m_); }
Riemann FlatTorus::riemann(const Vec&) const { return Riemann(m_); }
Mat FlatTorus::metric_sqrt(const Vec&) const { return Mat::Identity(m_, m_); }
Mat FlatTorus::frame_field(const Vec&) const { return Mat::Identity(m_, m_); }
Mat FlatTorus::frame_field_derivative(const Vec&, int) const { return Mat::Zero(m_, m_); }
bool FlatTorus::in_chart(const Vec& x) const { return x.allFinite(); }

Vec FlatTorus::wrap(const Vec& x) const {
  Vec y = x;
  for (int a = 0; a < m_; ++a) {
    y(a) = std::fmod(y(a), periods_(a));
    if (y(a) < 0.0) y(a) += periods_(a);
  }
  return y;
}

// ---------------------------------------------------------------------------
// SphereSpherical

SphereSpherical::SphereSpherical(double radius, double pole_margin)
    : radius_(radius), margin_(pole_margin) {
  if (radius <= 0.0) throw std::invalid_argument("SphereSpherical: radius must be positive");
  if (pole_margin <= 0.0 || pole_margin >= std::numbers::pi / 2)
    throw std::invalid_argument("SphereSpherical: pole margin out of range");
}

Mat SphereSpherical::metric(const Vec& x) const {
  const double s = std::sin(x(0));
  Mat g = Mat::Zero(2, 2);
  g(0, 0) = radius_ * radius_;
  g(1, 1) = radius_ * radius_ * s * s;
  return g;
}

Christoffel SphereSpherical::christoffel(const Vec& x) const {
  const double s = std::sin(x(0));
  const double c = std::cos(x(0));
  Christoffel gamma(2);
  gamma(0, 1, 1) = -s * c;
  gamma(1, 0, 1) = c / s;
  gamma(1, 1, 0) = c / s;
  return gamma;
}

Riemann SphereSpherical::riemann(const Vec& x) const {
  return constant_curvature(metric(x), 1.0 / (radius_ * radius_));
}

Mat SphereSpherical::metric_sqrt(const Vec& x) const {
  Mat s = Mat::Zero(2, 2);
  s(0, 0) = radius_;
  s(1, 1) = radius_ * std::sin(x(0));
  return s;
}

Mat SphereSpherical::frame_field(const Vec& x) const {
  Mat s = Mat::Zero(2, 2);
  s(0, 0) = 1.0 / radius_;
  s(1, 1) = 1.0 / (radius_ * std::sin(x(0)));
  return s;
}

Mat SphereSpherical::frame_field_derivative(const Vec& x, int b) const {
  Mat d = Mat::Zero(2, 2);
  if (b == 0) {
    const double s = std::sin(x(0));
    d(1, 1) = -std::cos(x(0)) / (radius_ * s * s);
  }
  return d;
}

bool SphereSpherical::in_chart(const Vec& x) const {
  return std::isfinite(x(0)) && std::isfinite(x(1)) && x(0) >= margin_ &&
         x(0) <= std::numbers::pi - margin_;
}

Vec SphereSpherical::wrap(const Vec& x) const {
  Vec y = x;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  y(1) = std::fmod(y(1), two_pi);
  if (y(1) < 0.0) y(1) += two_pi;
  return y;
}

// ---------------------------------------------------------------------------
// SphereStereographic

SphereStereographic::SphereStereographic(int n, double radius, double antipode_margin)
    : n_(n), radius_(radius) {
  if (n < 1 || n > kMaxDim) throw std::invalid_argument("SphereStereographic: dimension out of range");
  if (radius <= 0.0) throw std::invalid_argument("SphereStereographic: radius must be positive");
  if (antipode_margin <= 0.0 || antipode_margin >= std::numbers::pi)
    throw std::invalid_argument("SphereStereographic: antipode margin out of range");
  const double c = 1.0 / std::tan(0.5 * antipode_margin);
  max_norm2_ = c * c;
}

Mat SphereStereographic::metric(const Vec& x) const {
  const double f = 2.0 * radius_ / (1.0 + x.squaredNorm());
  return Mat::Identity(n_, n_) * (f * f);
}

Christoffel SphereStereographic::christoffel(const Vec& x) const {
  // Conformal metric e^{2λ}δ with λ_c = −2 x_c / (1 + |x|²).
  const double s = 1.0 + x.squaredNorm();
  const Vec lam = -2.0 * x / s;
  Christoffel gamma(n_);
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b)
      for (int c = 0; c < n_; ++c)
        gamma(a, b, c) = (a == b ? lam(c) : 0.0) + (a == c ? lam(b) : 0.0) - (b == c ? lam(a) : 0.0);
  return gamma;
}

Riemann SphereStereographic::riemann(const Vec& x) const {
  return constant_curvature(metric(x), 1.0 / (radius_ * radius_));
}

Mat SphereStereographic::metric_sqrt(const Vec& x) const {
  return Mat::Identity(n_, n_) * (2.0 * radius_ / (1.0 + x.squaredNorm()));
}

Mat SphereStereographic::frame_field(const Vec& x) const {
  return Mat::Identity(n_, n_) * ((1.0 + x.squaredNorm()) / (2.0 * radius_));
}

Mat SphereStereographic::frame_field_derivative(const Vec& x, int b) const {
  return Mat::Identity(n_, n_) * (x(b) / radius_);
}

bool SphereStereographic::in_chart(const Vec& x) const {
  return x.allFinite() && x.squaredNorm() <= max_norm2_;
}

Eigen::VectorXd SphereStereographic::embed(const Vec& x) const {
  const double q = x.squaredNorm();
  const double s = 1.0 + q;
  Eigen::VectorXd p(n_ + 1);
  p(0) = radius_ * (1.0 - q) / s;
  for (int a = 0; a < n_; ++a) p(a + 1) = radius_ * 2.0 * x(a) / s;
  return p;
}

// ---------------------------------------------------------------------------
// MetricModel

MetricModel::MetricModel(std::string name, int m, MetricFn metric, ChartFn chart)
    : name_(std::move(name)), m_(m), metric_(std::move(metric)), chart_(std::move(chart)) {
  if (m < 1 || m > kMaxDim) throw std::invalid_argument("MetricModel: dimension out of range");
}

// ---------------------------------------------------------------------------
// Frame bundle operations

Mat contract_christoffel(const Christoffel& gamma, const Vec& xi) {
  const int n = gamma.dim;
  Mat out(n, n);
  for (int a = 0; a < n; ++a) out.row(a) = xi.transpose() * gamma.slice[a];
  return out;
}

Mat contract_riemann(const Riemann& r, const Vec& x_dir, const Vec& y_dir) {
  const int n = r.dim;
  Mat out(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out(a, b) = x_dir.dot(r.slice[a * n + b] * y_dir);
  return out;
}

FrameTangent horizontal_field(const ManifoldModel& model, const FramePoint& p, int i) {
  const int m = model.dim();
  if (i < 0 || i >= m) throw std::out_of_range("horizontal_field: index out of range");
  if (!model.in_chart(p.x)) throw ChartError("horizontal_field: point outside chart");
  const Vec xi = p.u.col(i);
  return {xi, -contract_christoffel(model.christoffel(p.x), xi) * p.u};
}

Mat ricci_scalarized(const Riemann& r, const Mat& u) {
  const int n = r.dim;
  Mat ric = Mat::Zero(n, n);  // Ric_{bd} = R^a_{bad}
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int d = 0; d < n; ++d) ric(b, d) += r(a, b, a, d);
  return u.transpose() * ric * u;
}

Mat ricci_scalarized(const ManifoldModel& model, const FramePoint& p) {
  if (!model.in_chart(p.x)) throw ChartError("ricci_scalarized: point outside chart");
  return ricci_scalarized(model.riemann(p.x), p.u);
}

Mat curvature_scalarized_base(const Riemann& r, const Mat& u, const Mat& g, int j, int i) {
  const Mat rji = contract_riemann(r, u.col(j), u.col(i));
  return -(u.transpose() * g) * rji * u;
}

Mat curvature_scalarized_base(const ManifoldModel& model, const FramePoint& p, int j, int i) {
  const int m = model.dim();
  if (i < 0 || i >= m || j < 0 || j >= m)
    throw std::out_of_range("curvature_scalarized_base: index out of range");
  if (!model.in_chart(p.x)) throw ChartError("curvature_scalarized_base: point outside chart");
  return curvature_scalarized_base(model.riemann(p.x), p.u, model.metric(p.x), j, i);
}

Mat orthogonal_retraction(const Mat& x) {
  const int n = static_cast<int>(x.cols());
  const Mat id = Mat::Identity(n, n);
  Mat gram = x.transpose() * x;
  if (identity_defect(gram) <= 0.3) {
    // Newton–Schulz converges quadratically to the polar factor here.
    Mat q = x;
    for (int it = 0; it < 12; ++it) {
      const double defect = identity_defect(gram);
      if (defect < 1e-15) break;
      q = 0.5 * q * (3.0 * id - gram);
      gram = q.transpose() * q;
    }
    return q;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  const auto& lam = es.eigenvalues();
  if (lam.minCoeff() < 0.25)
    throw std::domain_error("frame_retraction: frame too degenerate (singular value below 0.5)");
  const Mat v = es.eigenvectors();
  const Mat inv_sqrt = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  return x * inv_sqrt;
}

Mat frame_retraction(const ManifoldModel& model, const Vec& x, const Mat& u_raw) {
  const Mat s = model.metric_sqrt(x);
  const Mat q = orthogonal_retraction(s * u_raw);
  return small_inverse(s) * q;
}

double orthonormality_defect(const ManifoldModel& model, const FramePoint& p) {
  return identity_defect(p.u.transpose() * model.metric(p.x) * p.u);
}

FramePoint geodesic_shift(const ManifoldModel& model, const FramePoint& p, int j, double eps) {
  const int m = model.dim();
  if (j < 0 || j >= m) throw std::out_of_range("geodesic_shift: index out of range");
  if (eps == 0.0) return p;
  const Vec ej = unit(m, j);
  auto field = [&](const Vec& x, const Mat& u, Vec& dx, Mat& du) {
    if (!model.in_chart(x)) throw ChartError("geodesic_shift: left the chart");
    const Vec xi = u * ej;
    dx = xi;
    du = -contract_christoffel(model.christoffel(x), xi) * u;
  };
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(eps) / 0.005)));
  const double dt = eps / steps;
  Vec x = p.x;
  Mat u = p.u;
  Vec k1x, k2x, k3x, k4x;
  Mat k1u, k2u, k3u, k4u;
  for (int s = 0; s < steps; ++s) {
    field(x, u, k1x, k1u);
    field(x + 0.5 * dt * k1x, u + 0.5 * dt * k1u, k2x, k2u);
    field(x + 0.5 * dt * k2x, u + 0.5 * dt * k2u, k3x, k3u);
    field(x + dt * k3x, u + dt * k3u, k4x, k4u);
    x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    u += dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
  }
  if (!model.in_chart(x)) throw ChartError("geodesic_shift: left the chart");
  return {x, frame_retraction(model, x, u)};
}

FramePoint standard_frame(const ManifoldModel& model, const Vec& x, const Mat& h) {
  return {x, model.frame_field(x) * h};
}

FramePoint standard_frame(const ManifoldModel& model, const Vec& x) {
  const int m = model.dim();
  return standard_frame(model, x, Mat::Identity(m, m));
}

}  // namespace bismut
