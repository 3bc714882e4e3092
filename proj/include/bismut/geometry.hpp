#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "bismut/types.hpp"

namespace bismut {

/// A Riemannian manifold described in a single chart.
///
/// Subclasses must provide the metric; Christoffel symbols and the Riemann
/// tensor fall back to central finite differences (step `fd_step()`) when no
/// closed form is available. Curvature follows
/// R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z, stored as R^a_{bcd} with
/// R(∂_c, ∂_d)∂_b = R^a_{bcd} ∂_a.
class ManifoldModel {
 public:
  virtual ~ManifoldModel() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;

  virtual Mat metric(const Vec& x) const = 0;
  virtual Christoffel christoffel(const Vec& x) const;
  virtual Riemann riemann(const Vec& x) const;

  /// Symmetric square root of the metric.
  virtual Mat metric_sqrt(const Vec& x) const;

  /// An orthonormal frame field σ(x) (σᵀ g σ = I); used to trivialize TM.
  virtual Mat frame_field(const Vec& x) const;
  /// ∂σ/∂x^b.
  virtual Mat frame_field_derivative(const Vec& x, int b) const;

  /// Whether x lies in the usable part of the chart (margins included).
  virtual bool in_chart(const Vec& x) const = 0;
  /// Canonical representative under periodic identifications.
  virtual Vec wrap(const Vec& x) const { return x; }

  /// Ricci = ρ g with a known constant ρ.
  virtual std::optional<double> constant_ricci() const { return std::nullopt; }
  virtual bool is_flat() const { return false; }
  virtual bool analytic_christoffel() const { return false; }
  virtual bool analytic_riemann() const { return false; }

  double fd_step() const { return fd_step_; }
  void set_fd_step(double h) { fd_step_ = h; }

  /// Christoffels from the metric by central differences, whatever the model.
  Christoffel christoffel_fd(const Vec& x) const;
  /// Riemann tensor from christoffel() by central differences.
  Riemann riemann_fd(const Vec& x) const;

 private:
  double fd_step_ = 1e-5;
};

using ModelPtr = std::shared_ptr<const ManifoldModel>;

/// R^m with g = I and the given periods in every coordinate.
class FlatTorus final : public ManifoldModel {
 public:
  FlatTorus(int m, Vec periods);
  FlatTorus(int m, double period);

  int dim() const override { return m_; }
  std::string name() const override { return "flat-torus"; }
  Mat metric(const Vec& x) const override;
  Christoffel christoffel(const Vec& x) const override;
  Riemann riemann(const Vec& x) const override;
  Mat metric_sqrt(const Vec& x) const override;
  Mat frame_field(const Vec& x) const override;
  Mat frame_field_derivative(const Vec& x, int b) const override;
  bool in_chart(const Vec& x) const override;
  Vec wrap(const Vec& x) const override;
  std::optional<double> constant_ricci() const override { return 0.0; }
  bool is_flat() const override { return true; }
  bool analytic_christoffel() const override { return true; }
  bool analytic_riemann() const override { return true; }

  const Vec& periods() const { return periods_; }

 private:
  int m_;
  Vec periods_;
};

/// The 2-sphere of radius r in colatitude/longitude (θ, φ); the chart is
/// restricted to θ ∈ [margin, π − margin] and φ is 2π-periodic.
class SphereSpherical final : public ManifoldModel {
 public:
  explicit SphereSpherical(double radius = 1.0, double pole_margin = 0.05);

  int dim() const override { return 2; }
  std::string name() const override { return "sphere-spherical"; }
  Mat metric(const Vec& x) const override;
  Christoffel christoffel(const Vec& x) const override;
  Riemann riemann(const Vec& x) const override;
  Mat metric_sqrt(const Vec& x) const override;
  Mat frame_field(const Vec& x) const override;
  Mat frame_field_derivative(const Vec& x, int b) const override;
  bool in_chart(const Vec& x) const override;
  Vec wrap(const Vec& x) const override;
  std::optional<double> constant_ricci() const override { return 1.0 / (radius_ * radius_); }
  bool analytic_christoffel() const override { return true; }
  bool analytic_riemann() const override { return true; }

  double radius() const { return radius_; }
  double pole_margin() const { return margin_; }

 private:
  double radius_;
  double margin_;
};

/// The n-sphere of radius r in stereographic coordinates projected from the
/// antipode of the chart centre. g = (2r / (1 + |x|²))² I. Points closer than
/// `antipode_margin` (angle) to the antipode are outside the chart.
///
/// The embedding into R^{n+1} puts x = 0 at r·e₀ and chart axis a along e_{a+1}.
class SphereStereographic final : public ManifoldModel {
 public:
  explicit SphereStereographic(int n = 2, double radius = 1.0, double antipode_margin = 0.05);

  int dim() const override { return n_; }
  std::string name() const override { return "sphere-stereographic"; }
  Mat metric(const Vec& x) const override;
  Christoffel christoffel(const Vec& x) const override;
  Riemann riemann(const Vec& x) const override;
  Mat metric_sqrt(const Vec& x) const override;
  Mat frame_field(const Vec& x) const override;
  Mat frame_field_derivative(const Vec& x, int b) const override;
  bool in_chart(const Vec& x) const override;
  std::optional<double> constant_ricci() const override {
    return (n_ - 1) / (radius_ * radius_);
  }
  bool analytic_christoffel() const override { return true; }
  bool analytic_riemann() const override { return true; }

  double radius() const { return radius_; }
  /// Embedded point in R^{n+1}.
  Eigen::VectorXd embed(const Vec& x) const;

 private:
  int n_;
  double radius_;
  double max_norm2_;
};

/// A model given only by its metric; everything else is finite-differenced.
class MetricModel final : public ManifoldModel {
 public:
  using MetricFn = std::function<Mat(const Vec&)>;
  using ChartFn = std::function<bool(const Vec&)>;
  MetricModel(std::string name, int m, MetricFn metric, ChartFn chart);

  int dim() const override { return m_; }
  std::string name() const override { return name_; }
  Mat metric(const Vec& x) const override { return metric_(x); }
  bool in_chart(const Vec& x) const override { return chart_(x); }

 private:
  std::string name_;
  int m_;
  MetricFn metric_;
  ChartFn chart_;
};

/// A point of the orthonormal frame bundle: chart position and frame
/// (columns are frame vectors in the chart basis).
struct FramePoint {
  Vec x;
  Mat u;
};

/// A tangent vector to the frame bundle at a point.
struct FrameTangent {
  Vec dx;
  Mat du;
};

/// Γ(ξ) with Γ(ξ)^a_d = Γ^a_{cd} ξ^c.
Mat contract_christoffel(const Christoffel& gamma, const Vec& xi);

/// R(X, Y) as an endomorphism: (R(X,Y))^a_b = R^a_{bcd} X^c Y^d.
Mat contract_riemann(const Riemann& r, const Vec& x_dir, const Vec& y_dir);

/// The canonical horizontal field H_i at p (0-based i).
FrameTangent horizontal_field(const ManifoldModel& model, const FramePoint& p, int i);

/// Ric_u with (Ric_u)_{ij} = Ric(u e_i, u e_j).
Mat ricci_scalarized(const ManifoldModel& model, const FramePoint& p);
Mat ricci_scalarized(const Riemann& r, const Mat& u);

/// Ω^{(0)}_{ji}: the 𝔬(m) element whose fundamental vertical field equals
/// the bracket [H_j, H_i] at p, i.e. −u⁻¹R(u e_j, u e_i)u. With this sign
/// Ric_{ik} = −Σ_j (Ω^{(0)}_{ji})_{jk}.
Mat curvature_scalarized_base(const ManifoldModel& model, const FramePoint& p, int j, int i);
Mat curvature_scalarized_base(const Riemann& r, const Mat& u, const Mat& g, int j, int i);

/// Metric polar retraction onto {u : uᵀ g u = I}.
Mat frame_retraction(const ManifoldModel& model, const Vec& x, const Mat& u_raw);
/// Orthogonal polar factor (g = I).
Mat orthogonal_retraction(const Mat& u_raw);

/// max |uᵀ g(x) u − I|.
double orthonormality_defect(const ManifoldModel& model, const FramePoint& p);

/// Flow of H_j for time eps: the geodesic with initial velocity u e_j and the
/// parallel-transported frame.
FramePoint geodesic_shift(const ManifoldModel& model, const FramePoint& p, int j, double eps);

/// Frame chosen as the orthonormal frame field rotated/reflected by `h`.
FramePoint standard_frame(const ManifoldModel& model, const Vec& x, const Mat& h);
FramePoint standard_frame(const ManifoldModel& model, const Vec& x);

}  // namespace bismut
