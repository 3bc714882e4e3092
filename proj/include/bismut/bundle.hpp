#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bismut/geometry.hpp"

namespace bismut {

/// A metric vector bundle over a chart, described in an orthonormal
/// trivialization by its connection coefficients: ∇_b s = ∂_b s + A_b s with
/// every A_b antisymmetric.
class BundleModel {
 public:
  virtual ~BundleModel() = default;

  virtual int rank() const = 0;
  virtual int base_dim() const = 0;
  virtual std::string name() const = 0;

  virtual MatrixForm connection(const Vec& x) const = 0;
  /// F_{bc} = ∂_b A_c − ∂_c A_b + [A_b, A_c]; finite differences by default.
  virtual MatrixTwoForm curvature(const Vec& x) const { return curvature_fd(x); }
  virtual bool is_flat() const { return false; }

  MatrixTwoForm curvature_fd(const Vec& x, double h = 1e-5) const;
};

using BundlePtr = std::shared_ptr<const BundleModel>;

/// The product trivial bundle with the zero connection.
class TrivialBundle final : public BundleModel {
 public:
  TrivialBundle(int rank, int base_dim);
  int rank() const override { return rank_; }
  int base_dim() const override { return m_; }
  std::string name() const override { return "trivial"; }
  MatrixForm connection(const Vec& x) const override;
  MatrixTwoForm curvature(const Vec& x) const override;
  bool is_flat() const override { return true; }

 private:
  int rank_;
  int m_;
};

/// TM with the Levi-Civita connection, trivialized by the model's orthonormal
/// frame field σ: A_b = σ⁻¹(∂_b σ + Γ_b σ), F_{bc} = σ⁻¹ R(∂_b, ∂_c) σ.
class TangentBundle final : public BundleModel {
 public:
  explicit TangentBundle(ModelPtr model);
  int rank() const override { return model_->dim(); }
  int base_dim() const override { return model_->dim(); }
  std::string name() const override { return "tangent"; }
  MatrixForm connection(const Vec& x) const override;
  MatrixTwoForm curvature(const Vec& x) const override;
  bool is_flat() const override { return model_->is_flat(); }

 private:
  ModelPtr model_;
};

/// Rank-2 bundle over a base of dimension ≥ 2 with A_0 = 0,
/// A_1 = α sin(x⁰) J, hence F_{01} = α cos(x⁰) J. Periodic in x⁰, so it
/// lives on the flat torus.
class TwistedPlaneBundle final : public BundleModel {
 public:
  TwistedPlaneBundle(int base_dim, double strength);
  int rank() const override { return 2; }
  int base_dim() const override { return m_; }
  std::string name() const override { return "twisted-plane"; }
  MatrixForm connection(const Vec& x) const override;
  MatrixTwoForm curvature(const Vec& x) const override;

 private:
  int m_;
  double alpha_;
};

/// The three frame bundles carried together: TM ⊕ E₁ ⊕ E₂.
struct ProductBundle {
  ModelPtr base;
  BundlePtr e1;
  BundlePtr e2;

  int m() const { return base->dim(); }
  int n1() const { return e1->rank(); }
  int n2() const { return e2->rank(); }
};

/// U = (U₀, U₁, U₂): base frame plus orthogonal frames of E₁ and E₂.
struct ExtendedFrame {
  FramePoint base;
  Mat u1;
  Mat u2;
};

struct ExtendedTangent {
  Vec dx;
  Mat du;
  Mat du1;
  Mat du2;
};

/// A(ξ) = Σ_b ξ^b A_b.
Mat contract_form(const MatrixForm& a, const Vec& xi);
/// F(X, Y) = Σ_{b,c} F_{bc} X^b Y^c.
Mat contract_two_form(const MatrixTwoForm& f, int m, const Vec& x_dir, const Vec& y_dir);

/// Horizontal lift of the frame direction w ∈ R^m (H_w = Σ w^i H_i).
ExtendedTangent horizontal_lift(const ProductBundle& pb, const ExtendedFrame& f, const Vec& w);

/// Flow of H_i for time t (RK4, no retraction so the flow stays smooth in t).
ExtendedFrame horizontal_flow(const ProductBundle& pb, const ExtendedFrame& f, int i, double t);

/// Flow of H_j followed by re-orthonormalization of all three frames.
ExtendedFrame geodesic_shift(const ProductBundle& pb, const ExtendedFrame& f, int j, double eps);

/// Ω^{(l)}_{ji} = −u_l⁻¹ F(u e_j, u e_i) u_l for a bundle with frame u_l.
Mat bundle_curvature_scalarized(const BundleModel& bundle, const FramePoint& base, const Mat& ul,
                                int j, int i);
/// Level 0 is the base (Ω^{(0)}), 1 and 2 the two bundles.
Mat bundle_curvature_scalarized(const ProductBundle& pb, const ExtendedFrame& f, int level, int j,
                                int i);

/// H_i Ω^{(l)}_{jk} by central differences along the flow of H_i.
Mat horizontal_curvature_derivative(const ProductBundle& pb, const ExtendedFrame& f, int level,
                                    int i, int j, int k, double step = 1e-4);

/// max defect of all three frames from orthonormality.
double frame_defect(const ProductBundle& pb, const ExtendedFrame& f);

// ---------------------------------------------------------------------------
// Vertical fields on E₁, scalarized: V(U, Y) = U₁⁻¹ v(x, U₁ Y).

struct VerticalJet {
  Vec value;                                  // V
  Mat fiber;                                  // DV
  std::array<Vec, kMaxDim> horizontal;        // H_k V
  std::array<Mat, kMaxDim> horizontal_fiber;  // D(H_k V) = H_k(DV)
};

/// E₁'s connection along the base frame directions: entry k is A(u e_k).
using FrameConnection = std::array<Mat, kMaxDim>;

FrameConnection frame_connection(const MatrixForm& a, const Mat& u);

class VerticalField {
 public:
  virtual ~VerticalField() = default;
  /// Value and derivatives at (U, Y). A null `connection` means E₁'s
  /// connection vanishes. Horizontal entries are filled only when
  /// `with_horizontal` is set.
  virtual VerticalJet jet(const ExtendedFrame& f, const Vec& y, const FrameConnection* connection,
                          bool with_horizontal) const = 0;
  /// D²V: slice[a](p, q) = ∂_p ∂_q V_a.
  virtual Tensor3<double> fiber_hessian(const ExtendedFrame& f, const Vec& y) const = 0;
};

using FieldPtr = std::shared_ptr<const VerticalField>;

/// Coefficients of v(x, y) = B(x) y + b(x) and their derivatives along a set
/// of directions (columns of `dirs` below).
struct AffineCoefficients {
  Mat B;
  Vec b;
  std::array<Mat, kMaxDim> dB;
  std::array<Vec, kMaxDim> db;
};

class AffineVerticalField final : public VerticalField {
 public:
  /// Fills B and b, and the directional derivatives when `dirs` is non-null.
  using CoefficientFn =
      std::function<void(const Vec& x, const Mat* dirs, AffineCoefficients& out)>;
  AffineVerticalField(int rank, int base_dim, CoefficientFn coefficients);

  VerticalJet jet(const ExtendedFrame& f, const Vec& y, const FrameConnection* connection,
                  bool with_horizontal) const override;
  Tensor3<double> fiber_hessian(const ExtendedFrame& f, const Vec& y) const override;

  /// Chart derivatives: dB[a] = ∂_a B.
  AffineCoefficients coefficients(const Vec& x) const;

 private:
  int rank_;
  int m_;
  CoefficientFn coeff_;
};

/// V₀ and V_{1,i}, i = 0..m−1; null entries are identically zero.
struct VerticalFieldSpec {
  FieldPtr v0;
  std::vector<FieldPtr> v1;

  bool all_zero() const;
};

// ---------------------------------------------------------------------------
// Bundle maps f: E₁ → E₂, scalarized: F(U, Y) = U₂⁻¹ f(x, U₁ Y).

class BundleMap {
 public:
  virtual ~BundleMap() = default;
  virtual int rank_in() const = 0;
  virtual int rank_out() const = 0;
  virtual Vec value(const ExtendedFrame& f, const Vec& y) const = 0;
  /// DF, rank_out × rank_in.
  virtual Mat fiber_jacobian(const ExtendedFrame& f, const Vec& y) const = 0;
  /// D²F: slice[r](p, q) = ∂_p ∂_q F_r.
  virtual Tensor3<double> fiber_hessian(const ExtendedFrame& f, const Vec& y) const = 0;
};

using MapPtr = std::shared_ptr<const BundleMap>;

/// f_r(x, y) = yᵀ Q_r(x) y + (L(x) y)_r + c_r(x).
struct QuadraticCoefficients {
  std::array<Mat, kMaxDim> Q;
  Mat L;
  Vec c;
};

class QuadraticBundleMap final : public BundleMap {
 public:
  using CoefficientFn = std::function<QuadraticCoefficients(const Vec& x)>;
  QuadraticBundleMap(int rank_in, int rank_out, CoefficientFn coefficients, bool quadratic = true);

  int rank_in() const override { return n1_; }
  int rank_out() const override { return n2_; }
  Vec value(const ExtendedFrame& f, const Vec& y) const override;
  Mat fiber_jacobian(const ExtendedFrame& f, const Vec& y) const override;
  Tensor3<double> fiber_hessian(const ExtendedFrame& f, const Vec& y) const override;

 private:
  int n1_;
  int n2_;
  CoefficientFn coeff_;
  bool quadratic_;
};

}  // namespace bismut
