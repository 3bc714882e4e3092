#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bismut/bundle.hpp"

namespace bismut {

/// A point z = (U, Y) of the combined state space.
struct BundleState {
  ExtendedFrame frame;
  Vec y;
};

/// Closed-form answers available for some scenarios.
struct AnalyticOracle {
  std::function<Vec(const BundleState& z, double T)> value;     // 𝔼_z F(Z_T)
  std::function<Mat(const BundleState& z, double T)> gradient;  // ∇ᴴ𝔼_z F(Z_T), n₂×m
};

/// Everything needed to simulate and differentiate one experiment.
struct Scenario {
  std::string name;
  std::string description;
  ProductBundle bundle;
  VerticalFieldSpec fields;
  MapPtr map;
  BundleState start;
  double default_T = 1.0;
  std::optional<AnalyticOracle> oracle;

  /// Draws a state well inside the chart, with random frames and fiber point.
  std::function<BundleState(std::mt19937_64& rng)> sample_state;
};

struct ScenarioOptions {
  double field_scale = 1.0;       // multiplies V₀, V_{1,i} and Y₀
  bool drop_linear_part = false;  // B ≡ 0 in every affine field
  double antipode_margin = 0.1;   // stereographic sphere charts
  double twist = 0.8;             // curvature strength of the twisted bundles
};

std::vector<std::string> scenario_names();
/// Throws std::invalid_argument for an unknown name.
Scenario make_scenario(const std::string& name, const ScenarioOptions& options = {});

// ---------------------------------------------------------------------------
// Smooth coefficient building blocks: c + Σ_q φ_q(x) a_q for a small feature
// set φ with analytic gradients.

inline constexpr int kMaxFeatures = 8;
using FeatureVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxFeatures, 1>;
using FeatureJac =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxFeatures, kMaxDim>;

class FeatureSet {
 public:
  using EvalFn = std::function<void(const Vec& x, FeatureVec& phi, FeatureJac& dphi)>;

  FeatureSet() = default;
  FeatureSet(int count, EvalFn fn);

  int count = 0;
  /// phi(q), dphi(q, b) = ∂_b φ_q. Copies share a per-thread cache of the
  /// last point, so several fields built on one set evaluate it once per state.
  void eval(const Vec& x, FeatureVec& phi, FeatureJac& dphi) const;

 private:
  std::shared_ptr<const EvalFn> fn_;
  std::uint64_t id_ = 0;
};

/// sin x_a, cos x_a for every coordinate.
FeatureSet trig_features(int m);
/// The embedding coordinates of a stereographic or spherical sphere chart.
FeatureSet sphere_features(const SphereStereographic& model);
FeatureSet sphere_features(const SphereSpherical& model);

struct FeatureAffine {
  Mat B;
  Vec b;
  std::vector<Mat> Bq;
  std::vector<Vec> bq;
};

struct FeatureQuadratic {
  std::array<Mat, kMaxDim> Q;
  std::array<std::vector<Mat>, kMaxDim> Qq;
  Mat L;
  std::vector<Mat> Lq;
  Vec c;
  std::vector<Vec> cq;
};

FieldPtr make_feature_field(int rank, int base_dim, FeatureSet features, FeatureAffine coeff);
MapPtr make_feature_map(int rank_in, int rank_out, int base_dim, FeatureSet features,
                        FeatureQuadratic coeff, bool quadratic);

/// Portable uniform and Gaussian draws (independent of the standard library's
/// distribution implementations, so catalog coefficients are fixed).
double uniform01(std::mt19937_64& rng);
double gaussian(std::mt19937_64& rng);
Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale);
Vec random_vector(std::mt19937_64& rng, int n, double scale);
/// Haar-ish random orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Mat random_orthogonal(std::mt19937_64& rng, int n);

/// Random map quadratic in Y with feature dependence, matched to the scenario's
/// ranks and base geometry. Used as test function by the verifier.
MapPtr random_test_function(const Scenario& scenario, std::mt19937_64& rng, bool quadratic = true);

/// Trig features on tori, embedding coordinates on spheres.
FeatureSet features_for(const ManifoldModel& model);

}  // namespace bismut
