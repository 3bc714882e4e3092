#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "bismut/scenario.hpp"

namespace bismut {

/// Which functionals are carried along the path.
///   Plain: Z only. Classical: Z, M, ∫M dW. Full: everything.
enum class SimMode { Plain, Classical, Full };

/// Entry convention for N^j_{t,k} (and M^j_{t,i}): Row reads (N_t)_{jk},
/// Col reads (N_t)_{kj}.
enum class NbarConvention { Row, Col };

/// Side on which Ric multiplies M in dM = −½ M Ric dt.
enum class FkSide { Left, Right };

struct SimulationSettings {
  double T = 1.0;
  double h = 1e-3;
  SimMode mode = SimMode::Full;
  NbarConvention nbar = NbarConvention::Row;
  FkSide fk_side = FkSide::Right;
  bool feynman_kac = true;  // false holds M ≡ I
  bool retract = true;
  int max_resample = 5;
  /// Each increment is the sum of this many draws at step h / substeps, so
  /// runs at different h can share one Brownian path.
  int substeps = 1;

  /// T / h; throws std::invalid_argument unless it is a positive integer.
  int steps() const;
};

/// Reproducible Gaussian increments for one (seed, path, attempt) triple.
class BrownianDriver {
 public:
  BrownianDriver(std::uint64_t seed, std::uint64_t path_index, std::uint64_t attempt, int m, double h,
                 int substeps = 1);

  /// ΔW ~ N(0, h I).
  Vec next();

  static std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t path_index,
                                   std::uint64_t attempt);

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  int m_;
  int substeps_;
  double scale_;
};

struct PathState {
  double t = 0.0;
  ExtendedFrame frame;
  Vec y;
  Mat M;
  Vec ito_MdW;  // ∫ M dW, left endpoint
  Vec W;
  std::array<Mat, kMaxDim> G1;
  std::array<Mat, kMaxDim> G2;
  std::array<Vec, kMaxDim> Yder;
  bool rejected = false;
  int attempts = 0;          // resamples used before this path was accepted
  double max_defect = 0.0;   // worst post-retraction frame defect along the path
};

/// Geometry and field data at one state, shared by the stage increments.
/// Connections are taken along the base frame directions (entry k is A(u e_k));
/// they are absent for trivial bundles, as are curvatures outside Full mode.
struct StageData {
  Christoffel gamma;
  std::optional<FrameConnection> a1, a2;
  std::optional<MatrixTwoForm> f1, f2;
  std::optional<VerticalJet> v0;
  std::array<std::optional<VerticalJet>, kMaxDim> v1;
  Mat ric;
};

/// Precomputed facts about a scenario that the stepper branches on.
class SimulationContext {
 public:
  SimulationContext(const Scenario& scenario, SimulationSettings settings);

  const Scenario& scenario() const { return *scenario_; }
  const SimulationSettings& settings() const { return settings_; }
  const ProductBundle& bundle() const { return scenario_->bundle; }

  bool e1_trivial() const { return e1_trivial_; }
  bool e2_trivial() const { return e2_trivial_; }
  bool fields_zero() const { return fields_zero_; }
  std::optional<double> constant_ricci() const { return ricci_; }

  /// M at time t when Ricci is constant, or when M is switched off.
  std::optional<Mat> closed_form_M(double t) const;
  bool has_closed_form_M() const { return closed_form_; }
  /// Christoffel symbols vanish identically in the base chart.
  bool base_euclidean() const { return base_euclidean_; }

 private:
  const Scenario* scenario_;
  SimulationSettings settings_;
  bool e1_trivial_;
  bool e2_trivial_;
  bool fields_zero_;
  std::optional<double> ricci_;
  bool closed_form_;
  bool base_euclidean_;
};

PathState initial_path_state(const SimulationContext& ctx, const BundleState& z0);

StageData evaluate_stage(const SimulationContext& ctx, const PathState& s);

/// The increments of one Heun stage, each evaluated at the stage state.
struct StageIncrement {
  ExtendedTangent frame;
  Vec dy;
  Mat dM;
  std::array<Mat, kMaxDim> dG1, dG2;
  std::array<Vec, kMaxDim> dYder;
};

/// (0, V₀) h + Σ_i (H_i, V_{1,i}) ΔWⁱ.
void increment_Z(const SimulationContext& ctx, const PathState& s, const StageData& d,
                 const Vec& dW, StageIncrement& out);
/// −½ M Ric h (or Ric on the left); zero when M is in closed form.
void increment_feynman_kac(const SimulationContext& ctx, const PathState& s, const StageData& d,
                           StageIncrement& out);
/// ΔG^{j(l)} = Σ_i K^{j(l)}_{t,i} ΔWⁱ with K^{j(l)}_{t,i} = Σ_k Ω^{(l)}_{ki} N^j_{t,k}.
void increment_KG(const SimulationContext& ctx, const PathState& s, const StageData& d,
                  const Vec& dW, StageIncrement& out);
/// The derived-process increments, written with the stage's ΔG^{j(1)}.
void increment_derived(const SimulationContext& ctx, const PathState& s, const StageData& d,
                       const Vec& dW, StageIncrement& out);

/// One Stratonovich-Heun step of every carried functional in lockstep, with
/// the Itô integral advanced at the left endpoint. Sets `rejected` on chart
/// exit instead of throwing.
void step(const SimulationContext& ctx, PathState& s, const Vec& dW);

/// Runs one path to t = T, resampling rejected attempts with fresh streams.
/// Throws std::runtime_error once `max_resample` resamples are exhausted.
/// If `record` is given, states at every `record_every`-th step (and t = 0)
/// of the accepted attempt are appended.
PathState simulate_path(const SimulationContext& ctx, const BundleState& z0, std::uint64_t seed,
                        std::uint64_t path_index, std::vector<PathState>* record = nullptr,
                        int record_every = 1);

/// A single attempt with the stream (seed, path_index, attempt); the result
/// may come back rejected.
PathState simulate_attempt(const SimulationContext& ctx, const BundleState& z0, std::uint64_t seed,
                           std::uint64_t path_index, std::uint64_t attempt,
                           std::vector<PathState>* record = nullptr, int record_every = 1);

}  // namespace bismut
