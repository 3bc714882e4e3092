#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bismut/paths.hpp"

namespace bismut {

struct EstimatorOptions {
  SimulationSettings sim;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 1;
  int workers = 1;
  double eps = 1e-3;  // finite-difference oracle only
};

struct TermEstimate {
  std::string name;
  Mat mean;
  Mat stderr_;
};

/// Result of one Monte Carlo run. Gradients are n₂×m with column j the
/// component along U₀e_j; the semigroup value is n₂×1.
struct EstimateReport {
  std::string kind;  // semigroup | classical | bundle | fd
  std::string scenario;
  Mat estimate;
  Mat stderr_;
  std::vector<TermEstimate> terms;
  std::size_t n_paths = 0;
  std::size_t n_rejected = 0;
  std::uint64_t seed = 0;
  double max_frame_defect = 0.0;
  double wall_time_s = 0.0;
};

/// 𝔼_z F(Z_T).
EstimateReport estimate_semigroup(const Scenario& sc, const BundleState& z0,
                                  const EstimatorOptions& opt);

/// (1/T) mean[f(x_T) (∫ M dW)ᵀ]; the scenario must have trivial line bundles.
EstimateReport estimate_gradient_classical(const Scenario& sc, const BundleState& z0,
                                           const EstimatorOptions& opt);

/// Column j: (1/T) mean[F (∫M dW)_j − G^{j(2)}_T F + DF Y^j_T], split into the
/// three terms.
EstimateReport estimate_gradient_bundle(const Scenario& sc, const BundleState& z0,
                                        const EstimatorOptions& opt);

/// Central differences of 𝔼F(Z_T) between starts shifted by ±ε along H_j,
/// with common increments per path index.
EstimateReport estimate_gradient_fd(const Scenario& sc, const BundleState& z0,
                                    const EstimatorOptions& opt);

enum class Verdict { Pass, Warn, Fail };
std::string to_string(Verdict v);

struct Comparison {
  Mat z;
  double max_abs_z = 0.0;
  Verdict verdict = Verdict::Pass;
};

/// z = (A − B) / √(seA² + seB²) per entry; PASS if all |z| ≤ 4, WARN if ≤ 6.
Comparison compare(const EstimateReport& a, const EstimateReport& b);
/// Against an exact value (zero standard error).
Comparison compare(const EstimateReport& a, const Mat& exact);
Comparison compare(const Mat& a, const Mat& se_a, const Mat& b, const Mat& se_b);

/// Runs fn(i) for i in [0, n) on `workers` threads; order of side effects is
/// unspecified, so fn must write to disjoint storage.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double v);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace bismut
