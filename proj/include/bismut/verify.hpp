#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bismut/scenario.hpp"

namespace bismut {

/// Finite-difference steps. Horizontal derivatives difference along the
/// flows of H_i (RK4), fiber derivatives of the test function are analytic.
struct VerifyOptions {
  double single_step = 1e-4;  // first-level derivatives
  double nested_step = 1e-3;  // every level of a nested derivative
};

using Dyn = Eigen::MatrixXd;
/// A matrix-valued function of the state z = (U, Y).
using StateFn = std::function<Dyn(const BundleState& z)>;

/// Flow of H_i (Y fixed).
BundleState flow_horizontal(const Scenario& sc, const BundleState& z, int i, double s);
/// Flow of X_i = H_i + V_{1,i} (RK4 on frames and fiber together).
BundleState flow_combined(const Scenario& sc, const BundleState& z, int i, double s);

/// H_i f by central differences along the H_i flow.
Dyn horizontal_derivative(const Scenario& sc, const StateFn& f, const BundleState& z, int i,
                          double step);
/// L f = ½ Σ_i X_i² f + V₀ f by second differences along the X_i flows and a
/// central difference along V₀ in the fiber.
Dyn generator(const Scenario& sc, const StateFn& f, const BundleState& z, double step);

/// L Φ(z), n₂-vector.
Vec apply_generator(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                    const VerifyOptions& opt = {});
/// ∇ᴴΦ(z), n₂×m with column j = H_j Φ.
Mat apply_hgrad(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                const VerifyOptions& opt = {});

/// An assembled identity lhs = Σ terms, with each term kept for diagnosis.
struct OperatorResidual {
  std::vector<std::string> term_names;
  std::vector<Dyn> terms;
  Dyn lhs;
  Dyn rhs;
  double residual = 0.0;  // max |lhs − rhs|
  /// Alternative assemblies (name, residual), e.g. with a term removed.
  std::vector<std::pair<std::string, double>> variants;

  /// max |lhs − (rhs − 2 term_k)|: the residual if term k had the wrong sign.
  double mutated_residual(std::size_t k) const;
  double term_norm(std::size_t k) const;
};

/// [H_j, H_i] measured by mixed differences of flow compositions on the
/// coordinates of x, U₀, U₁, U₂ and compared with (Ω^{(0)}, Ω^{(1)}, Ω^{(2)})_{ji}.
/// Terms: "x" (must vanish), "omega0", "omega1", "omega2" (the predicted
/// vertical parts); lhs is the measured bracket, stacked the same way.
OperatorResidual check_flow_commutator(const ProductBundle& pb, const ExtendedFrame& f, int j, int i,
                                       double step = 1e-3);

/// Everything the expansion terms are built from, at one state.
struct ExpansionPrimitives {
  int m = 0, n1 = 0, n2 = 0;
  Dyn y;
  Dyn F, DF;                // n₂, n₂×n₁
  std::vector<Dyn> D2F;     // n₂ slices n₁×n₁
  std::vector<Dyn> HF;      // [i] H_iF
  std::vector<Dyn> DHF;     // [i] D(H_iF)
  std::vector<std::vector<Dyn>> om1, om2;    // [j][i] Ω_{ji}
  std::vector<std::vector<Dyn>> hom1, hom2;  // [i][k] H_iΩ_{ki}
  std::vector<Dyn> V1, DV1;                  // [i]
  std::vector<std::vector<Dyn>> D2V1;        // [i][a] slice of D²V_{1,i}
  std::vector<std::vector<Dyn>> HV1, DHV1;   // [j][i] H_jV_{1,i}, D(H_jV_{1,i})
  std::vector<std::vector<Dyn>> HHV1;        // [i][k] H_iH_kV_{1,i}
  Dyn V0, DV0;
  std::vector<Dyn> HV0;                      // [j]
  Dyn ric;                                   // Ric_U, m×m
};

ExpansionPrimitives expansion_primitives(const Scenario& sc, const BundleMap& phi,
                                         const BundleState& z, const VerifyOptions& opt = {});

/// Terms of [∇ᴴ, L]Φ, each n₂×m: "ric", "t1", "t2", "t3", "t4", "t4_product",
/// "t5". "t4_product" is ½ Σ_i DF(Ω^{(1)}_{ji} V_{1,i}), the product-rule term
/// from differentiating DF(Ω^{(1)}Y) along V_{1,i}.
std::vector<std::pair<std::string, Dyn>> expansion_terms(const ExpansionPrimitives& p);

/// lhs = ∇ᴴ(LΦ), rhs = L(∇ᴴΦ) + all terms. Variant "without_t4_product" drops
/// that term.
OperatorResidual check_expansion(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                                 const VerifyOptions& opt = {});

/// lhs = D(LΦ), rhs = L(DΦ) + A₄ + A₅, each n₂×n₁. Variant "dv0_per_direction"
/// counts DV₀ once per direction i instead of once.
OperatorResidual check_second_commutation(const Scenario& sc, const BundleMap& phi,
                                          const BundleState& z, const VerifyOptions& opt = {});

enum class NbarChoice { Row, Col };

/// Algebraic regrouping at a state: N Φ − M Σ_j DF(V_{1,j}) e_jᵀ against
/// −A₁ + A₂ + A₃, for arbitrary N and M, with N^j_k read by `choice`.
/// `with_product_term` adds t4_product to Φ and ½K^{j(1)}_{t,i}V_{1,i} to B_{t,j}.
OperatorResidual check_regrouping(const ExpansionPrimitives& p, const Dyn& N, const Dyn& M,
                                  NbarChoice choice, bool with_product_term);

// ---------------------------------------------------------------------------
// Batteries over random states.

struct CommutatorRow {
  int state = 0;
  int j = 0, i = 0;
  double residual = 0.0;
  double mutated = 0.0;  // with every Ω negated
  double omega_norm = 0.0;
  bool pass = false;
};

std::vector<CommutatorRow> run_commutator_suite(const Scenario& sc, int states, std::uint64_t seed,
                                                double tol = 5e-4);

struct ExpansionRow {
  int state = 0;
  std::vector<std::pair<std::string, double>> term_norms;
  double lhs_norm = 0.0, rhs_norm = 0.0;
  double residual = 0.0;
  double residual_without_product = 0.0;
  double second_residual = 0.0;
  double second_residual_dv0_per_direction = 0.0;
  double regroup_row = 0.0, regroup_col = 0.0;
  /// Per-term residual when that term's sign is flipped.
  std::vector<std::pair<std::string, double>> mutated;
  bool pass = false;
};

std::vector<ExpansionRow> run_expansion_suite(const Scenario& sc, int states, std::uint64_t seed,
                                              double tol = 1e-3, double regroup_tol = 1e-10,
                                              const VerifyOptions& opt = {});

}  // namespace bismut
