#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "bismut/verify.hpp"
#include "support.hpp"

using namespace bismut;
using bismut::testing::max_abs;

namespace {

MapPtr constant_map(int n1, int n2) {
  FeatureQuadratic q;
  q.L = Mat::Zero(n2, n1);
  q.c = Vec::Constant(n2, 1.3);
  return make_feature_map(n1, n2, 2, trig_features(2), q, false);
}

MapPtr squared_norm_map(int n1) {
  FeatureQuadratic q;
  q.Q[0] = Mat::Identity(n1, n1);
  q.L = Mat::Zero(1, n1);
  q.c = Vec::Zero(1);
  return make_feature_map(n1, 1, 2, trig_features(2), q, true);
}

}  // namespace

TEST_CASE("generator examples") {
  std::mt19937_64 rng(31);
  const Scenario flat = make_scenario("flat-classical");
  const Scenario sphere = make_scenario("sphere-tm");
  for (int trial = 0; trial < 5; ++trial) {
    const BundleState z = flat.sample_state(rng);
    CHECK(max_abs(apply_generator(flat, *constant_map(1, 1), z)) < 1e-9);
    // Φ = U₂⁻¹ cos x₁, and U₂ = ±1 is a random sign here.
    const double phi = flat.map->value(z.frame, z.y)(0);
    CHECK(std::abs(phi - z.frame.u2(0, 0) * std::cos(z.frame.base.x(0))) < 1e-15);
    CHECK(std::abs(apply_generator(flat, *flat.map, z)(0) + 0.5 * phi) < 1e-6);
    const BundleState zs = sphere.sample_state(rng);
    CHECK(max_abs(apply_generator(sphere, *constant_map(2, 1), zs)) < 1e-9);
  }

  // V₀ = 0, V_{1,i} = c_i: L|Y|² = Σ|c_i|².
  Scenario cst = make_scenario("flat-vector-const");
  cst.fields.v0 = nullptr;
  const double expected = 0.3 * 0.3 + 0.1 * 0.1 + 0.2 * 0.2 + 0.25 * 0.25;
  for (int trial = 0; trial < 5; ++trial) {
    const BundleState z = cst.sample_state(rng);
    CHECK(std::abs(apply_generator(cst, *squared_norm_map(2), z)(0) - z.frame.u2(0, 0) * expected) < 1e-6);
  }
}

TEST_CASE("horizontal gradient examples") {
  std::mt19937_64 rng(32);
  const Scenario flat = make_scenario("flat-classical");
  BundleState z = flat.start;
  for (double x0 : {0.2, 1.4, 4.0}) {
    z.frame.base.x(0) = x0;
    const Mat g = apply_hgrad(flat, *flat.map, z);
    CHECK(std::abs(g(0, 0) + std::sin(x0)) < 1e-6);
    CHECK(std::abs(g(0, 1)) < 1e-6);
    CHECK(max_abs(apply_hgrad(flat, *constant_map(1, 1), z)) < 1e-9);
  }

  // u → u h maps ∇ᴴΦ to ∇ᴴΦ h.
  const Scenario sc = make_scenario("sphere-tm");
  for (int trial = 0; trial < 5; ++trial) {
    const BundleState zs = sc.sample_state(rng);
    const Mat h = random_orthogonal(rng, 2);
    BundleState rotated = zs;
    rotated.frame.base.u = zs.frame.base.u * h;
    const Mat g = apply_hgrad(sc, *sc.map, zs);
    CHECK(max_abs(apply_hgrad(sc, *sc.map, rotated) - g * h) < 1e-6);
  }
}

TEST_CASE("flow commutators match the scalarized curvatures") {
  for (const std::string name : {"flat-classical", "sphere-classical", "sphere-tm", "flat-twisted"}) {
    CAPTURE(name);
    const Scenario sc = make_scenario(name);
    const auto rows = run_commutator_suite(sc, 10, 33);
    double worst = 0.0, weakest_mutation = 1e300, largest_omega = 0.0;
    for (const auto& r : rows) {
      worst = std::max(worst, r.residual);
      largest_omega = std::max(largest_omega, r.omega_norm);
      if (r.omega_norm > 0.1) weakest_mutation = std::min(weakest_mutation, r.mutated);
    }
    CHECK(worst <= 5e-4);
    if (name == "flat-classical") CHECK(largest_omega == 0.0);
    else CHECK(weakest_mutation >= 10 * 5e-4);
  }
}

TEST_CASE("expansion identities on the catalog") {
  for (const std::string name : {"flat-classical", "flat-vector", "sphere-tm", "flat-twisted"}) {
    CAPTURE(name);
    const Scenario sc = make_scenario(name);
    const auto rows = run_expansion_suite(sc, 4, 34);
    for (const auto& r : rows) {
      CHECK(r.residual <= 1e-3);
      CHECK(r.second_residual <= 1e-3);
      CHECK(r.regroup_row <= 1e-10);
      CHECK(r.pass);
      for (const auto& [term, norm] : r.term_norms) {
        CAPTURE(term);
        if (term.rfind("generator", 0) == 0) continue;
        if (name == "flat-classical") CHECK(norm < 1e-6);
        if (name == "flat-vector" && (term == "t1" || term == "t4" || term == "t4_product"))
          CHECK(norm < 1e-9);
      }
      // Every non-negligible term is visible to the check.
      for (std::size_t k = 0; k < r.mutated.size(); ++k)
        if (r.term_norms[k].second > 1e-2) CHECK(r.mutated[k].second >= 10 * 1e-3);
    }
    if (name == "sphere-tm") {
      // The product-rule term is required; the displayed form without it fails.
      for (const auto& r : rows) CHECK(r.residual_without_product > 1e-2);
      for (const auto& r : rows) CHECK(r.second_residual_dv0_per_direction > 1e-2);
    }
  }
}

TEST_CASE("trivial flat expansion is exact to roundoff scale") {
  std::mt19937_64 rng(35);
  const Scenario sc = make_scenario("flat-classical");
  for (int trial = 0; trial < 3; ++trial) {
    const BundleState z = sc.sample_state(rng);
    const OperatorResidual r = check_expansion(sc, *sc.map, z);
    CHECK(r.residual <= 1e-6);
    const OperatorResidual c = check_second_commutation(sc, *sc.map, z);
    CHECK(c.residual <= 1e-6);
    for (std::size_t k = 1; k < c.terms.size(); ++k) CHECK(c.term_norm(k) == 0.0);
  }
}

TEST_CASE("expansion residual converges with the nested step") {
  std::mt19937_64 rng(36);
  const Scenario sc = make_scenario("sphere-tm");
  const BundleState z = sc.sample_state(rng);
  const MapPtr phi = random_test_function(sc, rng, true);
  VerifyOptions coarse, fine;
  coarse.nested_step = 4e-3;
  fine.nested_step = 2e-3;
  const double rc = check_expansion(sc, *phi, z, coarse).residual;
  const double rf = check_expansion(sc, *phi, z, fine).residual;
  MESSAGE("residual " << rc << " -> " << rf);
  CHECK(rf < rc / 2.5);
}

TEST_CASE("regrouping needs the row reading for general N") {
  std::mt19937_64 rng(37);
  const Scenario sc = make_scenario("sphere-tm");
  const BundleState z = sc.sample_state(rng);
  const MapPtr phi = random_test_function(sc, rng, true);
  const ExpansionPrimitives p = expansion_primitives(sc, *phi, z);
  const Dyn N = random_matrix(rng, 2, 2, 1.0), M = random_matrix(rng, 2, 2, 1.0);
  CHECK(check_regrouping(p, N, M, NbarChoice::Row, true).residual <= 1e-10);
  CHECK(check_regrouping(p, N, M, NbarChoice::Col, true).residual > 1e-3);
  // Symmetric N and M make the two readings coincide.
  const Dyn S = N + N.transpose(), T = M + M.transpose();
  CHECK(check_regrouping(p, S, T, NbarChoice::Col, true).residual <= 1e-10);
}
