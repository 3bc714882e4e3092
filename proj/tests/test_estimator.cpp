#include <cmath>
#include <numbers>

#include "doctest.h"

#include "bismut/estimator.hpp"
#include "support.hpp"

using namespace bismut;
using bismut::testing::max_abs;

namespace {

EstimatorOptions options(std::size_t n, double h, std::uint64_t seed = 1, double T = 1.0) {
  EstimatorOptions o;
  o.n_paths = n;
  o.seed = seed;
  o.sim.h = h;
  o.sim.T = T;
  return o;
}

MapPtr constant_map(int n1, int n2, double value) {
  FeatureQuadratic q;
  q.L = Mat::Zero(n2, n1);
  q.c = Vec::Constant(n2, value);
  return make_feature_map(n1, n2, 2, trig_features(2), q, false);
}

bool within(const EstimateReport& r, const Mat& expected, double k) {
  return ((r.estimate - expected).array().abs() <= k * r.stderr_.array()).all();
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("semigroup of a constant map is exact") {
  Scenario sc = make_scenario("flat-classical");
  sc.map = constant_map(1, 1, 2.5);
  const EstimateReport r = estimate_semigroup(sc, sc.start, options(500, 1e-2));
  CHECK(r.estimate(0, 0) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(r.stderr_(0, 0) < 1e-15);
  CHECK(r.kind == "semigroup");
}

TEST_CASE("semigroup eigenfunction oracles") {
  Scenario flat = make_scenario("flat-classical");
  BundleState z = flat.start;
  z.frame.base.x = v2(0.0, 0.0);
  const EstimateReport rf = estimate_semigroup(flat, z, options(20000, 1e-2));
  CHECK(within(rf, Mat::Constant(1, 1, std::exp(-0.5)), 3.0));
  CHECK(max_abs(flat.oracle->value(z, 1.0) - Vec::Constant(1, std::exp(-0.5))) < 1e-15);

  // cos of the colatitude decays like e^{−T}.
  const Scenario sphere = make_scenario("sphere-classical");
  BundleState zs = sphere.start;
  zs.frame.base = standard_frame(*sphere.bundle.base, v2(-0.3, 0.2));
  const double f0 = 0.6 / 1.13;
  const EstimateReport rs = estimate_semigroup(sphere, zs, options(20000, 2e-3, 1, 0.5));
  MESSAGE("sphere semigroup " << rs.estimate(0, 0) << " +- " << rs.stderr_(0, 0) << " vs "
                              << std::exp(-0.5) * f0);
  CHECK(within(rs, Mat::Constant(1, 1, std::exp(-0.5) * f0), 3.0));
  CHECK(sphere.oracle->value(zs, 0.5)(0) == doctest::Approx(std::exp(-0.5) * f0));
}

TEST_CASE("classical estimator") {
  Scenario sc = make_scenario("flat-classical");
  const EstimateReport r = estimate_gradient_classical(sc, sc.start, options(20000, 1e-2));
  Mat expected(1, 2);
  expected << -std::exp(-0.5), 0.0;
  CHECK(within(r, expected, 3.0));
  CHECK(max_abs(sc.oracle->gradient(sc.start, 1.0) - expected) < 1e-15);

  sc.map = constant_map(1, 1, 1.0);
  const EstimateReport c = estimate_gradient_classical(sc, sc.start, options(20000, 1e-2));
  CHECK(within(c, Mat::Zero(1, 2), 3.0));

  const Scenario vec = make_scenario("flat-vector");
  CHECK_THROWS_AS(estimate_gradient_classical(vec, vec.start, options(10, 1e-2)), std::invalid_argument);
}

TEST_CASE("classical estimator on the sphere sees the Ricci weight") {
  const Scenario sc = make_scenario("sphere-classical");
  const EstimateReport r = estimate_gradient_classical(sc, sc.start, options(20000, 5e-3));
  const Mat oracle = sc.oracle->gradient(sc.start, 1.0);
  CHECK(oracle(0, 0) == doctest::Approx(-std::exp(-1.0)));
  CHECK(within(r, oracle, 3.0));
  CHECK(r.n_rejected < 100);
}

TEST_CASE("bundle estimator reduces to the classical one") {
  const Scenario sc = make_scenario("flat-classical");
  const EstimatorOptions o = options(2000, 1e-2, 42);
  const EstimateReport b = estimate_gradient_bundle(sc, sc.start, o);
  const EstimateReport c = estimate_gradient_classical(sc, sc.start, o);
  CHECK((b.estimate.array() == c.estimate.array()).all());
  CHECK((b.stderr_.array() == c.stderr_.array()).all());
  REQUIRE(b.terms.size() == 3);
  CHECK(max_abs(b.terms[1].mean) == 0.0);
  CHECK(max_abs(b.terms[2].mean) == 0.0);
}

TEST_CASE("bundle estimator terms sum to the estimate") {
  const Scenario sc = make_scenario("sphere-tm");
  const EstimateReport r = estimate_gradient_bundle(sc, sc.start, options(300, 1e-2, 3, 0.5));
  Mat sum = Mat::Zero(r.estimate.rows(), r.estimate.cols());
  for (const auto& t : r.terms) sum += t.mean;
  CHECK(max_abs(sum - r.estimate) < 1e-14);
  CHECK(r.terms[0].name != r.terms[1].name);
}

TEST_CASE("bundle estimator gradient of x-independent expectations vanishes") {
  Scenario sc = make_scenario("sphere-tm");
  sc.map = constant_map(2, 1, 0.7);
  const EstimateReport r = estimate_gradient_bundle(sc, sc.start, options(4000, 1e-2, 5, 0.5));
  CHECK(within(r, Mat::Zero(1, 2), 3.0));

  // Constant fields with F = <w, Y>: E F(Z_T) = <w, Y₀ + bT> is x-independent.
  const Scenario cst = make_scenario("flat-vector-const");
  const EstimateReport rc = estimate_gradient_bundle(cst, cst.start, options(8000, 1e-2, 6));
  CHECK(within(rc, Mat::Zero(1, 2), 3.0));
  const EstimateReport fd = estimate_gradient_fd(cst, cst.start, options(50, 1e-2, 6));
  CHECK(max_abs(fd.estimate) < 1e-12);
}

TEST_CASE("derived processes are linear in the vertical fields") {
  ScenarioOptions one, two;
  one.drop_linear_part = two.drop_linear_part = true;
  two.field_scale = 2.0;
  const Scenario a = make_scenario("flat-vector", one), b = make_scenario("flat-vector", two);
  const EstimatorOptions o = options(500, 1e-2, 8);
  const EstimateReport ra = estimate_gradient_bundle(a, a.start, o);
  const EstimateReport rb = estimate_gradient_bundle(b, b.start, o);
  CHECK(max_abs(rb.terms[2].mean - 2.0 * ra.terms[2].mean) < 1e-12);
  CHECK(max_abs(ra.terms[2].mean) > 1e-3);
}

TEST_CASE("finite-difference oracle") {
  const Scenario sc = make_scenario("flat-classical");
  const EstimatorOptions o = options(4000, 1e-2, 10);
  const EstimateReport fd = estimate_gradient_fd(sc, sc.start, o);
  Mat expected(1, 2);
  expected << -std::exp(-0.5), 0.0;
  CHECK(within(fd, expected, 3.0));

  // Against independent draws at ±ε: stderr √2 σ / (2ε √n).
  const EstimateReport sg = estimate_semigroup(sc, sc.start, o);
  const double naive = std::sqrt(2.0) * sg.stderr_(0, 0) / (2.0 * o.eps);
  MESSAGE("crn stderr " << fd.stderr_(0, 0) << " naive " << naive);
  CHECK(fd.stderr_(0, 0) * 10.0 < naive);

  // Halving ε moves the central difference by less than max(ε², stderr).
  const Scenario vec = make_scenario("flat-vector");
  EstimatorOptions ov = options(1000, 1e-2, 11);
  const EstimateReport e1 = estimate_gradient_fd(vec, vec.start, ov);
  ov.eps /= 2;
  const EstimateReport e2 = estimate_gradient_fd(vec, vec.start, ov);
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(e1.estimate(0, j) - e2.estimate(0, j)) <= std::max(1e-6, e1.stderr_(0, j)));
}

TEST_CASE("bundle estimator agrees with the oracle on a small flat run") {
  const Scenario sc = make_scenario("flat-vector");
  const EstimateReport b = estimate_gradient_bundle(sc, sc.start, options(4000, 1e-2, 12));
  const EstimateReport fd = estimate_gradient_fd(sc, sc.start, options(1500, 1e-2, 13));
  const Comparison c = compare(b, fd);
  MESSAGE("max |z| " << c.max_abs_z);
  CHECK(c.verdict == Verdict::Pass);
}

TEST_CASE("compare") {
  const Scenario sc = make_scenario("flat-classical");
  const EstimateReport r = estimate_gradient_classical(sc, sc.start, options(200, 1e-2));
  const Comparison self = compare(r, r);
  CHECK(max_abs(self.z) == 0.0);
  CHECK(self.verdict == Verdict::Pass);

  Mat a(1, 2), se(1, 2), b(1, 2);
  a << 0.0, 0.0;
  se << 1.0, 1.0;
  b << 3.0 * std::sqrt(2.0), 0.0;
  CHECK(compare(a, se, b, se).verdict == Verdict::Pass);
  b(0, 0) = 5.0 * std::sqrt(2.0);
  CHECK(compare(a, se, b, se).verdict == Verdict::Warn);
  b(0, 0) = 7.0 * std::sqrt(2.0);
  const Comparison fail = compare(a, se, b, se);
  CHECK(fail.verdict == Verdict::Fail);
  CHECK(fail.max_abs_z == doctest::Approx(7.0));
  CHECK(to_string(Verdict::Warn) == "WARN");
  CHECK_THROWS(compare(a, se, Mat::Zero(2, 2), Mat::Ones(2, 2)));
}

TEST_CASE("reports do not depend on the worker count") {
  const Scenario sc = make_scenario("sphere-tm");
  EstimatorOptions o = options(400, 1e-2, 14, 0.5);
  const EstimateReport one = estimate_gradient_bundle(sc, sc.start, o);
  o.workers = 3;
  const EstimateReport three = estimate_gradient_bundle(sc, sc.start, o);
  CHECK((one.estimate.array() == three.estimate.array()).all());
  CHECK((one.stderr_.array() == three.stderr_.array()).all());
  CHECK(one.n_rejected == three.n_rejected);
}

TEST_CASE("compensated sum") {
  CompensatedSum s;
  s.add(1.0);
  for (int k = 0; k < 1000; ++k) s.add(1e-16);
  s.add(-1.0);
  CHECK(s.value() == doctest::Approx(1e-13).epsilon(1e-6));
}
