#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "bismut/bundle.hpp"
#include "bismut/scenario.hpp"
#include "support.hpp"

using namespace bismut;
using bismut::testing::max_abs;

namespace {

std::vector<std::pair<std::string, ProductBundle>> curved_bundles() {
  auto torus = std::make_shared<FlatTorus>(2, 2.0 * std::numbers::pi);
  auto stereo = std::make_shared<SphereStereographic>(2, 1.0);
  auto spherical = std::make_shared<SphereSpherical>(1.0);
  auto s3 = std::make_shared<SphereStereographic>(3, 1.4);
  return {
      {"twisted", {torus, std::make_shared<TwistedPlaneBundle>(2, 0.8),
                   std::make_shared<TwistedPlaneBundle>(2, -0.6)}},
      {"tm-stereo", {stereo, std::make_shared<TangentBundle>(stereo), std::make_shared<TrivialBundle>(1, 2)}},
      {"tm-spherical", {spherical, std::make_shared<TangentBundle>(spherical),
                        std::make_shared<TangentBundle>(spherical)}},
      {"tm-s3", {s3, std::make_shared<TangentBundle>(s3), std::make_shared<TrivialBundle>(2, 3)}},
  };
}

ExtendedFrame random_extended(const ProductBundle& pb, std::mt19937_64& rng) {
  return {bismut::testing::random_frame_point(*pb.base, rng), random_orthogonal(rng, pb.n1()),
          random_orthogonal(rng, pb.n2())};
}

}  // namespace

TEST_CASE("connections are antisymmetric and curvature matches its definition") {
  std::mt19937_64 rng(21);
  for (const auto& [name, pb] : curved_bundles()) {
    CAPTURE(name);
    const int m = pb.m();
    for (const BundlePtr& e : {pb.e1, pb.e2}) {
      for (int trial = 0; trial < 100; ++trial) {
        const Vec x = bismut::testing::random_chart_point(*pb.base, rng);
        const MatrixForm a = e->connection(x);
        const MatrixTwoForm f = e->curvature(x);
        const MatrixTwoForm ffd = e->curvature_fd(x);
        for (int b = 0; b < m; ++b) {
          CHECK(max_abs(a[b] + a[b].transpose()) < 1e-12);
          for (int c = 0; c < m; ++c) {
            CHECK(max_abs(f[b * m + c] - ffd[b * m + c]) < 1e-5);
            CHECK(max_abs(f[b * m + c] + f[c * m + b]) < 1e-12);
            CHECK(max_abs(f[b * m + c] + f[b * m + c].transpose()) < 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("trivial bundles have no curvature") {
  std::mt19937_64 rng(22);
  const Scenario sc = make_scenario("flat-vector");
  const ExtendedFrame f = random_extended(sc.bundle, rng);
  for (int level = 0; level < 3; ++level)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) {
        CHECK(max_abs(bundle_curvature_scalarized(sc.bundle, f, level, j, i)) == 0.0);
        CHECK(max_abs(horizontal_curvature_derivative(sc.bundle, f, level, 0, j, i)) == 0.0);
      }
}

TEST_CASE("scalarized bundle curvature is antisymmetric at 1000 random points") {
  std::mt19937_64 rng(23);
  for (const auto& [name, pb] : curved_bundles()) {
    CAPTURE(name);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const ExtendedFrame f = random_extended(pb, rng);
      const int level = 1 + trial % 2;
      const int j = trial % pb.m(), i = (trial / 2) % pb.m();
      const Mat om = bundle_curvature_scalarized(pb, f, level, j, i);
      const Mat swapped = bundle_curvature_scalarized(pb, f, level, i, j);
      worst = std::max({worst, max_abs(om + om.transpose()), max_abs(om + swapped)});
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("tangent bundle curvature reproduces the base curvature") {
  std::mt19937_64 rng(24);
  for (const auto& [name, pb] : curved_bundles()) {
    if (name == "twisted") continue;
    CAPTURE(name);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      ExtendedFrame f = random_extended(pb, rng);
      // Same frame seen through the trivialization σ: u₁ = σ⁻¹ u.
      f.u1 = small_inverse(pb.base->frame_field(f.base.x)) * f.base.u;
      const int j = trial % pb.m(), i = (trial / 3) % pb.m();
      worst = std::max(worst, max_abs(bundle_curvature_scalarized(pb, f, 1, j, i) -
                                      bundle_curvature_scalarized(pb, f, 0, j, i)));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("horizontal derivative of curvature") {
  std::mt19937_64 rng(25);
  // Constant curvature: the scalarized tensor is parallel.
  for (const auto& [name, pb] : curved_bundles()) {
    if (name == "twisted") continue;
    for (int trial = 0; trial < 20; ++trial) {
      const ExtendedFrame f = random_extended(pb, rng);
      for (int level : {0, 1})
        CHECK(max_abs(horizontal_curvature_derivative(pb, f, level, trial % pb.m(), 0, 1)) < 1e-6);
    }
  }
  // Twisted plane: Ω_{jk} = −α cos x⁰ (u₀ⱼu₁ₖ − u₀ₖu₁ⱼ) u₁ᵀJu₁, and u₁ᵀJu₁ is
  // unchanged along the flow because A commutes with J.
  const double alpha = 0.8;
  auto torus = std::make_shared<FlatTorus>(2, 2.0 * std::numbers::pi);
  const ProductBundle pb{torus, std::make_shared<TwistedPlaneBundle>(2, alpha),
                         std::make_shared<TrivialBundle>(1, 2)};
  for (int trial = 0; trial < 20; ++trial) {
    const ExtendedFrame f = random_extended(pb, rng);
    const Mat& u = f.base.u;
    const Mat rot = f.u1.transpose() * rotation_generator() * f.u1;
    for (int i = 0; i < 2; ++i) {
      const double dx0 = u(0, i);
      const double wedge = u(0, 0) * u(1, 1) - u(0, 1) * u(1, 0);
      const Mat expected = alpha * std::sin(f.base.x(0)) * dx0 * wedge * rot;
      const Mat got = horizontal_curvature_derivative(pb, f, 1, i, 0, 1);
      CHECK(max_abs(got - expected) < 1e-7);
      // Halving the step changes the central difference by far less than its size.
      const Mat half = horizontal_curvature_derivative(pb, f, 1, i, 0, 1, 5e-5);
      CHECK(max_abs(got - half) < 1e-8);
    }
  }
}

TEST_CASE("frame connection matches the chart contraction") {
  std::mt19937_64 rng(26);
  const auto pb = curved_bundles()[1].second;
  for (int trial = 0; trial < 20; ++trial) {
    const ExtendedFrame f = random_extended(pb, rng);
    const MatrixForm a = pb.e1->connection(f.base.x);
    const FrameConnection fc = frame_connection(a, f.base.u);
    for (int k = 0; k < 2; ++k)
      CHECK(max_abs(fc[k] - contract_form(a, Vec(f.base.u.col(k)))) < 1e-14);
  }
}

TEST_CASE("vertical field jets agree with finite differences") {
  std::mt19937_64 rng(27);
  for (const std::string name : {"flat-vector", "sphere-tm", "flat-twisted"}) {
    CAPTURE(name);
    const Scenario sc = make_scenario(name);
    const ProductBundle& pb = sc.bundle;
    const int m = pb.m(), n1 = pb.n1();
    std::vector<FieldPtr> fields{sc.fields.v0};
    for (const auto& v : sc.fields.v1) fields.push_back(v);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const BundleState z = sc.sample_state(rng);
      const FrameConnection fc = frame_connection(pb.e1->connection(z.frame.base.x), z.frame.base.u);
      for (const FieldPtr& field : fields) {
        const VerticalJet jet = field->jet(z.frame, z.y, &fc, true);
        const double h = 1e-5;
        for (int p = 0; p < n1; ++p) {
          Vec yp = z.y, ym = z.y;
          yp(p) += h;
          ym(p) -= h;
          const Vec d = (field->jet(z.frame, yp, &fc, false).value -
                         field->jet(z.frame, ym, &fc, false).value) / (2 * h);
          worst = std::max(worst, max_abs(d - jet.fiber.col(p)));
        }
        for (int k = 0; k < m; ++k) {
          const double s = 1e-4;
          const ExtendedFrame fp = horizontal_flow(pb, z.frame, k, s);
          const ExtendedFrame fm = horizontal_flow(pb, z.frame, k, -s);
          const FrameConnection cp = frame_connection(pb.e1->connection(fp.base.x), fp.base.u);
          const FrameConnection cm = frame_connection(pb.e1->connection(fm.base.x), fm.base.u);
          const VerticalJet jp = field->jet(fp, z.y, &cp, false);
          const VerticalJet jm = field->jet(fm, z.y, &cm, false);
          worst = std::max(worst, max_abs((jp.value - jm.value) / (2 * s) - jet.horizontal[k]));
          worst = std::max(worst,
                           max_abs((jp.fiber - jm.fiber) / (2 * s) - jet.horizontal_fiber[k]));
        }
        const Tensor3<double> d2 = field->fiber_hessian(z.frame, z.y);
        for (int a = 0; a < n1; ++a) CHECK(max_abs(d2.slice[a]) == 0.0);
      }
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("bundle maps are equivariant and their fiber derivatives are exact") {
  std::mt19937_64 rng(28);
  for (const std::string name : {"flat-vector", "sphere-tm", "flat-twisted"}) {
    CAPTURE(name);
    const Scenario sc = make_scenario(name);
    const MapPtr maps[] = {sc.map, random_test_function(sc, rng, true)};
    for (const MapPtr& map : maps) {
      double worst_eq = 0.0, worst_d = 0.0;
      for (int trial = 0; trial < 100; ++trial) {
        const BundleState z = sc.sample_state(rng);
        const Vec f0 = map->value(z.frame, z.y);
        for (int pair = 0; pair < 10; ++pair) {
          const Mat h1 = random_orthogonal(rng, sc.bundle.n1());
          const Mat h2 = random_orthogonal(rng, sc.bundle.n2());
          ExtendedFrame g = z.frame;
          g.u1 = z.frame.u1 * h1;
          g.u2 = z.frame.u2 * h2;
          worst_eq = std::max(worst_eq, max_abs(map->value(g, h1.transpose() * z.y) - h2.transpose() * f0));
        }
        const Mat df = map->fiber_jacobian(z.frame, z.y);
        const Tensor3<double> d2f = map->fiber_hessian(z.frame, z.y);
        const double h = 1e-5;
        for (int p = 0; p < sc.bundle.n1(); ++p) {
          Vec yp = z.y, ym = z.y;
          yp(p) += h;
          ym(p) -= h;
          worst_d = std::max(worst_d, max_abs((map->value(z.frame, yp) - map->value(z.frame, ym)) / (2 * h) -
                                              df.col(p)));
          const Mat ddf = (map->fiber_jacobian(z.frame, yp) - map->fiber_jacobian(z.frame, ym)) / (2 * h);
          for (int r = 0; r < sc.bundle.n2(); ++r)
            worst_d = std::max(worst_d, max_abs(ddf.row(r).transpose() - d2f.slice[r].col(p)));
        }
      }
      CHECK(worst_eq < 1e-10);
      CHECK(worst_d < 1e-7);
    }
  }
}

TEST_CASE("catalog scenarios have the advertised structure") {
  std::mt19937_64 rng(29);
  const Scenario a = make_scenario("flat-classical");
  CHECK(a.fields.all_zero());
  CHECK(a.bundle.e1->is_flat());
  CHECK(a.bundle.e2->is_flat());

  const Scenario b = make_scenario("flat-vector");
  const Scenario c = make_scenario("sphere-tm");
  for (int trial = 0; trial < 20; ++trial) {
    const BundleState zb = b.sample_state(rng);
    CHECK(max_abs(ricci_scalarized(*b.bundle.base, zb.frame.base)) == 0.0);
    CHECK(max_abs(bundle_curvature_scalarized(b.bundle, zb.frame, 1, 0, 1)) == 0.0);
    CHECK(max_abs(b.fields.v0->jet(zb.frame, zb.y, nullptr, false).fiber) > 1e-3);

    const BundleState zc = c.sample_state(rng);
    CHECK(max_abs(ricci_scalarized(*c.bundle.base, zc.frame.base) - Mat::Identity(2, 2)) < 1e-10);
    CHECK(max_abs(bundle_curvature_scalarized(c.bundle, zc.frame, 1, 0, 1)) > 0.5);
    CHECK(max_abs(bundle_curvature_scalarized(c.bundle, zc.frame, 2, 0, 1)) == 0.0);
  }
  CHECK_THROWS_AS(make_scenario("nope"), std::invalid_argument);
}
