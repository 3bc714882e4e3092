#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "bismut/geometry.hpp"
#include "bismut/scenario.hpp"

namespace bismut::testing {

inline double max_abs(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Chart point well inside the usable domain of each catalog model.
inline Vec random_chart_point(const ManifoldModel& model, std::mt19937_64& rng) {
  const int m = model.dim();
  Vec x(m);
  if (dynamic_cast<const SphereSpherical*>(&model) || model.name() == "sphere-metric") {
    x(0) = 0.3 + (std::numbers::pi - 0.6) * uniform01(rng);
    x(1) = 2.0 * std::numbers::pi * uniform01(rng);
  } else if (dynamic_cast<const SphereStereographic*>(&model)) {
    for (int a = 0; a < m; ++a) x(a) = 2.4 * uniform01(rng) - 1.2;
  } else {
    for (int a = 0; a < m; ++a) x(a) = 2.0 * std::numbers::pi * uniform01(rng);
  }
  return x;
}

/// Random orthonormal frame (reflections included).
inline FramePoint random_frame_point(const ManifoldModel& model, std::mt19937_64& rng) {
  const Vec x = random_chart_point(model, rng);
  return standard_frame(model, x, random_orthogonal(rng, model.dim()));
}

inline std::vector<ModelPtr> catalog_models() {
  return {std::make_shared<FlatTorus>(2, 2.0 * std::numbers::pi),
          std::make_shared<FlatTorus>(3, 1.5),
          std::make_shared<SphereSpherical>(1.0),
          std::make_shared<SphereSpherical>(2.0),
          std::make_shared<SphereStereographic>(2, 1.0),
          std::make_shared<SphereStereographic>(3, 1.7)};
}

/// Round sphere of radius r in colatitude/longitude, known only through its metric.
inline std::shared_ptr<MetricModel> spherical_metric_model(double r) {
  return std::make_shared<MetricModel>(
      "sphere-metric", 2,
      [r](const Vec& x) {
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = r * r;
        g(1, 1) = r * r * std::sin(x(0)) * std::sin(x(0));
        return g;
      },
      [](const Vec& x) { return x(0) > 0.05 && x(0) < std::numbers::pi - 0.05; });
}

}  // namespace bismut::testing
