#include "bismut/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <type_traits>

namespace bismut {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; the first draw is shifted away from zero.
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  Mat a(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) a(r, c) = scale * gaussian(rng);
  return a;
}

Vec random_vector(std::mt19937_64& rng, int n, double scale) {
  Vec v(n);
  for (int k = 0; k < n; ++k) v(k) = scale * gaussian(rng);
  return v;
}

Mat random_orthogonal(std::mt19937_64& rng, int n) {
  const Mat a = random_matrix(rng, n, n, 1.0);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  const Mat r = qr.matrixQR();
  for (int k = 0; k < n; ++k)
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  return q;
}

// ---------------------------------------------------------------------------

FeatureSet::FeatureSet(int n, EvalFn fn)
    : count(n), fn_(std::make_shared<const EvalFn>(std::move(fn))) {
  static std::atomic<std::uint64_t> next{1};
  id_ = next.fetch_add(1);
}

void FeatureSet::eval(const Vec& x, FeatureVec& phi, FeatureJac& dphi) const {
  struct Cache {
    std::uint64_t id = 0;
    Vec x;
    FeatureVec phi;
    FeatureJac dphi;
  };
  thread_local Cache cache;
  if (cache.id != id_ || cache.x.size() != x.size() || cache.x != x) {
    (*fn_)(x, cache.phi, cache.dphi);
    cache.id = id_;
    cache.x = x;
  }
  phi = cache.phi;
  dphi = cache.dphi;
}

FeatureSet trig_features(int m) {
  return FeatureSet(2 * m, [m](const Vec& x, FeatureVec& phi, FeatureJac& dphi) {
    phi.setZero(2 * m);
    dphi.setZero(2 * m, m);
    for (int a = 0; a < m; ++a) {
      const double s = std::sin(x(a)), c = std::cos(x(a));
      phi(2 * a) = s;
      phi(2 * a + 1) = c;
      dphi(2 * a, a) = c;
      dphi(2 * a + 1, a) = -s;
    }
  });
}

FeatureSet sphere_features(const SphereStereographic& model) {
  const int n = model.dim();
  return FeatureSet(n + 1, [n](const Vec& x, FeatureVec& phi, FeatureJac& dphi) {
    const double s = 1.0 + x.squaredNorm();
    phi.setZero(n + 1);
    dphi.setZero(n + 1, n);
    phi(0) = (2.0 - s) / s;
    for (int b = 0; b < n; ++b) dphi(0, b) = -4.0 * x(b) / (s * s);
    for (int a = 0; a < n; ++a) {
      phi(a + 1) = 2.0 * x(a) / s;
      for (int b = 0; b < n; ++b)
        dphi(a + 1, b) = (a == b ? 2.0 / s : 0.0) - 4.0 * x(a) * x(b) / (s * s);
    }
  });
}

FeatureSet sphere_features(const SphereSpherical&) {
  return FeatureSet(3, [](const Vec& x, FeatureVec& phi, FeatureJac& dphi) {
    const double st = std::sin(x(0)), ct = std::cos(x(0));
    const double sp = std::sin(x(1)), cp = std::cos(x(1));
    phi.resize(3);
    dphi.resize(3, 2);
    phi << st * cp, st * sp, ct;
    dphi << ct * cp, -st * sp, ct * sp, st * cp, -st, 0.0;
  });
}

FeatureSet features_for(const ManifoldModel& model) {
  if (auto* s = dynamic_cast<const SphereStereographic*>(&model)) return sphere_features(*s);
  if (auto* s = dynamic_cast<const SphereSpherical*>(&model)) return sphere_features(*s);
  return trig_features(model.dim());
}

namespace {

// B(x) = B + Σ_q φ_q(x) B_q with the rank fixed at compile time where
// possible; N = Eigen::Dynamic uses the capacity-bounded types.
template <int N>
FieldPtr feature_field(int rank, int base_dim, FeatureSet features, const FeatureAffine& coeff) {
  using Sq = std::conditional_t<N == Eigen::Dynamic, Mat, Eigen::Matrix<double, N, N>>;
  using V = std::conditional_t<N == Eigen::Dynamic, Vec, Eigen::Matrix<double, N, 1>>;
  const int nq = features.count;
  std::vector<Sq> bq_mat(nq, Sq(Mat::Zero(rank, rank)));
  std::vector<V> bq_vec(nq, V(Vec::Zero(rank)));
  for (int q = 0; q < nq; ++q) {
    if (q < static_cast<int>(coeff.Bq.size())) bq_mat[q] = coeff.Bq[q];
    if (q < static_cast<int>(coeff.bq.size())) bq_vec[q] = coeff.bq[q];
  }
  auto fn = [rank, nq, features = std::move(features), B0 = Sq(coeff.B), b0 = V(coeff.b),
             bq_mat = std::move(bq_mat), bq_vec = std::move(bq_vec)](
                const Vec& x, const Mat* dirs, AffineCoefficients& c) {
    const int nd = dirs ? static_cast<int>(dirs->cols()) : 0;
    if (nq == 0) {
      c.B = B0;
      c.b = b0;
      for (int k = 0; k < nd; ++k) {
        c.dB[k].setZero(rank, rank);
        c.db[k].setZero(rank);
      }
      return;
    }
    FeatureVec phi;
    FeatureJac dphi;
    features.eval(x, phi, dphi);
    Sq B = B0;
    V b = b0;
    for (int q = 0; q < nq; ++q) {
      B += phi(q) * bq_mat[q];
      b += phi(q) * bq_vec[q];
    }
    c.B = B;
    c.b = b;
    if (!dirs) return;
    const FeatureJac dd = dphi * *dirs;  // dd(q, k) = derivative of φ_q along dirs e_k
    for (int k = 0; k < nd; ++k) {
      Sq dB = dd(0, k) * bq_mat[0];
      V db = dd(0, k) * bq_vec[0];
      for (int q = 1; q < nq; ++q) {
        dB += dd(q, k) * bq_mat[q];
        db += dd(q, k) * bq_vec[q];
      }
      c.dB[k] = dB;
      c.db[k] = db;
    }
  };
  return std::make_shared<AffineVerticalField>(rank, base_dim, std::move(fn));
}

}  // namespace

FieldPtr make_feature_field(int rank, int base_dim, FeatureSet features, FeatureAffine coeff) {
  switch (rank) {
    case 1: return feature_field<1>(rank, base_dim, std::move(features), coeff);
    case 2: return feature_field<2>(rank, base_dim, std::move(features), coeff);
    case 3: return feature_field<3>(rank, base_dim, std::move(features), coeff);
    default: return feature_field<Eigen::Dynamic>(rank, base_dim, std::move(features), coeff);
  }
}

MapPtr make_feature_map(int rank_in, int rank_out, int base_dim, FeatureSet features,
                        FeatureQuadratic coeff, bool quadratic) {
  (void)base_dim;
  auto fn = [rank_out, quadratic, features = std::move(features),
             coeff = std::move(coeff)](const Vec& x) {
    FeatureVec phi;
    FeatureJac dphi;
    features.eval(x, phi, dphi);
    QuadraticCoefficients c;
    c.L = coeff.L;
    c.c = coeff.c;
    if (quadratic)
      for (int r = 0; r < rank_out; ++r) c.Q[r] = coeff.Q[r];
    for (int q = 0; q < features.count; ++q) {
      if (q < static_cast<int>(coeff.Lq.size())) c.L += phi(q) * coeff.Lq[q];
      if (q < static_cast<int>(coeff.cq.size())) c.c += phi(q) * coeff.cq[q];
      if (quadratic)
        for (int r = 0; r < rank_out; ++r)
          if (q < static_cast<int>(coeff.Qq[r].size())) c.Q[r] += phi(q) * coeff.Qq[r][q];
    }
    return c;
  };
  return std::make_shared<QuadraticBundleMap>(rank_in, rank_out, std::move(fn), quadratic);
}

namespace {

FeatureAffine random_affine(std::mt19937_64& rng, int rank, int count, double b_const,
                            double b_feat, double v_const, double v_feat, double diag,
                            bool drop_linear) {
  FeatureAffine a;
  a.B = drop_linear ? Mat(Mat::Zero(rank, rank))
                    : Mat(random_matrix(rng, rank, rank, b_const) + diag * Mat::Identity(rank, rank));
  a.b = random_vector(rng, rank, v_const);
  for (int q = 0; q < count; ++q) {
    const Mat bq = random_matrix(rng, rank, rank, b_feat);
    a.Bq.push_back(drop_linear ? Mat(Mat::Zero(rank, rank)) : bq);
    a.bq.push_back(random_vector(rng, rank, v_feat));
  }
  return a;
}

FeatureAffine scaled(FeatureAffine a, double s) {
  a.B *= s;
  a.b *= s;
  for (auto& m : a.Bq) m *= s;
  for (auto& v : a.bq) v *= s;
  return a;
}

std::function<BundleState(std::mt19937_64&)> torus_sampler(ProductBundle pb, double period) {
  return [pb, period](std::mt19937_64& rng) {
    const int m = pb.m();
    Vec x(m);
    for (int a = 0; a < m; ++a) x(a) = period * uniform01(rng);
    BundleState z;
    z.frame.base = standard_frame(*pb.base, x, random_orthogonal(rng, m));
    z.frame.u1 = random_orthogonal(rng, pb.n1());
    z.frame.u2 = random_orthogonal(rng, pb.n2());
    z.y = random_vector(rng, pb.n1(), 1.0);
    return z;
  };
}

std::function<BundleState(std::mt19937_64&)> stereographic_sampler(ProductBundle pb,
                                                                   double max_radius) {
  return [pb, max_radius](std::mt19937_64& rng) {
    const int m = pb.m();
    Vec dir = random_vector(rng, m, 1.0);
    dir.normalize();
    const Vec x = max_radius * std::sqrt(uniform01(rng)) * dir;
    BundleState z;
    z.frame.base = standard_frame(*pb.base, x, random_orthogonal(rng, m));
    z.frame.u1 = random_orthogonal(rng, pb.n1());
    z.frame.u2 = random_orthogonal(rng, pb.n2());
    z.y = random_vector(rng, pb.n1(), 1.0);
    return z;
  };
}

BundleState identity_start(const ProductBundle& pb, const Vec& x, const Vec& y) {
  BundleState z;
  z.frame.base = standard_frame(*pb.base, x);
  z.frame.u1 = Mat::Identity(pb.n1(), pb.n1());
  z.frame.u2 = Mat::Identity(pb.n2(), pb.n2());
  z.y = y;
  return z;
}

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int k = 0;
  for (double d : v) out(k++) = d;
  return out;
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Scenario flat_classical(const ScenarioOptions&) {
  Scenario s;
  s.name = "flat-classical";
  s.description = "flat 2-torus of period 2pi, trivial line bundles, V = 0, F = cos x1";
  auto base = std::make_shared<FlatTorus>(2, kTwoPi);
  s.bundle = {base, std::make_shared<TrivialBundle>(1, 2), std::make_shared<TrivialBundle>(1, 2)};
  s.fields.v1.assign(2, nullptr);
  FeatureQuadratic q;
  q.L = Mat::Zero(1, 1);
  q.c = Vec::Zero(1);
  q.cq = {Vec::Zero(1), vec({1.0})};  // feature 1 = cos x⁰
  s.map = make_feature_map(1, 1, 2, trig_features(2), q, false);
  s.start = identity_start(s.bundle, vec({std::numbers::pi / 2, 0.0}), Vec::Zero(1));
  s.default_T = 1.0;
  AnalyticOracle o;
  o.value = [](const BundleState& z, double T) {
    return Vec(z.frame.u2.transpose() * vec({std::exp(-T / 2) * std::cos(z.frame.base.x(0))}));
  };
  o.gradient = [](const BundleState& z, double T) {
    const double g = -std::exp(-T / 2) * std::sin(z.frame.base.x(0));
    return Mat(z.frame.u2.transpose() * g * z.frame.base.u.row(0));
  };
  s.oracle = o;
  s.sample_state = torus_sampler(s.bundle, kTwoPi);
  return s;
}

Scenario sphere_classical(const ScenarioOptions& opt) {
  Scenario s;
  s.name = "sphere-classical";
  s.description =
      "unit 2-sphere in stereographic coordinates, trivial line bundles, V = 0, F = cos(colatitude)"
      " with the pole along -axis 1, started on the equator";
  auto base = std::make_shared<SphereStereographic>(2, 1.0, opt.antipode_margin);
  s.bundle = {base, std::make_shared<TrivialBundle>(1, 2), std::make_shared<TrivialBundle>(1, 2)};
  s.fields.v1.assign(2, nullptr);
  FeatureQuadratic q;
  q.L = Mat::Zero(1, 1);
  q.c = Vec::Zero(1);
  q.cq = {Vec::Zero(1), vec({-1.0}), Vec::Zero(1)};  // cos θ = −p₁
  s.map = make_feature_map(1, 1, 2, sphere_features(*base), q, false);
  s.start = identity_start(s.bundle, Vec::Zero(2), Vec::Zero(1));
  s.default_T = 1.0;
  AnalyticOracle o;
  auto feats = sphere_features(*base);
  o.value = [feats](const BundleState& z, double T) {
    FeatureVec phi;
    FeatureJac dphi;
    feats.eval(z.frame.base.x, phi, dphi);
    return Vec(z.frame.u2.transpose() * vec({-std::exp(-T) * phi(1)}));
  };
  o.gradient = [feats](const BundleState& z, double T) {
    FeatureVec phi;
    FeatureJac dphi;
    feats.eval(z.frame.base.x, phi, dphi);
    const Mat row = -std::exp(-T) * dphi.row(1).head(2) * z.frame.base.u;
    return Mat(z.frame.u2.transpose() * row);
  };
  s.oracle = o;
  s.sample_state = stereographic_sampler(s.bundle, 1.2);
  return s;
}

Scenario flat_vector(const ScenarioOptions& opt) {
  Scenario s;
  s.name = "flat-vector";
  s.description =
      "flat 2-torus, trivial rank-2 E1 and rank-1 E2, x-dependent affine vertical fields, "
      "F = <w(x), y> + c(x)";
  auto base = std::make_shared<FlatTorus>(2, kTwoPi);
  s.bundle = {base, std::make_shared<TrivialBundle>(2, 2), std::make_shared<TrivialBundle>(1, 2)};
  std::mt19937_64 rng(20240611);
  const FeatureSet fs = trig_features(2);
  const double k = opt.field_scale;
  s.fields.v0 = make_feature_field(
      2, 2, fs, scaled(random_affine(rng, 2, 4, 0.1, 0.1, 0.3, 0.3, -0.3, opt.drop_linear_part), k));
  for (int i = 0; i < 2; ++i)
    s.fields.v1.push_back(make_feature_field(
        2, 2, fs,
        scaled(random_affine(rng, 2, 4, 0.15, 0.1, 0.3, 0.3, 0.0, opt.drop_linear_part), k)));
  FeatureQuadratic q;
  q.L = Mat(1, 2);
  q.L << 1.0, 0.5;
  q.c = Vec::Zero(1);
  for (int f = 0; f < 4; ++f) {
    q.Lq.push_back(random_matrix(rng, 1, 2, 0.3));
    q.cq.push_back(random_vector(rng, 1, 0.4));
  }
  s.map = make_feature_map(2, 1, 2, fs, q, false);
  s.start = identity_start(s.bundle, vec({0.3, 1.1}), k * vec({1.0, -0.5}));
  s.default_T = 1.0;
  s.sample_state = torus_sampler(s.bundle, kTwoPi);
  return s;
}

Scenario flat_vector_const(const ScenarioOptions& opt) {
  Scenario s;
  s.name = "flat-vector-const";
  s.description = "flat 2-torus, trivial rank-2 E1, constant fields V0 = b, V1,i = c_i, F = <w, y>";
  auto base = std::make_shared<FlatTorus>(2, kTwoPi);
  s.bundle = {base, std::make_shared<TrivialBundle>(2, 2), std::make_shared<TrivialBundle>(1, 2)};
  const double k = opt.field_scale;
  const Vec b = k * vec({0.4, -0.2});
  const Vec c0 = k * vec({0.3, 0.1});
  const Vec c1 = k * vec({-0.2, 0.25});
  auto constant = [&](const Vec& v) {
    FeatureAffine a;
    a.B = Mat::Zero(2, 2);
    a.b = v;
    return make_feature_field(2, 2, FeatureSet{0, [](const Vec&, FeatureVec& p, FeatureJac& d) {
                                                 p.resize(0);
                                                 d.resize(0, 2);
                                               }},
                              a);
  };
  s.fields.v0 = constant(b);
  s.fields.v1 = {constant(c0), constant(c1)};
  const Vec w = vec({1.0, 0.5});
  FeatureQuadratic q;
  q.L = w.transpose();
  q.c = Vec::Zero(1);
  s.map = make_feature_map(2, 1, 2, trig_features(2), q, false);
  s.start = identity_start(s.bundle, vec({0.3, 1.1}), k * vec({1.0, -0.5}));
  s.default_T = 1.0;
  AnalyticOracle o;
  o.value = [w, b](const BundleState& z, double T) {
    const Vec yt = z.frame.u1 * z.y + b * T;
    return Vec(z.frame.u2.transpose() * vec({w.dot(yt)}));
  };
  o.gradient = [](const BundleState& z, double) {
    return Mat(Mat::Zero(z.frame.u2.cols(), z.frame.base.u.cols()));
  };
  s.oracle = o;
  s.sample_state = torus_sampler(s.bundle, kTwoPi);
  return s;
}

Scenario sphere_tm(const ScenarioOptions& opt) {
  Scenario s;
  s.name = "sphere-tm";
  s.description =
      "unit 2-sphere in stereographic coordinates, E1 = TM with Levi-Civita connection, E2 trivial "
      "rank 1, affine fields polynomial in the embedding coordinates, F = <w(x), y> + c(x)";
  auto base = std::make_shared<SphereStereographic>(2, 1.0, opt.antipode_margin);
  s.bundle = {base, std::make_shared<TangentBundle>(base), std::make_shared<TrivialBundle>(1, 2)};
  std::mt19937_64 rng(20240612);
  const FeatureSet fs = sphere_features(*base);
  const double k = opt.field_scale;
  s.fields.v0 = make_feature_field(
      2, 2, fs, scaled(random_affine(rng, 2, 3, 0.1, 0.15, 0.3, 0.3, -0.3, opt.drop_linear_part), k));
  for (int i = 0; i < 2; ++i)
    s.fields.v1.push_back(make_feature_field(
        2, 2, fs,
        scaled(random_affine(rng, 2, 3, 0.15, 0.1, 0.3, 0.3, 0.0, opt.drop_linear_part), k)));
  FeatureQuadratic q;
  q.L = Mat(1, 2);
  q.L << 1.0, 0.5;
  q.c = Vec::Zero(1);
  for (int f = 0; f < 3; ++f) {
    q.Lq.push_back(random_matrix(rng, 1, 2, 0.4));
    q.cq.push_back(random_vector(rng, 1, 0.5));
  }
  s.map = make_feature_map(2, 1, 2, fs, q, false);
  s.start = identity_start(s.bundle, Vec::Zero(2), k * vec({0.5, -0.3}));
  s.default_T = 0.5;
  s.sample_state = stereographic_sampler(s.bundle, 1.2);
  return s;
}

Scenario flat_twisted(const ScenarioOptions& opt) {
  Scenario s;
  s.name = "flat-twisted";
  s.description =
      "flat 2-torus, curved rank-2 bundles E1 and E2 (twisted plane connections), affine fields, "
      "F linear in y with x-dependent coefficients";
  auto base = std::make_shared<FlatTorus>(2, kTwoPi);
  s.bundle = {base, std::make_shared<TwistedPlaneBundle>(2, opt.twist),
              std::make_shared<TwistedPlaneBundle>(2, -0.75 * opt.twist)};
  std::mt19937_64 rng(20240613);
  const FeatureSet fs = trig_features(2);
  const double k = opt.field_scale;
  s.fields.v0 = make_feature_field(
      2, 2, fs, scaled(random_affine(rng, 2, 4, 0.1, 0.1, 0.3, 0.3, -0.3, opt.drop_linear_part), k));
  for (int i = 0; i < 2; ++i)
    s.fields.v1.push_back(make_feature_field(
        2, 2, fs,
        scaled(random_affine(rng, 2, 4, 0.15, 0.1, 0.3, 0.3, 0.0, opt.drop_linear_part), k)));
  FeatureQuadratic q;
  q.L = Mat::Identity(2, 2);
  q.c = vec({0.2, -0.1});
  for (int f = 0; f < 4; ++f) {
    q.Lq.push_back(random_matrix(rng, 2, 2, 0.3));
    q.cq.push_back(random_vector(rng, 2, 0.4));
  }
  s.map = make_feature_map(2, 2, 2, fs, q, false);
  s.start = identity_start(s.bundle, vec({0.4, 0.9}), k * vec({0.8, 0.3}));
  s.default_T = 1.0;
  s.sample_state = torus_sampler(s.bundle, kTwoPi);
  return s;
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"flat-classical", "sphere-classical", "flat-vector", "flat-vector-const", "sphere-tm",
          "flat-twisted"};
}

Scenario make_scenario(const std::string& name, const ScenarioOptions& options) {
  if (name == "flat-classical") return flat_classical(options);
  if (name == "sphere-classical") return sphere_classical(options);
  if (name == "flat-vector") return flat_vector(options);
  if (name == "flat-vector-const") return flat_vector_const(options);
  if (name == "sphere-tm") return sphere_tm(options);
  if (name == "flat-twisted") return flat_twisted(options);
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

MapPtr random_test_function(const Scenario& scenario, std::mt19937_64& rng, bool quadratic) {
  const ProductBundle& pb = scenario.bundle;
  const int n1 = pb.n1(), n2 = pb.n2(), m = pb.m();
  const FeatureSet fs = features_for(*pb.base);
  FeatureQuadratic q;
  q.L = random_matrix(rng, n2, n1, 1.0);
  q.c = random_vector(rng, n2, 1.0);
  for (int r = 0; r < n2; ++r) q.Q[r] = random_matrix(rng, n1, n1, 0.5);
  for (int f = 0; f < fs.count; ++f) {
    q.Lq.push_back(random_matrix(rng, n2, n1, 0.5));
    q.cq.push_back(random_vector(rng, n2, 0.5));
    for (int r = 0; r < n2; ++r) q.Qq[r].push_back(random_matrix(rng, n1, n1, 0.3));
  }
  return make_feature_map(n1, n2, m, fs, q, quadratic);
}

}  // namespace bismut
