#include "bismut/paths.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bismut {

int SimulationSettings::steps() const {
  if (!(T > 0.0) || !(h > 0.0)) throw std::invalid_argument("T and h must be positive");
  const double n = T / h;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * r)
    throw std::invalid_argument("T / h must be an integer");
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  return static_cast<int>(r);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t BrownianDriver::stream_seed(std::uint64_t seed, std::uint64_t path_index,
                                          std::uint64_t attempt) {
  return splitmix64(splitmix64(splitmix64(seed) ^ path_index) ^ (attempt * 0x632be59bd9b4e019ULL));
}

BrownianDriver::BrownianDriver(std::uint64_t seed, std::uint64_t path_index, std::uint64_t attempt,
                               int m, double h, int substeps)
    : rng_(stream_seed(seed, path_index, attempt)),
      m_(m),
      substeps_(substeps),
      scale_(std::sqrt(h / substeps)) {}

Vec BrownianDriver::next() {
  Vec dw = Vec::Zero(m_);
  for (int s = 0; s < substeps_; ++s)
    for (int a = 0; a < m_; ++a) dw(a) += scale_ * normal_(rng_);
  return dw;
}

// ---------------------------------------------------------------------------

namespace {

bool is_trivial(const BundleModel& b) { return b.is_flat() && b.name() == "trivial"; }

}  // namespace

SimulationContext::SimulationContext(const Scenario& scenario, SimulationSettings settings)
    : scenario_(&scenario), settings_(settings) {
  settings_.steps();
  const ProductBundle& pb = scenario.bundle;
  if (pb.e1->base_dim() != pb.m() || pb.e2->base_dim() != pb.m())
    throw std::invalid_argument("bundle base dimension differs from the manifold's");
  if (static_cast<int>(scenario.fields.v1.size()) != pb.m())
    throw std::invalid_argument("need one V_{1,i} slot per base direction");
  e1_trivial_ = is_trivial(*pb.e1);
  e2_trivial_ = is_trivial(*pb.e2);
  fields_zero_ = scenario.fields.all_zero();
  ricci_ = pb.base->constant_ricci();
  closed_form_ = !settings_.feynman_kac || ricci_.has_value();
  base_euclidean_ = pb.base->name() == "flat-torus";
}

std::optional<Mat> SimulationContext::closed_form_M(double t) const {
  const int m = bundle().m();
  if (!settings_.feynman_kac) return Mat(Mat::Identity(m, m));
  if (ricci_) return Mat(std::exp(-0.5 * *ricci_ * t) * Mat::Identity(m, m));
  return std::nullopt;
}

PathState initial_path_state(const SimulationContext& ctx, const BundleState& z0) {
  const ProductBundle& pb = ctx.bundle();
  const int m = pb.m(), n1 = pb.n1(), n2 = pb.n2();
  if (z0.frame.base.x.size() != m || z0.frame.u1.rows() != n1 || z0.frame.u2.rows() != n2 ||
      z0.y.size() != n1)
    throw std::invalid_argument("initial state has the wrong shape for the scenario");
  PathState s;
  s.frame = z0.frame;
  s.y = z0.y;
  s.M = Mat::Identity(m, m);
  s.ito_MdW = Vec::Zero(m);
  s.W = Vec::Zero(m);
  for (int j = 0; j < m; ++j) {
    s.G1[j] = Mat::Zero(n1, n1);
    s.G2[j] = Mat::Zero(n2, n2);
    s.Yder[j] = Vec::Zero(n1);
  }
  s.max_defect = frame_defect(pb, s.frame);
  return s;
}

StageData evaluate_stage(const SimulationContext& ctx, const PathState& s) {
  const ProductBundle& pb = ctx.bundle();
  const SimulationSettings& set = ctx.settings();
  const Vec& x = s.frame.base.x;
  const Mat& u = s.frame.base.u;
  if (!pb.base->in_chart(x)) throw ChartError("stage point outside chart");
  const bool full = set.mode == SimMode::Full;

  StageData d;
  if (!ctx.base_euclidean()) d.gamma = pb.base->christoffel(x);
  if (!ctx.e1_trivial()) d.a1 = frame_connection(pb.e1->connection(x), u);
  if (!ctx.e2_trivial()) d.a2 = frame_connection(pb.e2->connection(x), u);
  if (full && !ctx.e1_trivial()) d.f1 = pb.e1->curvature(x);
  if (full && !ctx.e2_trivial()) d.f2 = pb.e2->curvature(x);
  const FrameConnection* a1 = d.a1 ? &*d.a1 : nullptr;
  const auto& fields = ctx.scenario().fields;
  if (fields.v0) d.v0 = fields.v0->jet(s.frame, s.y, a1, full);
  for (int i = 0; i < pb.m(); ++i)
    if (fields.v1[i]) d.v1[i] = fields.v1[i]->jet(s.frame, s.y, a1, full);
  if (set.mode != SimMode::Plain && !ctx.has_closed_form_M())
    d.ric = ricci_scalarized(pb.base->riemann(x), u);
  return d;
}

namespace {

// −(Σ_k ΔW_k A(u e_k)) u_l for a frame connection, zero when absent.
Mat connection_increment(const std::optional<FrameConnection>& a, const Vec& dW, const Mat& ul) {
  if (!a) return Mat::Zero(ul.rows(), ul.cols());
  Mat ax = dW(0) * (*a)[0];
  for (int k = 1; k < dW.size(); ++k) ax += dW(k) * (*a)[k];
  return -ax * ul;
}

}  // namespace

void increment_Z(const SimulationContext& ctx, const PathState& s, const StageData& d,
                 const Vec& dW, StageIncrement& out) {
  const double h = ctx.settings().h;
  const int m = ctx.bundle().m();
  const Mat& u = s.frame.base.u;
  out.frame.dx.noalias() = u * dW;
  if (ctx.base_euclidean())
    out.frame.du.setZero(u.rows(), u.cols());
  else
    out.frame.du.noalias() = -contract_christoffel(d.gamma, out.frame.dx) * u;
  out.frame.du1 = connection_increment(d.a1, dW, s.frame.u1);
  out.frame.du2 = connection_increment(d.a2, dW, s.frame.u2);
  out.dy.setZero(s.y.size());
  if (d.v0) out.dy += h * d.v0->value;
  for (int i = 0; i < m; ++i)
    if (d.v1[i]) out.dy += dW(i) * d.v1[i]->value;
}

void increment_feynman_kac(const SimulationContext& ctx, const PathState& s, const StageData& d,
                           StageIncrement& out) {
  const int m = ctx.bundle().m();
  if (ctx.has_closed_form_M()) {
    out.dM.setZero(m, m);
    return;
  }
  const double h = ctx.settings().h;
  out.dM = ctx.settings().fk_side == FkSide::Right ? Mat(-0.5 * h * s.M * d.ric)
                                                   : Mat(-0.5 * h * d.ric * s.M);
}

namespace {

// Ñ(j, k) = N^j_{t,k} under the chosen convention.
Mat n_tilde(const SimulationContext& ctx, const Mat& n) {
  return ctx.settings().nbar == NbarConvention::Row ? n : Mat(n.transpose());
}

}  // namespace

void increment_KG(const SimulationContext& ctx, const PathState& s, const StageData& d,
                  const Vec& dW, StageIncrement& out) {
  const ProductBundle& pb = ctx.bundle();
  const int m = pb.m();
  const Mat nt = n_tilde(ctx, (ctx.settings().T - s.t) * s.M);
  const Mat& u = s.frame.base.u;
  const Vec xi = u * dW;
  auto accumulate = [&](const std::optional<MatrixTwoForm>& f, const Mat& ul,
                        std::array<Mat, kMaxDim>& dg) {
    const int n = ul.rows();
    for (int j = 0; j < m; ++j) dg[j].setZero(n, n);
    if (!f) return;
    // Σ_i Ω^{(l)}_{ki} ΔWⁱ = −u_lᵀ F(u e_k, u ΔW) u_l.
    for (int k = 0; k < m; ++k) {
      const Mat omega = -ul.transpose() * contract_two_form(*f, m, u.col(k), xi) * ul;
      for (int j = 0; j < m; ++j) dg[j] += nt(j, k) * omega;
    }
  };
  accumulate(d.f1, s.frame.u1, out.dG1);
  accumulate(d.f2, s.frame.u2, out.dG2);
}

void increment_derived(const SimulationContext& ctx, const PathState& s, const StageData& d,
                       const Vec& dW, StageIncrement& out) {
  const int m = ctx.bundle().m();
  const int n1 = ctx.bundle().n1();
  for (int j = 0; j < m; ++j) out.dYder[j] = Vec::Zero(n1);
  if (ctx.fields_zero()) return;
  const double h = ctx.settings().h;
  const Mat nt = n_tilde(ctx, (ctx.settings().T - s.t) * s.M);
  const Mat mt = n_tilde(ctx, s.M);
  auto nbar = [&](const VerticalJet& jet, int j) {
    Vec acc = Vec::Zero(n1);
    for (int k = 0; k < m; ++k) acc += nt(j, k) * jet.horizontal[k];
    return acc;
  };
  for (int j = 0; j < m; ++j) {
    Vec drift = Vec::Zero(n1);
    Vec noise = Vec::Zero(n1);
    for (int i = 0; i < m; ++i) {
      if (!d.v1[i]) continue;
      const VerticalJet& v = *d.v1[i];
      drift -= mt(j, i) * v.value;
      noise += dW(i) * (v.fiber * s.Yder[j] + nbar(v, j));
    }
    if (d.v0) drift += d.v0->fiber * s.Yder[j] + nbar(*d.v0, j);
    out.dYder[j] = h * drift + noise + out.dG1[j] * s.y;
  }
}

namespace {

void add_scaled(PathState& s, double a, const StageIncrement& inc, SimMode mode, int m) {
  s.frame.base.x += a * inc.frame.dx;
  s.frame.base.u += a * inc.frame.du;
  s.frame.u1 += a * inc.frame.du1;
  s.frame.u2 += a * inc.frame.du2;
  s.y += a * inc.dy;
  if (mode == SimMode::Plain) return;
  s.M += a * inc.dM;
  if (mode != SimMode::Full) return;
  for (int j = 0; j < m; ++j) {
    s.G1[j] += a * inc.dG1[j];
    s.G2[j] += a * inc.dG2[j];
    s.Yder[j] += a * inc.dYder[j];
  }
}

StageIncrement full_increment(const SimulationContext& ctx, const PathState& s, const Vec& dW) {
  const StageData d = evaluate_stage(ctx, s);
  StageIncrement inc;
  increment_Z(ctx, s, d, dW, inc);
  const SimMode mode = ctx.settings().mode;
  if (mode == SimMode::Plain) return inc;
  increment_feynman_kac(ctx, s, d, inc);
  if (mode != SimMode::Full) return inc;
  increment_KG(ctx, s, d, dW, inc);
  increment_derived(ctx, s, d, dW, inc);
  return inc;
}

}  // namespace

void step(const SimulationContext& ctx, PathState& s, const Vec& dW) {
  if (s.rejected) return;
  const ProductBundle& pb = ctx.bundle();
  const SimulationSettings& set = ctx.settings();
  const int m = pb.m();
  const double h = set.h;
  try {
    const StageIncrement k1 = full_increment(ctx, s, dW);
    PathState pred = s;
    add_scaled(pred, 1.0, k1, set.mode, m);
    pred.t = s.t + h;
    if (ctx.has_closed_form_M() && set.mode != SimMode::Plain) pred.M = *ctx.closed_form_M(pred.t);
    const StageIncrement k2 = full_increment(ctx, pred, dW);

    const Mat m_left = s.M;
    add_scaled(s, 0.5, k1, set.mode, m);
    add_scaled(s, 0.5, k2, set.mode, m);
    s.t += h;
    if (set.mode != SimMode::Plain) {
      if (ctx.has_closed_form_M()) s.M = *ctx.closed_form_M(s.t);
      s.ito_MdW += m_left * dW;
    }
    s.W += dW;

    s.frame.base.x = pb.base->wrap(s.frame.base.x);
    if (!pb.base->in_chart(s.frame.base.x)) {
      s.rejected = true;
      return;
    }
    if (set.retract) {
      s.frame.base.u = ctx.base_euclidean()
                           ? orthogonal_retraction(s.frame.base.u)
                           : frame_retraction(*pb.base, s.frame.base.x, s.frame.base.u);
      if (!ctx.e1_trivial()) s.frame.u1 = orthogonal_retraction(s.frame.u1);
      if (!ctx.e2_trivial()) s.frame.u2 = orthogonal_retraction(s.frame.u2);
    }
    s.max_defect = std::max(s.max_defect, frame_defect(pb, s.frame));
  } catch (const ChartError&) {
    s.rejected = true;
  } catch (const std::domain_error&) {
    s.rejected = true;
  }
}

PathState simulate_attempt(const SimulationContext& ctx, const BundleState& z0, std::uint64_t seed,
                           std::uint64_t path_index, std::uint64_t attempt,
                           std::vector<PathState>* record, int record_every) {
  const SimulationSettings& set = ctx.settings();
  const int n = set.steps();
  BrownianDriver driver(seed, path_index, attempt, ctx.bundle().m(), set.h, set.substeps);
  PathState s = initial_path_state(ctx, z0);
  s.attempts = static_cast<int>(attempt);
  const std::size_t mark = record ? record->size() : 0;
  if (record) record->push_back(s);
  for (int k = 0; k < n && !s.rejected; ++k) {
    step(ctx, s, driver.next());
    if (record && !s.rejected && ((k + 1) % record_every == 0 || k + 1 == n)) record->push_back(s);
  }
  if (record && s.rejected) record->resize(mark);
  return s;
}

PathState simulate_path(const SimulationContext& ctx, const BundleState& z0, std::uint64_t seed,
                        std::uint64_t path_index, std::vector<PathState>* record,
                        int record_every) {
  const int budget = ctx.settings().max_resample;
  for (int attempt = 0; attempt <= budget; ++attempt) {
    PathState s = simulate_attempt(ctx, z0, seed, path_index, static_cast<std::uint64_t>(attempt),
                                   record, record_every);
    if (!s.rejected) return s;
  }
  std::ostringstream msg;
  msg << "path " << path_index << " (seed " << seed << ") left the chart on all " << budget + 1
      << " attempts in scenario '" << ctx.scenario().name << "'";
  throw std::runtime_error(msg.str());
}

}  // namespace bismut
