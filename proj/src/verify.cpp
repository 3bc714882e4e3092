#include "bismut/verify.hpp"

#include <cmath>
#include <stdexcept>

namespace bismut {

namespace {

bool is_trivial(const BundleModel& b) { return b.is_flat() && b.name() == "trivial"; }

MatrixForm e1_connection(const ProductBundle& pb, const Vec& x) {
  if (is_trivial(*pb.e1)) {
    MatrixForm a;
    for (int b = 0; b < pb.m(); ++b) a[b] = Mat::Zero(pb.n1(), pb.n1());
    return a;
  }
  return pb.e1->connection(x);
}

Vec field_value(const Scenario& sc, const FieldPtr& v, const BundleState& z) {
  if (!v) return Vec::Zero(sc.bundle.n1());
  const FrameConnection fc = frame_connection(e1_connection(sc.bundle, z.frame.base.x), z.frame.base.u);
  return v->jet(z.frame, z.y, &fc, false).value;
}

VerticalJet field_jet(const Scenario& sc, const FieldPtr& v, const BundleState& z) {
  const int n1 = sc.bundle.n1(), m = sc.bundle.m();
  if (!v) {
    VerticalJet j;
    j.value = Vec::Zero(n1);
    j.fiber = Mat::Zero(n1, n1);
    for (int k = 0; k < m; ++k) {
      j.horizontal[k] = Vec::Zero(n1);
      j.horizontal_fiber[k] = Mat::Zero(n1, n1);
    }
    return j;
  }
  const FrameConnection fc = frame_connection(e1_connection(sc.bundle, z.frame.base.x), z.frame.base.u);
  return v->jet(z.frame, z.y, &fc, true);
}

double max_abs(const Dyn& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

Dyn zeros(int r, int c) { return Dyn::Zero(r, c); }

// D²F(a, b): r-th entry aᵀ D²F_r b.
Dyn d2f(const ExpansionPrimitives& p, const Dyn& a, const Dyn& b) {
  Dyn out(p.n2, 1);
  for (int r = 0; r < p.n2; ++r) out(r, 0) = (a.transpose() * p.D2F[r] * b)(0, 0);
  return out;
}

// (D²F)(a) as a map on the fiber: row r is aᵀ D²F_r.
Dyn d2f_dir(const ExpansionPrimitives& p, const Dyn& a) {
  Dyn out(p.n2, p.n1);
  for (int r = 0; r < p.n2; ++r) out.row(r) = a.transpose() * p.D2F[r];
  return out;
}

// (D²V)(V): entry (a, q) = Σ_p ∂_p∂_q V_a V_p.
Dyn d2v_dir(const std::vector<Dyn>& slices, const Dyn& v) {
  const int n = static_cast<int>(slices.size());
  Dyn out(n, n);
  for (int a = 0; a < n; ++a) out.row(a) = v.transpose() * slices[a];
  return out;
}

}  // namespace

BundleState flow_horizontal(const Scenario& sc, const BundleState& z, int i, double s) {
  return {horizontal_flow(sc.bundle, z.frame, i, s), z.y};
}

BundleState flow_combined(const Scenario& sc, const BundleState& z, int i, double s) {
  const ProductBundle& pb = sc.bundle;
  const int m = pb.m();
  if (s == 0.0) return z;
  const FieldPtr& v = sc.fields.v1.at(static_cast<std::size_t>(i));
  Vec w = Vec::Zero(m);
  w(i) = 1.0;
  struct D {
    ExtendedTangent f;
    Vec y;
  };
  auto rhs = [&](const BundleState& p) {
    return D{horizontal_lift(pb, p.frame, w), field_value(sc, v, p)};
  };
  auto axpy = [](const BundleState& p, double a, const D& d) {
    BundleState q = p;
    q.frame.base.x += a * d.f.dx;
    q.frame.base.u += a * d.f.du;
    q.frame.u1 += a * d.f.du1;
    q.frame.u2 += a * d.f.du2;
    q.y += a * d.y;
    return q;
  };
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(s) / 0.005)));
  const double dt = s / steps;
  BundleState p = z;
  for (int k = 0; k < steps; ++k) {
    const D k1 = rhs(p);
    const D k2 = rhs(axpy(p, 0.5 * dt, k1));
    const D k3 = rhs(axpy(p, 0.5 * dt, k2));
    const D k4 = rhs(axpy(p, dt, k3));
    p.frame.base.x += dt / 6.0 * (k1.f.dx + 2.0 * k2.f.dx + 2.0 * k3.f.dx + k4.f.dx);
    p.frame.base.u += dt / 6.0 * (k1.f.du + 2.0 * k2.f.du + 2.0 * k3.f.du + k4.f.du);
    p.frame.u1 += dt / 6.0 * (k1.f.du1 + 2.0 * k2.f.du1 + 2.0 * k3.f.du1 + k4.f.du1);
    p.frame.u2 += dt / 6.0 * (k1.f.du2 + 2.0 * k2.f.du2 + 2.0 * k3.f.du2 + k4.f.du2);
    p.y += dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
  }
  if (!pb.base->in_chart(p.frame.base.x)) throw ChartError("flow_combined: left the chart");
  return p;
}

Dyn horizontal_derivative(const Scenario& sc, const StateFn& f, const BundleState& z, int i,
                          double step) {
  return (f(flow_horizontal(sc, z, i, step)) - f(flow_horizontal(sc, z, i, -step))) / (2.0 * step);
}

Dyn generator(const Scenario& sc, const StateFn& f, const BundleState& z, double step) {
  const int m = sc.bundle.m();
  const Dyn f0 = f(z);
  Dyn acc = Dyn::Zero(f0.rows(), f0.cols());
  for (int i = 0; i < m; ++i)
    acc += f(flow_combined(sc, z, i, step)) - 2.0 * f0 + f(flow_combined(sc, z, i, -step));
  Dyn out = 0.5 * acc / (step * step);
  if (sc.fields.v0) {
    const Vec v0 = field_value(sc, sc.fields.v0, z);
    BundleState zp = z, zm = z;
    zp.y += step * v0;
    zm.y -= step * v0;
    out += (f(zp) - f(zm)) / (2.0 * step);
  }
  return out;
}

namespace {

StateFn value_fn(const BundleMap& phi) {
  return [&phi](const BundleState& z) { return Dyn(phi.value(z.frame, z.y)); };
}

StateFn jacobian_fn(const BundleMap& phi) {
  return [&phi](const BundleState& z) { return Dyn(phi.fiber_jacobian(z.frame, z.y)); };
}

StateFn hgrad_fn(const Scenario& sc, const BundleMap& phi, double step) {
  return [&sc, &phi, step](const BundleState& z) {
    const int m = sc.bundle.m();
    Dyn g(sc.bundle.n2(), m);
    const StateFn f = value_fn(phi);
    for (int j = 0; j < m; ++j) g.col(j) = horizontal_derivative(sc, f, z, j, step);
    return g;
  };
}

}  // namespace

Vec apply_generator(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                    const VerifyOptions& opt) {
  return Vec(generator(sc, value_fn(phi), z, opt.single_step));
}

Mat apply_hgrad(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                const VerifyOptions& opt) {
  return Mat(hgrad_fn(sc, phi, opt.single_step)(z));
}

// ---------------------------------------------------------------------------

double OperatorResidual::mutated_residual(std::size_t k) const {
  return max_abs(lhs - (rhs - 2.0 * terms.at(k)));
}

double OperatorResidual::term_norm(std::size_t k) const { return max_abs(terms.at(k)); }

namespace {

Dyn flatten_frame(const ExtendedFrame& f) {
  const int m = f.base.x.size(), n1 = f.u1.rows(), n2 = f.u2.rows();
  Dyn out(m + m * m + n1 * n1 + n2 * n2, 1);
  int k = 0;
  for (int a = 0; a < m; ++a) out(k++, 0) = f.base.x(a);
  for (int c = 0; c < m; ++c)
    for (int r = 0; r < m; ++r) out(k++, 0) = f.base.u(r, c);
  for (int c = 0; c < n1; ++c)
    for (int r = 0; r < n1; ++r) out(k++, 0) = f.u1(r, c);
  for (int c = 0; c < n2; ++c)
    for (int r = 0; r < n2; ++r) out(k++, 0) = f.u2(r, c);
  return out;
}

Dyn stack_blocks(const Dyn& x, const Dyn& a0, const Dyn& a1, const Dyn& a2) {
  Dyn out(x.size() + a0.size() + a1.size() + a2.size(), 1);
  int k = 0;
  for (const Dyn* b : {&x, &a0, &a1, &a2})
    for (int c = 0; c < b->cols(); ++c)
      for (int r = 0; r < b->rows(); ++r) out(k++, 0) = (*b)(r, c);
  return out;
}

}  // namespace

OperatorResidual check_flow_commutator(const ProductBundle& pb, const ExtendedFrame& f, int j, int i,
                                       double step) {
  const int m = pb.m(), n1 = pb.n1(), n2 = pb.n2();
  if (i < 0 || j < 0 || i >= m || j >= m) throw std::out_of_range("check_flow_commutator: index");
  // compose(p, tp, q, tq): flow H_p for tp, then H_q for tq.
  auto compose = [&](int p, double tp, int q, double tq) {
    return flatten_frame(horizontal_flow(pb, horizontal_flow(pb, f, p, tp), q, tq));
  };
  auto mixed = [&](int first, int second) {
    Dyn acc;
    for (double a : {1.0, -1.0})
      for (double b : {1.0, -1.0}) {
        const Dyn v = a * b * compose(first, a * step, second, b * step);
        acc = acc.size() ? Dyn(acc + v) : v;
      }
    return Dyn(acc / (4.0 * step * step));
  };
  // H_j H_i φ = ∂_t ∂_s φ(Fl_i^s Fl_j^t z).
  const Dyn bracket = mixed(j, i) - mixed(i, j);

  int k = 0;
  const Dyn cx = bracket.block(k, 0, m, 1);
  k += m;
  const Dyn cu = Eigen::Map<const Eigen::MatrixXd>(bracket.data() + k, m, m);
  k += m * m;
  const Dyn cu1 = Eigen::Map<const Eigen::MatrixXd>(bracket.data() + k, n1, n1);
  k += n1 * n1;
  const Dyn cu2 = Eigen::Map<const Eigen::MatrixXd>(bracket.data() + k, n2, n2);

  const Dyn a0 = Dyn(f.base.u).inverse() * cu;
  const Dyn a1 = Dyn(f.u1).inverse() * cu1;
  const Dyn a2 = Dyn(f.u2).inverse() * cu2;

  OperatorResidual r;
  r.lhs = stack_blocks(cx, a0, a1, a2);
  const Dyn zx = zeros(m, 1), z0 = zeros(m, m), z1 = zeros(n1, n1), z2 = zeros(n2, n2);
  r.term_names = {"omega0", "omega1", "omega2"};
  r.terms = {stack_blocks(zx, Dyn(bundle_curvature_scalarized(pb, f, 0, j, i)), z1, z2),
             stack_blocks(zx, z0, Dyn(bundle_curvature_scalarized(pb, f, 1, j, i)), z2),
             stack_blocks(zx, z0, z1, Dyn(bundle_curvature_scalarized(pb, f, 2, j, i)))};
  r.rhs = r.terms[0] + r.terms[1] + r.terms[2];
  r.residual = max_abs(r.lhs - r.rhs);
  r.variants = {{"all_negated", max_abs(r.lhs + r.rhs)}};
  return r;
}

// ---------------------------------------------------------------------------

ExpansionPrimitives expansion_primitives(const Scenario& sc, const BundleMap& phi,
                                         const BundleState& z, const VerifyOptions& opt) {
  const ProductBundle& pb = sc.bundle;
  const int m = pb.m(), n1 = pb.n1(), n2 = pb.n2();
  const double h = opt.single_step;
  ExpansionPrimitives p;
  p.m = m;
  p.n1 = n1;
  p.n2 = n2;
  p.y = z.y;
  p.F = phi.value(z.frame, z.y);
  p.DF = phi.fiber_jacobian(z.frame, z.y);
  const Tensor3<double> hess = phi.fiber_hessian(z.frame, z.y);
  for (int r = 0; r < n2; ++r) p.D2F.push_back(hess.slice[r]);

  const StateFn fval = value_fn(phi), fjac = jacobian_fn(phi);
  for (int i = 0; i < m; ++i) {
    p.HF.push_back(horizontal_derivative(sc, fval, z, i, h));
    p.DHF.push_back(horizontal_derivative(sc, fjac, z, i, h));
  }

  p.om1.assign(m, std::vector<Dyn>(m));
  p.om2.assign(m, std::vector<Dyn>(m));
  p.hom1.assign(m, std::vector<Dyn>(m));
  p.hom2.assign(m, std::vector<Dyn>(m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      p.om1[a][b] = bundle_curvature_scalarized(pb, z.frame, 1, a, b);
      p.om2[a][b] = bundle_curvature_scalarized(pb, z.frame, 2, a, b);
      // hom[i][k] = H_i Ω_{ki}, stored with a = i, b = k.
      p.hom1[a][b] = horizontal_curvature_derivative(pb, z.frame, 1, a, b, a, h);
      p.hom2[a][b] = horizontal_curvature_derivative(pb, z.frame, 2, a, b, a, h);
    }

  p.HV1.assign(m, std::vector<Dyn>(m));
  p.DHV1.assign(m, std::vector<Dyn>(m));
  p.HHV1.assign(m, std::vector<Dyn>(m));
  p.D2V1.assign(m, {});
  for (int i = 0; i < m; ++i) {
    const FieldPtr& v = sc.fields.v1[i];
    const VerticalJet jet = field_jet(sc, v, z);
    p.V1.push_back(jet.value);
    p.DV1.push_back(jet.fiber);
    for (int j = 0; j < m; ++j) {
      p.HV1[j][i] = jet.horizontal[j];
      p.DHV1[j][i] = jet.horizontal_fiber[j];
    }
    if (v) {
      const Tensor3<double> d2 = v->fiber_hessian(z.frame, z.y);
      for (int a = 0; a < n1; ++a) p.D2V1[i].push_back(d2.slice[a]);
    } else {
      for (int a = 0; a < n1; ++a) p.D2V1[i].push_back(zeros(n1, n1));
    }
    for (int k = 0; k < m; ++k) {
      const StateFn hk = [&sc, &v, k](const BundleState& w) {
        return Dyn(field_jet(sc, v, w).horizontal[k]);
      };
      p.HHV1[i][k] = v ? horizontal_derivative(sc, hk, z, i, h) : zeros(n1, 1);
    }
  }
  const VerticalJet j0 = field_jet(sc, sc.fields.v0, z);
  p.V0 = j0.value;
  p.DV0 = j0.fiber;
  for (int j = 0; j < m; ++j) p.HV0.push_back(j0.horizontal[j]);
  p.ric = ricci_scalarized(*pb.base, z.frame.base);
  return p;
}

std::vector<std::pair<std::string, Dyn>> expansion_terms(const ExpansionPrimitives& p) {
  const int m = p.m, n2 = p.n2;
  Dyn grad(n2, m);
  for (int k = 0; k < m; ++k) grad.col(k) = p.HF[k];
  Dyn ric = -0.5 * grad * p.ric;
  Dyn t1 = zeros(n2, m), t2 = zeros(n2, m), t3 = zeros(n2, m), t4 = zeros(n2, m),
      t4p = zeros(n2, m), t5 = zeros(n2, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const Dyn om1y = p.om1[j][i] * p.y;
      // (1)
      t1.col(j) += -p.om2[j][i] * p.HF[i] + p.DHF[i] * om1y;
      t1.col(j) += 0.5 * (-p.hom2[i][j] * p.F + p.DF * (p.hom1[i][j] * p.y));
      // (2)
      t2.col(j) += d2f(p, p.HV1[j][i], p.V1[i]);
      t2.col(j) += 0.5 * p.DF * (p.DHV1[j][i] * p.V1[i] + p.DV1[i] * p.HV1[j][i]);
      // (3)
      t3.col(j) += p.DHF[i] * p.HV1[j][i] + 0.5 * p.DF * p.HHV1[i][j];
      // (4)
      t4.col(j) += d2f(p, p.V1[i], om1y) - p.om2[j][i] * p.DF * p.V1[i] +
                   0.5 * p.DF * (p.DV1[i] * om1y);
      t4p.col(j) += 0.5 * p.DF * (p.om1[j][i] * p.V1[i]);
    }
    // (5)
    t5.col(j) = p.DF * p.HV0[j];
  }
  return {{"ric", ric}, {"t1", t1}, {"t2", t2}, {"t3", t3},
          {"t4", t4},   {"t4_product", t4p}, {"t5", t5}};
}

namespace {

OperatorResidual assemble_expansion(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                                    const ExpansionPrimitives& p, const VerifyOptions& opt) {
  const int m = sc.bundle.m();
  const double h = opt.nested_step;
  const StateFn fval = value_fn(phi);
  const StateFn lphi = [&sc, fval, h](const BundleState& w) { return generator(sc, fval, w, h); };
  OperatorResidual r;
  r.lhs.resize(sc.bundle.n2(), m);
  for (int j = 0; j < m; ++j) r.lhs.col(j) = horizontal_derivative(sc, lphi, z, j, h);

  r.term_names.push_back("generator_of_gradient");
  r.terms.push_back(generator(sc, hgrad_fn(sc, phi, h), z, h));
  std::size_t product_index = 0;
  for (auto& [name, value] : expansion_terms(p)) {
    if (name == "t4_product") product_index = r.terms.size();
    r.term_names.push_back(name);
    r.terms.push_back(value);
  }
  r.rhs = zeros(sc.bundle.n2(), m);
  for (const Dyn& t : r.terms) r.rhs += t;
  r.residual = max_abs(r.lhs - r.rhs);
  r.variants = {{"without_t4_product", max_abs(r.lhs - (r.rhs - r.terms[product_index]))}};
  return r;
}

OperatorResidual assemble_second(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                                 const ExpansionPrimitives& p, const VerifyOptions& opt) {
  const int m = p.m, n1 = p.n1, n2 = p.n2;
  const double h = opt.nested_step;
  const StateFn fval = value_fn(phi);
  OperatorResidual r;
  r.lhs.resize(n2, n1);
  for (int q = 0; q < n1; ++q) {
    BundleState zp = z, zm = z;
    zp.y(q) += h;
    zm.y(q) -= h;
    r.lhs.col(q) = (generator(sc, fval, zp, h) - generator(sc, fval, zm, h)) / (2.0 * h);
  }
  Dyn a4 = zeros(n2, n1);
  Dyn inner = zeros(n1, n1);
  for (int i = 0; i < m; ++i) {
    a4 += (d2f_dir(p, p.V1[i]) + p.DHF[i]) * p.DV1[i];
    inner += 0.5 * (d2v_dir(p.D2V1[i], p.V1[i]) + p.DV1[i] * p.DV1[i] + p.DHV1[i][i]);
  }
  const Dyn a5 = p.DF * (inner + p.DV0);
  r.term_names = {"generator_of_DF", "A4", "A5"};
  r.terms = {generator(sc, jacobian_fn(phi), z, h), a4, a5};
  r.rhs = r.terms[0] + r.terms[1] + r.terms[2];
  r.residual = max_abs(r.lhs - r.rhs);
  r.variants = {
      {"dv0_per_direction", max_abs(r.lhs - (r.rhs + static_cast<double>(m - 1) * p.DF * p.DV0))}};
  return r;
}

}  // namespace

OperatorResidual check_expansion(const Scenario& sc, const BundleMap& phi, const BundleState& z,
                                 const VerifyOptions& opt) {
  return assemble_expansion(sc, phi, z, expansion_primitives(sc, phi, z, opt), opt);
}

OperatorResidual check_second_commutation(const Scenario& sc, const BundleMap& phi,
                                          const BundleState& z, const VerifyOptions& opt) {
  return assemble_second(sc, phi, z, expansion_primitives(sc, phi, z, opt), opt);
}

OperatorResidual check_regrouping(const ExpansionPrimitives& p, const Dyn& N, const Dyn& M,
                                  NbarChoice choice, bool with_product_term) {
  const int m = p.m, n2 = p.n2, n1 = p.n1;
  auto pick = [choice](const Dyn& a, int j, int k) { return choice == NbarChoice::Row ? a(j, k) : a(k, j); };

  Dyn phi = zeros(n2, m);
  for (auto& [name, value] : expansion_terms(p)) {
    if (name == "ric") continue;
    if (name == "t4_product" && !with_product_term) continue;
    phi += value;
  }
  OperatorResidual r;
  // N acts on the direction index: column j of NΦ is Σ_k N_{jk} Φ_k.
  r.lhs = phi * N.transpose();
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) r.lhs.col(j) -= M(j, i) * p.DF * p.V1[i];

  Dyn a1 = zeros(n2, m), a2 = zeros(n2, m), a3 = zeros(n2, m);
  for (int j = 0; j < m; ++j) {
    Dyn b = zeros(n1, 1);
    Dyn nv0 = zeros(n1, 1);
    Dyn mv = zeros(n1, 1);
    for (int k = 0; k < m; ++k) nv0 += pick(N, j, k) * p.HV0[k];
    for (int i = 0; i < m; ++i) {
      Dyn k1 = zeros(n1, n1), k2 = zeros(n2, n2), hk1 = zeros(n1, n1), hk2 = zeros(n2, n2);
      Dyn nv = zeros(n1, 1), dnv = zeros(n1, n1), hnv = zeros(n1, 1);
      for (int k = 0; k < m; ++k) {
        const double w = pick(N, j, k);
        k1 += w * p.om1[k][i];
        k2 += w * p.om2[k][i];
        hk1 += w * p.hom1[i][k];
        hk2 += w * p.hom2[i][k];
        nv += w * p.HV1[k][i];
        dnv += w * p.DHV1[k][i];
        hnv += w * p.HHV1[i][k];
      }
      a1.col(j) += k2 * p.HF[i] + 0.5 * hk2 * p.F + k2 * p.DF * p.V1[i];
      a2.col(j) += (p.DHF[i] + d2f_dir(p, p.V1[i])) * (nv + k1 * p.y);
      b += 0.5 * (hk1 * p.y + dnv * p.V1[i] + p.DV1[i] * nv + p.DV1[i] * (k1 * p.y) + hnv);
      if (with_product_term) b += 0.5 * k1 * p.V1[i];
      mv += p.V1[i] * pick(M, j, i);
    }
    a3.col(j) = p.DF * (b + nv0 - mv);
  }
  r.term_names = {"minus_A1", "A2", "A3"};
  r.terms = {-a1, a2, a3};
  r.rhs = -a1 + a2 + a3;
  r.residual = max_abs(r.lhs - r.rhs);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<CommutatorRow> run_commutator_suite(const Scenario& sc, int states, std::uint64_t seed,
                                                double tol) {
  std::mt19937_64 rng(seed);
  const int m = sc.bundle.m();
  std::vector<CommutatorRow> rows;
  for (int s = 0; s < states; ++s) {
    const BundleState z = sc.sample_state(rng);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) {
        if (i == j) continue;
        const OperatorResidual r = check_flow_commutator(sc.bundle, z.frame, j, i);
        CommutatorRow row;
        row.state = s;
        row.j = j;
        row.i = i;
        row.residual = r.residual;
        row.mutated = r.variants[0].second;
        row.omega_norm = max_abs(r.rhs);
        row.pass = r.residual <= tol;
        rows.push_back(row);
      }
  }
  return rows;
}

std::vector<ExpansionRow> run_expansion_suite(const Scenario& sc, int states, std::uint64_t seed,
                                              double tol, double regroup_tol,
                                              const VerifyOptions& opt) {
  std::mt19937_64 rng(seed);
  const int m = sc.bundle.m();
  std::vector<ExpansionRow> rows;
  for (int s = 0; s < states; ++s) {
    const BundleState z = sc.sample_state(rng);
    const MapPtr phi = random_test_function(sc, rng, true);
    const ExpansionPrimitives p = expansion_primitives(sc, *phi, z, opt);
    const OperatorResidual e = assemble_expansion(sc, *phi, z, p, opt);
    const OperatorResidual c = assemble_second(sc, *phi, z, p, opt);
    const Dyn N = random_matrix(rng, m, m, 1.0);
    const Dyn M = random_matrix(rng, m, m, 1.0);
    ExpansionRow row;
    row.state = s;
    for (std::size_t k = 0; k < e.terms.size(); ++k) {
      row.term_norms.emplace_back(e.term_names[k], e.term_norm(k));
      row.mutated.emplace_back(e.term_names[k], e.mutated_residual(k));
    }
    for (std::size_t k = 1; k < c.terms.size(); ++k) {
      row.term_norms.emplace_back(c.term_names[k], c.term_norm(k));
      row.mutated.emplace_back(c.term_names[k], c.mutated_residual(k));
    }
    row.lhs_norm = max_abs(e.lhs);
    row.rhs_norm = max_abs(e.rhs);
    row.residual = e.residual;
    row.residual_without_product = e.variants[0].second;
    row.second_residual = c.residual;
    row.second_residual_dv0_per_direction = c.variants[0].second;
    row.regroup_row = check_regrouping(p, N, M, NbarChoice::Row, true).residual;
    row.regroup_col = check_regrouping(p, N, M, NbarChoice::Col, true).residual;
    row.pass = row.residual <= tol && row.second_residual <= tol && row.regroup_row <= regroup_tol;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bismut
