// Acceptance suite: one PASS/FAIL line per criterion, informational lines
// prefixed with "  ". `acceptance 4 7` runs only criteria 4 and 7.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bismut/estimator.hpp"
#include "bismut/report_io.hpp"
#include "bismut/verify.hpp"

using namespace bismut;

namespace {

double g_max_defect = 0.0;  // over every estimator run below

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 5) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::string fmt(const Mat& a, int prec = 5) {
  std::ostringstream os;
  os.precision(prec);
  os << '[';
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) os << (r + c ? ", " : "") << a(r, c);
  os << ']';
  return os.str();
}

void info(const std::string& s) { std::cout << "  " << s << std::endl; }

EstimatorOptions options(std::size_t n, double T, std::uint64_t seed, double h = 1e-3) {
  EstimatorOptions o;
  o.n_paths = n;
  o.seed = seed;
  o.sim.T = T;
  o.sim.h = h;
  return o;
}

EstimateReport track(EstimateReport r) {
  g_max_defect = std::max(g_max_defect, r.max_frame_defect);
  info(r.kind + " " + r.scenario + ": " + fmt(r.estimate) + " stderr " + fmt(r.stderr_) + ", " +
       std::to_string(r.n_paths) + " paths, " + std::to_string(r.n_rejected) + " rejected, " +
       fmt(r.wall_time_s, 4) + " s");
  return r;
}

bool within(const EstimateReport& r, const Mat& exact, double k) {
  return ((r.estimate - exact).array().abs() <= k * r.stderr_.array()).all();
}

EstimateReport c1_report;  // reused by the n^{-1/2} study

Outcome criterion1() {
  const Scenario sc = make_scenario("flat-classical");
  c1_report = track(estimate_gradient_classical(sc, sc.start, options(100000, 1.0, 101)));
  Mat exact(1, 2);
  exact << -std::exp(-0.5), 0.0;
  const bool ok_value = within(c1_report, exact, 3.0);
  const bool ok_se = c1_report.stderr_.maxCoeff() <= 0.01;
  const bool ok_time = c1_report.wall_time_s <= 120.0;
  return {ok_value && ok_se && ok_time,
          "flat classical Bismut: " + fmt(c1_report.estimate) + " vs " + fmt(exact) + ", z " +
              fmt(compare(c1_report, exact).z) + ", stderr " + fmt(c1_report.stderr_.maxCoeff()) +
              " <= 0.01, runtime " + fmt(c1_report.wall_time_s, 4) + " s <= 120 s"};
}

Outcome criterion2() {
  const Scenario sc = make_scenario("sphere-classical");
  const EstimateReport r = track(estimate_gradient_classical(sc, sc.start, options(100000, 1.0, 102)));
  const double exact = -std::exp(-1.0);
  const double z = (r.estimate(0, 0) - exact) / r.stderr_(0, 0);
  EstimatorOptions off = options(20000, 1.0, 103);
  off.sim.feynman_kac = false;
  const EstimateReport control = track(estimate_gradient_classical(sc, sc.start, off));
  const double zc = (control.estimate(0, 0) - exact) / control.stderr_(0, 0);
  const double rate = double(r.n_rejected) / double(r.n_paths + r.n_rejected);
  info("chart rejections " + fmt(100.0 * rate, 3) + "% of attempts");
  return {std::abs(z) <= 3.0 && std::abs(zc) > 6.0,
          "curved classical Bismut: d_theta component " + fmt(r.estimate(0, 0)) + " vs " +
              fmt(exact) + " (z " + fmt(z, 3) + "); without M_t " + fmt(control.estimate(0, 0)) +
              " (z " + fmt(zc, 3) + ", needs |z| > 6)"};
}

Outcome criterion3() {
  const Scenario sc = make_scenario("flat-classical");
  const EstimatorOptions o = options(10000, 1.0, 104);
  const EstimateReport b = track(estimate_gradient_bundle(sc, sc.start, o));
  const EstimateReport c = track(estimate_gradient_classical(sc, sc.start, o));
  const bool same = (b.estimate.array() == c.estimate.array()).all() &&
                    (b.stderr_.array() == c.stderr_.array()).all();
  const double diff = (b.estimate - c.estimate).cwiseAbs().maxCoeff();
  return {same, "reduction identity: bundle " + fmt(b.estimate, 17) + " classical " +
                    fmt(c.estimate, 17) + ", max difference " + fmt(diff)};
}

Outcome criterion4() {
  const Scenario sc = make_scenario("flat-vector");
  const EstimateReport b = track(estimate_gradient_bundle(sc, sc.start, options(100000, 1.0, 105)));
  EstimatorOptions fo = options(10000, 1.0, 106);
  fo.eps = 1e-3;
  const EstimateReport fd = track(estimate_gradient_fd(sc, sc.start, fo));
  const Comparison cmp = compare(b, fd);
  // The bound applies to the 10^5-path estimator; the oracle time is reported only.
  return {cmp.max_abs_z <= 4.0 && b.wall_time_s <= 300.0,
          "Euclidean vector bundle: z " + fmt(cmp.z, 3) + " (" + to_string(cmp.verdict) +
              "), estimator runtime " + fmt(b.wall_time_s, 4) + " s <= 300 s (oracle " +
              fmt(fd.wall_time_s, 4) + " s)"};
}

Outcome criterion5() {
  const Scenario sc = make_scenario("sphere-tm");
  EstimatorOptions fo = options(50000, 0.5, 108);
  fo.eps = 1e-3;
  const EstimateReport fd = track(estimate_gradient_fd(sc, sc.start, fo));
  std::string detail = "curved vector bundle:";
  bool any = false;
  for (const NbarConvention nb : {NbarConvention::Row, NbarConvention::Col}) {
    EstimatorOptions o = options(200000, 0.5, 107);
    o.sim.nbar = nb;
    const EstimateReport b = track(estimate_gradient_bundle(sc, sc.start, o));
    for (const auto& t : b.terms) info("  term " + t.name + " " + fmt(t.mean) + " stderr " + fmt(t.stderr_));
    const Comparison cmp = compare(b, fd);
    const std::string name = nb == NbarConvention::Row ? "row" : "col";
    info("nbar=" + name + " z-table " + fmt(cmp.z, 4) + " " + to_string(cmp.verdict));
    detail += " nbar=" + name + " max|z| " + fmt(cmp.max_abs_z, 3) + ";";
    any = any || cmp.max_abs_z <= 4.0;
  }
  return {any, detail + (any ? " at least one convention within |z| <= 4"
                             : " both conventions fail (reported as a finding, non-blocking)")};
}

Outcome criterion6() {
  bool ok = true;
  std::string detail = "commutator identities:";
  for (const std::string name : {"flat-classical", "sphere-classical", "sphere-tm"}) {
    const Scenario sc = make_scenario(name);
    const auto rows = run_commutator_suite(sc, 100, 201);
    double worst = 0.0, weakest = 1e300;
    for (const auto& r : rows) {
      worst = std::max(worst, r.residual);
      if (r.omega_norm > 1e-8) weakest = std::min(weakest, r.mutated);
    }
    const bool curved = weakest < 1e300;
    const bool pass = worst <= 5e-4 && (!curved || weakest >= 10 * 5e-4);
    ok = ok && pass;
    detail += " " + name + " worst " + fmt(worst, 3) +
              (curved ? " (negated omega " + fmt(weakest, 3) + ")" : " (omega = 0)") + ";";
  }
  return {ok, detail};
}

Outcome criterion7() {
  bool ok = true;
  std::string detail = "expansion identities:";
  for (const std::string name : {"flat-classical", "flat-vector", "sphere-tm"}) {
    const Scenario sc = make_scenario(name);
    const auto rows = run_expansion_suite(sc, 100, 202);
    double worst = 0.0, worst2 = 0.0, regroup = 0.0, regroup_col = 0.0;
    double min_without = 1e300, min_dv0 = 1e300, weakest_mutation = 1e300;
    for (const auto& r : rows) {
      worst = std::max(worst, r.residual);
      worst2 = std::max(worst2, r.second_residual);
      regroup = std::max(regroup, r.regroup_row);
      regroup_col = std::max(regroup_col, r.regroup_col);
      min_without = std::min(min_without, r.residual_without_product);
      min_dv0 = std::min(min_dv0, r.second_residual_dv0_per_direction);
      for (std::size_t k = 0; k < r.mutated.size(); ++k)
        if (r.term_norms[k].second > 1e-2) weakest_mutation = std::min(weakest_mutation, r.mutated[k].second);
    }
    const bool pass = worst <= 1e-3 && worst2 <= 1e-3 && regroup <= 1e-10;
    ok = ok && pass;
    info(name + ": expansion " + fmt(worst, 3) + ", second commutation " + fmt(worst2, 3) +
         ", regrouping row " + fmt(regroup, 3) + " col " + fmt(regroup_col, 3) +
         ", smallest residual without the product term " + fmt(min_without, 3) +
         ", with DV0 per direction " + fmt(min_dv0, 3) + ", weakest sign mutation " +
         fmt(weakest_mutation, 3));
    detail += " " + name + " " + fmt(worst, 2) + "/" + fmt(worst2, 2) + "/" + fmt(regroup, 2) + ";";
  }
  return {ok, detail + " (expansion/second/regrouping)"};
}

/// Slope of log y against log x by least squares.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int k = 0; k < n; ++k) {
    mx += std::log(x[k]) / n;
    my += std::log(y[k]) / n;
  }
  double sxy = 0, sxx = 0;
  for (int k = 0; k < n; ++k) {
    sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
    sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
  }
  return sxy / sxx;
}

// Weak error of E F(Z_T) in scenario (b), every step size driven by the same
// Brownian path through substeps of the finest one.
double weak_order_slope() {
  const Scenario sc = make_scenario("flat-vector");
  const double h_ref = 1.25e-3;
  const std::vector<int> coarsen = {32, 16, 8};
  const std::size_t n = 20000;
  std::vector<CompensatedSum> diff(coarsen.size()), diff2(coarsen.size());
  auto context = [&](int k) {
    SimulationSettings s;
    s.T = 1.0;
    s.h = h_ref * k;
    s.substeps = k;
    s.mode = SimMode::Plain;
    return SimulationContext(sc, s);
  };
  const SimulationContext ref = context(1);
  std::vector<SimulationContext> ctx;
  for (int k : coarsen) ctx.push_back(context(k));
  for (std::size_t p = 0; p < n; ++p) {
    const PathState r = simulate_attempt(ref, sc.start, 301, p, 0);
    for (std::size_t c = 0; c < coarsen.size(); ++c) {
      const PathState s = simulate_attempt(ctx[c], sc.start, 301, p, 0);
      g_max_defect = std::max(g_max_defect, std::max(r.max_defect, s.max_defect));
      const double d = sc.map->value(s.frame, s.y)(0) - sc.map->value(r.frame, r.y)(0);
      diff[c].add(d);
      diff2[c].add(d * d);
    }
  }
  std::vector<double> hs, errs;
  for (std::size_t c = 0; c < coarsen.size(); ++c) {
    const double mean = diff[c].value() / n;
    const double se = std::sqrt((diff2[c].value() / n - mean * mean) / n);
    info("h = " + fmt(h_ref * coarsen[c]) + ": bias against h = " + fmt(h_ref) + " is " + fmt(mean) +
         " +- " + fmt(se));
    hs.push_back(h_ref * coarsen[c]);
    errs.push_back(std::abs(mean));
  }
  return slope(hs, errs);
}

Outcome criterion8(bool ran_estimators) {
  const double order = weak_order_slope();

  const Scenario sc = make_scenario("sphere-tm");
  EstimatorOptions o = options(2000, 0.5, 109);
  const EstimateReport one = track(estimate_gradient_bundle(sc, sc.start, o));
  o.workers = 4;
  const EstimateReport four = track(estimate_gradient_bundle(sc, sc.start, o));
  json a = to_json(one), b = to_json(four);
  a.erase("wall_time_s");
  b.erase("wall_time_s");
  const bool deterministic = a.dump() == b.dump();

  const Scenario flat = make_scenario("flat-classical");
  std::vector<double> ns, ses;
  for (std::size_t n : {1000, 10000}) {
    const EstimateReport r = track(estimate_gradient_classical(flat, flat.start, options(n, 1.0, 110)));
    ns.push_back(double(n));
    ses.push_back(r.stderr_(0, 0));
  }
  if (c1_report.n_paths == 0) c1_report = track(estimate_gradient_classical(flat, flat.start, options(100000, 1.0, 101)));
  ns.push_back(double(c1_report.n_paths));
  ses.push_back(c1_report.stderr_(0, 0));
  const double se_slope = slope(ns, ses);

  const bool pass = g_max_defect <= 1e-10 && order >= 0.9 && deterministic && se_slope >= -0.55 &&
                    se_slope <= -0.45;
  return {pass, "numerical hygiene: max frame defect " + fmt(g_max_defect, 3) +
                    (ran_estimators ? " over all runs" : " over the runs of this criterion") +
                    ", weak-order slope " + fmt(order, 3) + " >= 0.9, workers 1 vs 4 " +
                    (deterministic ? "bit-identical" : "DIFFER") + ", stderr slope " +
                    fmt(se_slope, 3) + " in [-0.55, -0.45]"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
  auto wanted = [&](int c) { return only.empty() || only.count(c); };

  int blocking_failures = 0;
  auto report = [&](int c, const Outcome& o, bool blocking) {
    std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
    if (!o.pass && blocking) ++blocking_failures;
  };
  using Fn = Outcome (*)();
  const std::vector<std::pair<int, Fn>> criteria = {{1, criterion1}, {2, criterion2}, {3, criterion3},
                                                    {4, criterion4}, {5, criterion5}, {6, criterion6},
                                                    {7, criterion7}};
  for (const auto& [c, fn] : criteria) {
    if (!wanted(c)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    const Outcome o = fn();
    report(c, o, c != 5);
    info("criterion " + std::to_string(c) + " took " +
         fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4) + " s");
  }
  if (wanted(8)) report(8, criterion8(only.empty()), true);
  return blocking_failures == 0 ? 0 : 1;
}
