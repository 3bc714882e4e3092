#include "bismut/estimator.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace bismut {

void CompensatedSum::add(double v) {
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v))
    comp_ += (sum_ - t) + v;
  else
    comp_ += (v - t) + sum_;
  sum_ = t;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  constexpr std::size_t kChunk = 64;
  auto worker = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

using Clock = std::chrono::steady_clock;

// Per-path samples, one row of `width` doubles per path index.
struct SampleTable {
  std::size_t n = 0;
  std::size_t width = 0;
  std::vector<double> data;
  std::vector<int> attempts;
  std::vector<double> defect;

  SampleTable(std::size_t n_, std::size_t w) : n(n_), width(w), data(n_ * w), attempts(n_), defect(n_) {}
  double* row(std::size_t i) { return data.data() + i * width; }

  // Column statistics reduced in index order, so the result does not depend
  // on how paths were scheduled.
  void column_stats(std::size_t c, double& mean, double& se) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(data[i * width + c]);
    mean = s.value() / static_cast<double>(n);
    if (n < 2) {
      se = 0.0;
      return;
    }
    CompensatedSum v;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = data[i * width + c] - mean;
      v.add(d * d);
    }
    se = std::sqrt(v.value() / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
  }

  void block_stats(std::size_t offset, int rows, int cols, Mat& mean, Mat& se) const {
    mean.resize(rows, cols);
    se.resize(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int r = 0; r < rows; ++r)
        column_stats(offset + static_cast<std::size_t>(r + rows * j), mean(r, j), se(r, j));
  }

  void fill_common(EstimateReport& rep, std::uint64_t seed) const {
    rep.n_paths = n;
    rep.seed = seed;
    rep.n_rejected = 0;
    rep.max_frame_defect = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rep.n_rejected += static_cast<std::size_t>(attempts[i]);
      rep.max_frame_defect = std::max(rep.max_frame_defect, defect[i]);
    }
  }
};

void store(double* out, const Mat& a) {
  for (int j = 0; j < a.cols(); ++j)
    for (int r = 0; r < a.rows(); ++r) out[r + a.rows() * j] = a(r, j);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_options(const EstimatorOptions& opt) {
  if (opt.n_paths < 1) throw std::invalid_argument("n_paths must be >= 1");
  opt.sim.steps();
}

SimulationSettings with_mode(const EstimatorOptions& opt, SimMode mode) {
  SimulationSettings s = opt.sim;
  s.mode = mode;
  return s;
}

// f(x_T) (∫ M dW)_j / T; shared by the classical and bundle estimators so the
// two agree exactly in the reduction case.
Mat ito_term(const Vec& f, const Vec& ito, double T) {
  Mat out(f.size(), ito.size());
  for (int j = 0; j < ito.size(); ++j)
    for (int r = 0; r < f.size(); ++r) out(r, j) = f(r) * ito(j) / T;
  return out;
}

}  // namespace

EstimateReport estimate_semigroup(const Scenario& sc, const BundleState& z0,
                                  const EstimatorOptions& opt) {
  check_options(opt);
  const auto t0 = Clock::now();
  const SimulationContext ctx(sc, with_mode(opt, SimMode::Plain));
  const int n2 = sc.bundle.n2();
  SampleTable table(opt.n_paths, static_cast<std::size_t>(n2));
  parallel_for(opt.n_paths, opt.workers, [&](std::size_t i) {
    const PathState s = simulate_path(ctx, z0, opt.seed, i);
    store(table.row(i), sc.map->value(s.frame, s.y));
    table.attempts[i] = s.attempts;
    table.defect[i] = s.max_defect;
  });
  EstimateReport rep;
  rep.kind = "semigroup";
  rep.scenario = sc.name;
  table.block_stats(0, n2, 1, rep.estimate, rep.stderr_);
  table.fill_common(rep, opt.seed);
  rep.wall_time_s = seconds_since(t0);
  return rep;
}

EstimateReport estimate_gradient_classical(const Scenario& sc, const BundleState& z0,
                                           const EstimatorOptions& opt) {
  check_options(opt);
  const ProductBundle& pb = sc.bundle;
  if (pb.n1() != 1 || pb.n2() != 1 || pb.e1->name() != "trivial" || pb.e2->name() != "trivial")
    throw std::invalid_argument("classical estimator needs trivial line bundles");
  const auto t0 = Clock::now();
  const SimulationContext ctx(sc, with_mode(opt, SimMode::Classical));
  const int m = pb.m();
  const double T = opt.sim.T;
  SampleTable table(opt.n_paths, static_cast<std::size_t>(m));
  parallel_for(opt.n_paths, opt.workers, [&](std::size_t i) {
    const PathState s = simulate_path(ctx, z0, opt.seed, i);
    store(table.row(i), ito_term(sc.map->value(s.frame, s.y), s.ito_MdW, T));
    table.attempts[i] = s.attempts;
    table.defect[i] = s.max_defect;
  });
  EstimateReport rep;
  rep.kind = "classical";
  rep.scenario = sc.name;
  table.block_stats(0, 1, m, rep.estimate, rep.stderr_);
  rep.terms.push_back({"ito", rep.estimate, rep.stderr_});
  table.fill_common(rep, opt.seed);
  rep.wall_time_s = seconds_since(t0);
  return rep;
}

EstimateReport estimate_gradient_bundle(const Scenario& sc, const BundleState& z0,
                                        const EstimatorOptions& opt) {
  check_options(opt);
  const auto t0 = Clock::now();
  const SimulationContext ctx(sc, with_mode(opt, SimMode::Full));
  const int m = sc.bundle.m(), n2 = sc.bundle.n2();
  const std::size_t block = static_cast<std::size_t>(n2 * m);
  const double T = opt.sim.T;
  SampleTable table(opt.n_paths, 4 * block);
  parallel_for(opt.n_paths, opt.workers, [&](std::size_t i) {
    const PathState s = simulate_path(ctx, z0, opt.seed, i);
    const Vec f = sc.map->value(s.frame, s.y);
    const Mat t1 = ito_term(f, s.ito_MdW, T);
    Mat t2(n2, m), t3(n2, m);
    Mat df;
    if (!ctx.fields_zero()) df = sc.map->fiber_jacobian(s.frame, s.y);
    for (int j = 0; j < m; ++j) {
      t2.col(j) = -(s.G2[j] * f) / T;
      t3.col(j) = ctx.fields_zero() ? Vec(Vec::Zero(n2)) : Vec(df * s.Yder[j] / T);
    }
    double* row = table.row(i);
    store(row, t1);
    store(row + block, t2);
    store(row + 2 * block, t3);
    store(row + 3 * block, t1 + t2 + t3);
    table.attempts[i] = s.attempts;
    table.defect[i] = s.max_defect;
  });
  EstimateReport rep;
  rep.kind = "bundle";
  rep.scenario = sc.name;
  const char* names[3] = {"ito", "curvature", "derived"};
  for (int k = 0; k < 3; ++k) {
    TermEstimate t;
    t.name = names[k];
    table.block_stats(static_cast<std::size_t>(k) * block, n2, m, t.mean, t.stderr_);
    rep.terms.push_back(t);
  }
  Mat unused;
  table.block_stats(3 * block, n2, m, unused, rep.stderr_);
  rep.estimate = rep.terms[0].mean + rep.terms[1].mean + rep.terms[2].mean;
  table.fill_common(rep, opt.seed);
  rep.wall_time_s = seconds_since(t0);
  return rep;
}

EstimateReport estimate_gradient_fd(const Scenario& sc, const BundleState& z0,
                                    const EstimatorOptions& opt) {
  check_options(opt);
  if (!(opt.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const auto t0 = Clock::now();
  const SimulationContext ctx(sc, with_mode(opt, SimMode::Plain));
  const ProductBundle& pb = sc.bundle;
  const int m = pb.m(), n2 = pb.n2();
  // Shifted starts: index 2j is +ε along H_j, 2j+1 is −ε. Y₀ is unchanged,
  // i.e. the fiber point is parallel transported with the frames.
  std::vector<BundleState> starts;
  for (int j = 0; j < m; ++j)
    for (double sign : {1.0, -1.0}) starts.push_back({geodesic_shift(pb, z0.frame, j, sign * opt.eps), z0.y});

  const int budget = opt.sim.max_resample;
  SampleTable table(opt.n_paths, static_cast<std::size_t>(n2 * m));
  parallel_for(opt.n_paths, opt.workers, [&](std::size_t i) {
    for (int attempt = 0; attempt <= budget; ++attempt) {
      std::vector<Vec> values;
      double defect = 0.0;
      bool ok = true;
      for (const BundleState& z : starts) {
        const PathState s = simulate_attempt(ctx, z, opt.seed, i, static_cast<std::uint64_t>(attempt));
        if (s.rejected) {
          ok = false;
          break;
        }
        values.push_back(sc.map->value(s.frame, s.y));
        defect = std::max(defect, s.max_defect);
      }
      if (!ok) continue;
      Mat d(n2, m);
      for (int j = 0; j < m; ++j) d.col(j) = (values[2 * j] - values[2 * j + 1]) / (2.0 * opt.eps);
      store(table.row(i), d);
      table.attempts[i] = attempt;
      table.defect[i] = defect;
      return;
    }
    throw std::runtime_error("finite-difference oracle: path " + std::to_string(i) +
                             " left the chart on every attempt");
  });
  EstimateReport rep;
  rep.kind = "fd";
  rep.scenario = sc.name;
  table.block_stats(0, n2, m, rep.estimate, rep.stderr_);
  table.fill_common(rep, opt.seed);
  rep.wall_time_s = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass:
      return "PASS";
    case Verdict::Warn:
      return "WARN";
    case Verdict::Fail:
      return "FAIL";
  }
  return "FAIL";
}

Comparison compare(const Mat& a, const Mat& se_a, const Mat& b, const Mat& se_b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || se_a.rows() != a.rows() ||
      se_a.cols() != a.cols() || se_b.rows() != b.rows() || se_b.cols() != b.cols())
    throw std::invalid_argument("compare: shape mismatch");
  Comparison c;
  c.z.resize(a.rows(), a.cols());
  for (int j = 0; j < a.cols(); ++j)
    for (int r = 0; r < a.rows(); ++r) {
      const double diff = a(r, j) - b(r, j);
      const double den = std::sqrt(se_a(r, j) * se_a(r, j) + se_b(r, j) * se_b(r, j));
      double z;
      if (diff == 0.0)
        z = 0.0;
      else if (den == 0.0)
        z = std::copysign(std::numeric_limits<double>::infinity(), diff);
      else
        z = diff / den;
      c.z(r, j) = z;
      c.max_abs_z = std::max(c.max_abs_z, std::abs(z));
    }
  c.verdict = c.max_abs_z <= 4.0 ? Verdict::Pass : c.max_abs_z <= 6.0 ? Verdict::Warn : Verdict::Fail;
  return c;
}

Comparison compare(const EstimateReport& a, const EstimateReport& b) {
  return compare(a.estimate, a.stderr_, b.estimate, b.stderr_);
}

Comparison compare(const EstimateReport& a, const Mat& exact) {
  return compare(a.estimate, a.stderr_, exact, Mat::Zero(exact.rows(), exact.cols()));
}

}  // namespace bismut
