#include "bismut/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"

namespace bismut {

namespace {

const std::vector<std::string> kSubcommands = {
    "estimate",          "estimate-classical", "oracle-fd", "verify-commutators",
    "verify-expansion",  "simulate-paths",     "compare"};

const std::set<std::string> kKeys = {
    "scenario", "T",        "h",       "n-paths",      "seed",        "eps",
    "nbar",     "fk-side",  "feynman-kac", "retract",  "max-resample", "substeps",
    "workers",  "states",   "record-every", "field-scale", "antipode-margin", "output",
    "emit-plot-data", "plot-output", "a", "b"};

std::string normalize_key(std::string k) {
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << v.get<double>();
    return os.str();
  }
  throw std::invalid_argument("config value must be a scalar");
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  if (ends_with(path, ".json")) {
    json j = json::parse(in);
    const json& cfg = j.contains("config") ? j.at("config") : j;
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
      const std::string key = normalize_key(it.key());
      if (key == "subcommand") continue;
      if (!kKeys.count(key)) throw std::invalid_argument("unknown config key '" + it.key() + "'");
      if (it.value().is_null()) continue;
      out.emplace_back(key, json_scalar(it.value()));
    }
    return out;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = normalize_key(trim(line.substr(0, eq)));
    if (!kKeys.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["scenario"] = c.scenario;
  j["T"] = c.T ? json(*c.T) : json(nullptr);
  j["h"] = c.h;
  j["n-paths"] = c.n_paths;
  j["seed"] = c.seed;
  j["eps"] = c.eps;
  j["nbar"] = c.nbar;
  j["fk-side"] = c.fk_side;
  j["feynman-kac"] = c.feynman_kac;
  j["retract"] = c.retract;
  j["max-resample"] = c.max_resample;
  j["substeps"] = c.substeps;
  j["workers"] = c.workers;
  j["states"] = c.states;
  j["record-every"] = c.record_every;
  j["field-scale"] = c.field_scale;
  j["antipode-margin"] = c.antipode_margin;
  j["emit-plot-data"] = c.emit_plot_data;
  if (!c.output.empty()) j["output"] = c.output;
  if (!c.plot_output.empty()) j["plot-output"] = c.plot_output;
  if (!c.a.empty()) j["a"] = c.a;
  if (!c.b.empty()) j["b"] = c.b;
  return j;
}

// ---------------------------------------------------------------------------

namespace {

struct Output {
  std::ofstream file;
  std::ostream* os;
  Output(const std::string& path, std::ostream& fallback) : os(&fallback) {
    if (!path.empty()) {
      file.open(path);
      if (!file) throw std::runtime_error("cannot write '" + path + "'");
      os = &file;
    }
  }
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fmt(const Mat& a, int prec = 6) {
  std::ostringstream os;
  os << '[';
  for (int r = 0; r < a.rows(); ++r) {
    if (r) os << "; ";
    for (int c = 0; c < a.cols(); ++c) os << (c ? ", " : "") << std::setprecision(prec) << a(r, c);
  }
  os << ']';
  return os.str();
}

EstimatorOptions estimator_options(const RunConfig& c, const Scenario& sc) {
  EstimatorOptions o;
  o.sim.T = c.T ? *c.T : sc.default_T;
  o.sim.h = c.h;
  o.sim.nbar = c.nbar == "col" ? NbarConvention::Col : NbarConvention::Row;
  o.sim.fk_side = c.fk_side == "left" ? FkSide::Left : FkSide::Right;
  o.sim.feynman_kac = c.feynman_kac;
  o.sim.retract = c.retract;
  o.sim.max_resample = c.max_resample;
  o.sim.substeps = c.substeps;
  o.n_paths = c.n_paths;
  o.seed = c.seed;
  o.workers = c.workers;
  o.eps = c.eps;
  return o;
}

void validate(const RunConfig& c) {
  if (std::find(kSubcommands.begin(), kSubcommands.end(), c.subcommand) == kSubcommands.end())
    throw CLI::ValidationError("subcommand", "unknown subcommand '" + c.subcommand + "'");
  if (c.nbar != "row" && c.nbar != "col") throw CLI::ValidationError("nbar", "must be row or col");
  if (c.fk_side != "left" && c.fk_side != "right")
    throw CLI::ValidationError("fk-side", "must be left or right");
  if (c.n_paths < 1) throw CLI::ValidationError("n-paths", "must be >= 1");
  if (c.workers < 1) throw CLI::ValidationError("workers", "must be >= 1");
  if (c.states < 1) throw CLI::ValidationError("states", "must be >= 1");
  if (c.record_every < 1) throw CLI::ValidationError("record-every", "must be >= 1");
  if (c.max_resample < 0) throw CLI::ValidationError("max-resample", "must be >= 0");
  if (c.substeps < 1) throw CLI::ValidationError("substeps", "must be >= 1");
}

std::vector<PlotPoint> plot_points(const EstimateReport& r) {
  std::vector<PlotPoint> pts;
  auto add = [&](const std::string& series, const Mat& mean, const Mat& se) {
    for (int j = 0; j < mean.cols(); ++j)
      for (int i = 0; i < mean.rows(); ++i)
        pts.push_back({series, static_cast<double>(i + mean.rows() * j), mean(i, j), se(i, j)});
  };
  add("estimate", r.estimate, r.stderr_);
  for (const auto& t : r.terms) add("term:" + t.name, t.mean, t.stderr_);
  return pts;
}

int run_estimate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  ScenarioOptions so;
  so.field_scale = c.field_scale;
  so.antipode_margin = c.antipode_margin;
  const Scenario sc = make_scenario(c.scenario, so);
  const EstimatorOptions opt = estimator_options(c, sc);
  EstimateReport rep;
  if (c.subcommand == "estimate")
    rep = estimate_gradient_bundle(sc, sc.start, opt);
  else if (c.subcommand == "estimate-classical")
    rep = estimate_gradient_classical(sc, sc.start, opt);
  else
    rep = estimate_gradient_fd(sc, sc.start, opt);

  json j = to_json(rep);
  RunConfig resolved = c;
  resolved.T = opt.sim.T;
  j["config"] = config_to_json(resolved);
  std::string verdict = "COMPLETE";
  int code = 0;
  if (sc.oracle) {
    const Mat exact = sc.oracle->gradient(sc.start, opt.sim.T);
    const Comparison cmp = compare(rep, exact);
    j["oracle"] = {{"gradient", matrix_to_json(exact)},
                   {"z", matrix_to_json(cmp.z)},
                   {"verdict", to_string(cmp.verdict)}};
    verdict = to_string(cmp.verdict) + " vs analytic gradient " + fmt(exact);
    if (cmp.verdict == Verdict::Fail) code = 2;
  }
  Output o(c.output, out);
  *o.os << j.dump(2) << '\n';
  if (c.emit_plot_data) {
    const std::string path = c.plot_output.empty() ? (c.output.empty() ? "plot.csv" : c.output + ".plot.csv")
                                                   : c.plot_output;
    std::ofstream p(path);
    write_plot_csv(p, plot_points(rep));
  }
  std::ostream& summary = c.output.empty() ? err : out;
  summary << c.subcommand << " " << sc.name << ": estimate " << fmt(rep.estimate) << " stderr "
          << fmt(rep.stderr_, 3) << " (" << rep.n_paths << " paths, " << rep.n_rejected
          << " rejected, " << fmt(rep.wall_time_s, 3) << " s) " << verdict << '\n';
  return code;
}

int run_verify(const RunConfig& c, std::ostream& out, std::ostream& err) {
  ScenarioOptions so;
  so.field_scale = c.field_scale;
  so.antipode_margin = c.antipode_margin;
  const Scenario sc = make_scenario(c.scenario, so);
  Output o(c.output, out);
  std::ostream& summary = c.output.empty() ? err : out;
  if (c.subcommand == "verify-commutators") {
    const auto rows = run_commutator_suite(sc, c.states, c.seed);
    write_commutator_csv(*o.os, rows);
    double worst = 0.0;
    int fails = 0;
    for (const auto& r : rows) {
      worst = std::max(worst, r.residual);
      fails += !r.pass;
    }
    summary << "verify-commutators " << sc.name << ": " << rows.size() << " checks, worst residual "
            << fmt(worst, 3) << (fails ? " FAIL" : " PASS") << '\n';
    return fails ? 2 : 0;
  }
  const auto rows = run_expansion_suite(sc, c.states, c.seed);
  write_expansion_csv(*o.os, rows);
  double worst = 0.0, worst2 = 0.0, worst_regroup = 0.0;
  int fails = 0;
  for (const auto& r : rows) {
    worst = std::max(worst, r.residual);
    worst2 = std::max(worst2, r.second_residual);
    worst_regroup = std::max(worst_regroup, r.regroup_row);
    fails += !r.pass;
  }
  summary << "verify-expansion " << sc.name << ": " << rows.size() << " states, worst residual "
          << fmt(worst, 3) << ", second commutation " << fmt(worst2, 3) << ", regrouping "
          << fmt(worst_regroup, 3) << (fails ? " FAIL" : " PASS") << '\n';
  return fails ? 2 : 0;
}

int run_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  ScenarioOptions so;
  so.field_scale = c.field_scale;
  so.antipode_margin = c.antipode_margin;
  const Scenario sc = make_scenario(c.scenario, so);
  EstimatorOptions opt = estimator_options(c, sc);
  opt.sim.mode = SimMode::Full;
  const SimulationContext ctx(sc, opt.sim);
  Output o(c.output, out);
  std::vector<PlotPoint> pts;
  for (std::size_t p = 0; p < c.n_paths; ++p) {
    std::vector<PathState> rec;
    simulate_path(ctx, sc.start, c.seed, p, &rec, c.record_every);
    write_path_csv(*o.os, rec, sc.bundle.m(), sc.bundle.n1(), sc.bundle.n2(), static_cast<int>(p),
                   p == 0);
    if (c.emit_plot_data)
      for (const auto& s : rec)
        for (int a = 0; a < sc.bundle.m(); ++a)
          pts.push_back({"path" + std::to_string(p) + ":x" + std::to_string(a), s.t, s.frame.base.x(a), 0.0});
  }
  if (c.emit_plot_data) {
    std::ofstream pf(c.plot_output.empty() ? "plot.csv" : c.plot_output);
    write_plot_csv(pf, pts);
  }
  (c.output.empty() ? err : out) << "simulate-paths " << sc.name << ": " << c.n_paths
                                 << " paths written COMPLETE\n";
  return 0;
}

int run_compare(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.a.empty() || c.b.empty()) throw CLI::ValidationError("compare", "needs --a and --b");
  auto load = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return report_from_json(json::parse(in));
  };
  const EstimateReport ra = load(c.a), rb = load(c.b);
  const Comparison cmp = compare(ra, rb);
  json j;
  j["z"] = matrix_to_json(cmp.z);
  j["max_abs_z"] = cmp.max_abs_z;
  j["verdict"] = to_string(cmp.verdict);
  j["config"] = config_to_json(c);
  Output o(c.output, out);
  *o.os << j.dump(2) << '\n';
  (c.output.empty() ? err : out) << "compare: max |z| = " << fmt(cmp.max_abs_z, 3) << " "
                                 << to_string(cmp.verdict) << '\n';
  return cmp.verdict == Verdict::Fail ? 2 : 0;
}

}  // namespace

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  validate(config);
  const std::string& s = config.subcommand;
  if (s == "estimate" || s == "estimate-classical" || s == "oracle-fd")
    return run_estimate(config, out, err);
  if (s == "verify-commutators" || s == "verify-expansion") return run_verify(config, out, err);
  if (s == "simulate-paths") return run_simulate(config, out, err);
  return run_compare(config, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Monte Carlo horizontal-gradient estimators on vector bundles"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help");
  std::string config_path;
  double T = std::nan("");
  bool paths_given = false;
  app.add_option("--config", config_path, "key=value file (or a report .json); flags override it");
  app.add_option("--scenario", c.scenario, "scenario name")
      ->check(CLI::IsMember(scenario_names()));
  app.add_option("--T", T, "horizon (scenario default if unset)");
  app.add_option("--h", c.h, "time step");
  auto* np = app.add_option("--n-paths", c.n_paths, "number of paths");
  app.add_option("--seed", c.seed, "base seed");
  app.add_option("--eps", c.eps, "finite-difference shift");
  app.add_option("--nbar", c.nbar, "row|col")->check(CLI::IsMember({"row", "col"}));
  app.add_option("--fk-side", c.fk_side, "left|right")->check(CLI::IsMember({"left", "right"}));
  app.add_option("--feynman-kac", c.feynman_kac, "carry M_t (false holds M = I)");
  app.add_option("--retract", c.retract, "re-orthonormalize frames every step");
  app.add_option("--max-resample", c.max_resample, "resample budget per path");
  app.add_option("--substeps", c.substeps, "fine draws summed into each increment");
  app.add_option("--workers", c.workers, "worker threads (results do not depend on it)");
  app.add_option("--states", c.states, "random states for verification");
  app.add_option("--record-every", c.record_every, "path dump stride");
  app.add_option("--field-scale", c.field_scale, "scale of V0, V1 and Y0");
  app.add_option("--antipode-margin", c.antipode_margin, "excluded angle around the chart antipode");
  app.add_option("--output", c.output, "output file (stdout if empty)");
  app.add_option("--emit-plot-data", c.emit_plot_data, "also write tidy plot CSV");
  app.add_option("--plot-output", c.plot_output, "plot CSV path");
  app.add_option("--a", c.a, "first report (compare)");
  app.add_option("--b", c.b, "second report (compare)");
  app.fallthrough();
  const std::map<std::string, std::string> blurb = {
      {"estimate", "vector-bundle gradient estimator"},
      {"estimate-classical", "classical estimator (trivial line bundles only)"},
      {"oracle-fd", "finite-difference gradient with common random numbers"},
      {"verify-commutators", "flow commutators against scalarized curvature"},
      {"verify-expansion", "expansion and second-commutation residuals"},
      {"simulate-paths", "dump recorded path states as CSV"},
      {"compare", "z-table of two reports (--a, --b)"}};
  for (const auto& name : kSubcommands) app.add_subcommand(name, blurb.at(name))->fallthrough();

  // Config file values go in front of the command line so explicit flags win.
  std::vector<std::string> user;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      config_path = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      config_path = args[k].substr(9);
    } else {
      user.push_back(args[k]);
    }
  }
  try {
    std::vector<std::string> tokens;
    auto first_sub = std::find_if(user.begin(), user.end(), [](const std::string& a) {
      return std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end();
    });
    if (first_sub != user.end()) {
      tokens.push_back(*first_sub);
      user.erase(first_sub);
    }
    if (!config_path.empty())
      for (const auto& [k, v] : read_config_file(config_path)) tokens.push_back("--" + k + "=" + v);
    tokens.insert(tokens.end(), user.begin(), user.end());
    std::reverse(tokens.begin(), tokens.end());
    app.parse(tokens);
    paths_given = np->count() > 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  }
  for (auto* sub : app.get_subcommands()) c.subcommand = sub->get_name();
  if (!std::isnan(T)) c.T = T;
  if (c.subcommand == "simulate-paths" && !paths_given) c.n_paths = 5;
  try {
    return run(c, out, err);
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace bismut
