#include "bismut/report_io.hpp"

#include <iomanip>
#include <ostream>

namespace bismut {

json matrix_to_json(const Mat& a) {
  json rows = json::array();
  for (int r = 0; r < a.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
    rows.push_back(row);
  }
  return rows;
}

Mat matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows ? static_cast<int>(j.at(0).size()) : 0;
  if (rows > kMaxDim || cols > kMaxDim) throw std::invalid_argument("matrix too large");
  Mat a(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j.at(r).size()) != cols) throw std::invalid_argument("ragged matrix");
    for (int c = 0; c < cols; ++c) a(r, c) = j.at(r).at(c).get<double>();
  }
  return a;
}

json to_json(const EstimateReport& r) {
  json j;
  j["kind"] = r.kind;
  j["scenario"] = r.scenario;
  j["estimate"] = matrix_to_json(r.estimate);
  j["stderr"] = matrix_to_json(r.stderr_);
  json terms = json::array();
  for (const auto& t : r.terms)
    terms.push_back({{"name", t.name}, {"mean", matrix_to_json(t.mean)},
                     {"stderr", matrix_to_json(t.stderr_)}});
  j["terms"] = terms;
  j["n_paths"] = r.n_paths;
  j["n_rejected"] = r.n_rejected;
  j["seed"] = r.seed;
  j["max_frame_defect"] = r.max_frame_defect;
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

EstimateReport report_from_json(const json& j) {
  EstimateReport r;
  r.kind = j.at("kind").get<std::string>();
  r.scenario = j.value("scenario", std::string());
  r.estimate = matrix_from_json(j.at("estimate"));
  r.stderr_ = matrix_from_json(j.at("stderr"));
  if (j.contains("terms"))
    for (const auto& t : j.at("terms"))
      r.terms.push_back({t.at("name").get<std::string>(), matrix_from_json(t.at("mean")),
                         matrix_from_json(t.at("stderr"))});
  r.n_paths = j.value("n_paths", std::size_t{0});
  r.n_rejected = j.value("n_rejected", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.max_frame_defect = j.value("max_frame_defect", 0.0);
  r.wall_time_s = j.value("wall_time_s", 0.0);
  return r;
}

namespace {

struct Csv {
  std::ostream& os;
  bool first = true;
  explicit Csv(std::ostream& o) : os(o) { os << std::setprecision(17); }
  template <typename T>
  Csv& operator<<(const T& v) {
    if (!first) os << ',';
    os << v;
    first = false;
    return *this;
  }
  void end() {
    os << '\n';
    first = true;
  }
};

}  // namespace

void write_path_csv(std::ostream& os, const std::vector<PathState>& states, int m, int n1, int n2,
                    int path_id, bool header) {
  Csv csv(os);
  if (header) {
    csv << "path" << "t";
    for (int a = 0; a < m; ++a) csv << "x" + std::to_string(a);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) csv << "u" + std::to_string(r) + std::to_string(c);
    for (int a = 0; a < n1; ++a) csv << "Y" + std::to_string(a);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) csv << "M" + std::to_string(r) + std::to_string(c);
    for (int j = 0; j < m; ++j) {
      for (int r = 0; r < n1; ++r)
        for (int c = 0; c < n1; ++c)
          csv << "G1_" + std::to_string(j) + "_" + std::to_string(r) + std::to_string(c);
      for (int r = 0; r < n2; ++r)
        for (int c = 0; c < n2; ++c)
          csv << "G2_" + std::to_string(j) + "_" + std::to_string(r) + std::to_string(c);
      for (int a = 0; a < n1; ++a) csv << "Yder" + std::to_string(j) + "_" + std::to_string(a);
    }
    csv.end();
  }
  for (const PathState& s : states) {
    csv << path_id << s.t;
    for (int a = 0; a < m; ++a) csv << s.frame.base.x(a);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) csv << s.frame.base.u(r, c);
    for (int a = 0; a < n1; ++a) csv << s.y(a);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) csv << s.M(r, c);
    for (int j = 0; j < m; ++j) {
      for (int r = 0; r < n1; ++r)
        for (int c = 0; c < n1; ++c) csv << s.G1[j](r, c);
      for (int r = 0; r < n2; ++r)
        for (int c = 0; c < n2; ++c) csv << s.G2[j](r, c);
      for (int a = 0; a < n1; ++a) csv << s.Yder[j](a);
    }
    csv.end();
  }
}

void write_commutator_csv(std::ostream& os, const std::vector<CommutatorRow>& rows) {
  Csv csv(os);
  csv << "state" << "j" << "i" << "omega_norm" << "residual" << "residual_negated" << "verdict";
  csv.end();
  for (const auto& r : rows) {
    csv << r.state << r.j << r.i << r.omega_norm << r.residual << r.mutated
        << (r.pass ? "PASS" : "FAIL");
    csv.end();
  }
}

void write_expansion_csv(std::ostream& os, const std::vector<ExpansionRow>& rows) {
  Csv csv(os);
  csv << "state";
  if (!rows.empty())
    for (const auto& [name, v] : rows.front().term_norms) csv << "norm_" + name;
  csv << "lhs" << "rhs" << "residual" << "residual_without_t4_product" << "second_residual"
      << "second_residual_dv0_per_direction" << "regroup_row" << "regroup_col";
  if (!rows.empty())
    for (const auto& [name, v] : rows.front().mutated) csv << "flip_" + name;
  csv << "verdict";
  csv.end();
  for (const auto& r : rows) {
    csv << r.state;
    for (const auto& [name, v] : r.term_norms) csv << v;
    csv << r.lhs_norm << r.rhs_norm << r.residual << r.residual_without_product
        << r.second_residual << r.second_residual_dv0_per_direction << r.regroup_row
        << r.regroup_col;
    for (const auto& [name, v] : r.mutated) csv << v;
    csv << (r.pass ? "PASS" : "FAIL");
    csv.end();
  }
}

void write_plot_csv(std::ostream& os, const std::vector<PlotPoint>& points) {
  Csv csv(os);
  csv << "series" << "x" << "y" << "yerr";
  csv.end();
  for (const auto& p : points) {
    csv << p.series << p.x << p.y << p.yerr;
    csv.end();
  }
}

}  // namespace bismut
