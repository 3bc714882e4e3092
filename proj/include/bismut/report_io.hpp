#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "bismut/estimator.hpp"
#include "bismut/verify.hpp"

namespace bismut {

using json = nlohmann::json;

/// Matrices are arrays of rows.
json matrix_to_json(const Mat& a);
Mat matrix_from_json(const json& j);

json to_json(const EstimateReport& r);
EstimateReport report_from_json(const json& j);

/// CSV tables with a header line; numbers printed with 17 significant digits.
void write_path_csv(std::ostream& os, const std::vector<PathState>& states, int m, int n1, int n2,
                    int path_id, bool header);
void write_commutator_csv(std::ostream& os, const std::vector<CommutatorRow>& rows);
void write_expansion_csv(std::ostream& os, const std::vector<ExpansionRow>& rows);

struct PlotPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
  double yerr = 0.0;
};
/// Tidy columns: series, x, y, yerr.
void write_plot_csv(std::ostream& os, const std::vector<PlotPoint>& points);

}  // namespace bismut
