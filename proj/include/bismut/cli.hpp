#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bismut/report_io.hpp"

namespace bismut {

struct RunConfig {
  std::string subcommand;
  std::string scenario = "flat-classical";
  std::optional<double> T;  // scenario default when unset
  double h = 1e-3;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 1;
  double eps = 1e-3;
  std::string nbar = "row";
  std::string fk_side = "right";
  bool feynman_kac = true;
  bool retract = true;
  int max_resample = 5;
  int substeps = 1;
  int workers = 1;
  int states = 100;
  int record_every = 1;
  double field_scale = 1.0;
  double antipode_margin = 0.1;
  std::string output;
  bool emit_plot_data = false;
  std::string plot_output;
  std::string a, b;  // compare inputs
};

/// Every key, with the resolved values, as written into reports.
json config_to_json(const RunConfig& c);

/// Dispatches one invocation, args excluding the program name. Exit status:
/// 0 on success, 1 on usage or runtime error, 2 on a failed check.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Executes an already parsed configuration.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Reads `key=value` lines (# comments), or the "config" object of a report
/// written earlier when the file ends in .json. Throws on unknown keys.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace bismut
