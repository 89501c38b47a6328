#pragma once

#include "sepdyn/sepdyn.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sepdyn::app {

struct RunConfig {
  std::string scenario = "bell-decay";
  std::optional<std::string> model_json;    // inline model spec (JSON text) replaces the scenario model
  std::optional<std::string> initial;       // label such as "10" or "+0"
  std::optional<std::string> initial_json;  // {"factors": ...} or {"vector": ...}
  std::optional<double> t_final, dt;
  std::optional<int> n_traj;
  std::uint64_t seed = 7;
  std::vector<std::string> solvers = {"mcwf", "sep-mcwf"};
  std::string out_dir = ".";
  int threads = 1;
  int n_batches = 20;
  Weighting weighting = Weighting::restricted;
  bool exact = false;
};

// Parsed time series of one solver, in the CSV column layout.
struct SolverRun {
  std::string solver;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  long annihilation_events = 0;
  long singular_events = 0;
  std::vector<long> branch_counts;
  std::vector<Mat> rho;
};

struct RunResult {
  std::vector<SolverRun> runs;
  std::vector<std::string> files;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

// Scenario with overrides applied; psi0 may be entangled, product is set only when psi0 factorizes.
struct Setup {
  Scenario sc;
  Vec psi0;
  std::optional<ProductState> product;
  bool swap = false;
};

Setup resolve(const RunConfig& cfg);
ProductState parse_product_label(const std::string& label, const SystemShape& shape);
LindbladModel parse_model(const std::string& json_text);

RunResult run(const RunConfig& cfg, bool write_files = true);

std::string to_csv(const SolverRun& r);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  int col(const std::string& name) const;
};

Table read_csv(const std::string& path);
Table parse_csv(const std::string& text);

struct ObservableReport {
  double max_abs_dev = 0.0;
  double max_z = 0.0;
  bool compatible = true;
  std::vector<double> z;
};

struct CompareReport {
  std::map<std::string, ObservableReport> observables;
  bool compatible = true;
};

CompareReport compare(const Table& a, const Table& b, double sigma = 3.0, double abs_tol = 1e-9);
std::string report_json(const CompareReport& r);

}  // namespace sepdyn::app
