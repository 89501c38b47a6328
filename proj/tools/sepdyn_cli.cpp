#include "app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <sstream>
#include <iostream>

using namespace sepdyn;

namespace {

int cmd_check_separable(const std::string& scenario, const std::string& model_file) {
  LindbladModel m;
  if (!model_file.empty()) {
    std::ifstream f(model_file);
    if (!f) throw std::invalid_argument("cannot open " + model_file);
    std::stringstream ss;
    ss << f.rdbuf();
    auto j = nlohmann::json::parse(ss.str());
    if (j.contains("model")) j = j["model"];
    m = app::parse_model(j.dump());
  } else {
    m = make_scenario(scenario).model;
  }
  const auto v = check_separable_form(m);
  nlohmann::json out;
  out["model"] = m.name;
  out["local_hamiltonian"] = v.local_hamiltonian;
  for (std::size_t a = 0; a < m.L.size(); ++a) {
    nlohmann::json e;
    e["label"] = m.labels[a];
    e["product"] = static_cast<bool>(v.product_jump[a]);
    e["local_LdagL"] = static_cast<bool>(v.local_LdagL[a]);
    out["lindblads"].push_back(e);
  }
  out["manifestly_separable"] = v.manifestly_separable;
  std::cout << out.dump(2) << "\n";
  return v.manifestly_separable ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"sepdyn: restricted and unrestricted open-system trajectories"};
  cli.require_subcommand(1);

  app::RunConfig cfg;
  cfg.threads = default_threads();
  std::string config_file, initial, weighting;
  std::vector<std::string> solvers;
  double t_final = 0, dt = 0;
  int n_traj = 0;
  std::uint64_t seed = 0;
  int threads = 0;

  auto* run = cli.add_subcommand("run", "run solvers on a scenario or config file");
  run->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  run->add_option("--scenario", cfg.scenario, "scenario name (see list-scenarios)");
  run->add_option("--initial", initial, "product label, one character per party: digit, + or -");
  run->add_option("--t-final", t_final, "final time");
  run->add_option("--dt", dt, "time step");
  run->add_option("--traj", n_traj, "number of trajectories");
  run->add_option("--seed", seed, "master seed");
  run->add_option("--solver", solvers, "solver(s): mcwf sep-mcwf lindblad sep-lindblad sse sep-sse");
  run->add_option("--out", cfg.out_dir, "output directory");
  run->add_option("--weighting", weighting, "restricted branch weights: restricted | unrestricted");
  run->add_flag("--exact", cfg.exact, "append closed-form swap columns");
  run->add_option("--threads", threads, "worker threads (default: $SEPDYN_THREADS or 1)");

  std::string csv_a, csv_b, report_out;
  double sigma = 3.0, abs_tol = 1e-9;
  auto* cmp = cli.add_subcommand("compare", "compare two run CSVs");
  cmp->add_option("run_a", csv_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("run_b", csv_b)->required()->check(CLI::ExistingFile);
  cmp->add_option("--sigma", sigma, "band width in standard errors");
  cmp->add_option("--abs-tol", abs_tol, "differences below this count as zero");
  cmp->add_option("--out", report_out, "write the JSON report here instead of stdout");

  auto* ls = cli.add_subcommand("list-scenarios", "list built-in scenarios");

  std::string chk_scenario = "bell-decay", chk_model;
  auto* chk = cli.add_subcommand("check-separable", "structural separability check of a model");
  chk->add_option("--scenario", chk_scenario);
  chk->add_option("--model", chk_model, "JSON file holding a model object (or a config with 'model')")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*run) {
      if (!config_file.empty()) {
        const auto threads_default = cfg.threads;
        const auto out_dir = cfg.out_dir;
        const auto scen = cfg.scenario;
        const bool exact = cfg.exact;
        cfg = app::load_config(config_file);
        if (cfg.threads == 1) cfg.threads = threads_default;
        if (run->count("--out")) cfg.out_dir = out_dir;
        if (run->count("--scenario")) cfg.scenario = scen;
        if (exact) cfg.exact = true;
      }
      if (run->count("--initial")) cfg.initial = initial;
      if (run->count("--t-final")) cfg.t_final = t_final;
      if (run->count("--dt")) cfg.dt = dt;
      if (run->count("--traj")) cfg.n_traj = n_traj;
      if (run->count("--seed")) cfg.seed = seed;
      if (run->count("--threads")) cfg.threads = threads;
      if (!solvers.empty()) cfg.solvers = solvers;
      if (!weighting.empty()) {
        if (weighting == "restricted")
          cfg.weighting = Weighting::restricted;
        else if (weighting == "unrestricted")
          cfg.weighting = Weighting::unrestricted;
        else
          throw std::invalid_argument("--weighting: expected restricted or unrestricted");
      }
      const auto res = app::run(cfg);
      for (const auto& f : res.files) std::cout << f << "\n";
      return 0;
    }
    if (*cmp) {
      const auto rep = app::compare(app::read_csv(csv_a), app::read_csv(csv_b), sigma, abs_tol);
      const auto text = app::report_json(rep) + "\n";
      if (report_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(report_out);
        f << text;
      }
      return rep.compatible ? 0 : 1;
    }
    if (*ls) {
      for (const auto& n : scenario_names()) {
        const auto sc = make_scenario(n);
        std::cout << n << "\t" << sc.description << "\n";
      }
      return 0;
    }
    if (*chk) return cmd_check_separable(chk_scenario, chk_model);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
