#include "app.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#ifndef SEPDYN_VERSION
#define SEPDYN_VERSION "0.1.0"
#endif

namespace sepdyn::app {

using json = nlohmann::json;

namespace {

const std::set<std::string> kSolvers = {"mcwf", "sep-mcwf", "lindblad", "sep-lindblad", "sse", "sep-sse"};

bool restricted_solver(const std::string& s) { return s.rfind("sep-", 0) == 0; }
bool stochastic_solver(const std::string& s) { return s == "mcwf" || s == "sep-mcwf" || s == "sse" || s == "sep-sse"; }

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw std::invalid_argument("config field '" + field + "': " + what);
}

double get_number(const json& j, const std::string& field) {
  if (!j.is_number()) field_error(field, "expected a number");
  return j.get<double>();
}

cplx get_complex(const json& j, const std::string& field) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  field_error(field, "expected a number or a [re, im] pair");
}

Vec get_vector(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) field_error(field, "expected a non-empty array of [re, im] pairs");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_complex(j[i], field + "[" + std::to_string(i) + "]");
  return v;
}

Mat get_matrix(const json& j, int D, const std::string& field) {
  if (!j.is_array()) field_error(field, "expected a row-major array of " + std::to_string(D * D) + " complex entries");
  if (j.size() != static_cast<std::size_t>(D) * static_cast<std::size_t>(D))
    field_error(field, "expected " + std::to_string(D * D) + " entries, got " + std::to_string(j.size()));
  Mat m(D, D);
  for (int r = 0; r < D; ++r)
    for (int c = 0; c < D; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * D + c);
      m(r, c) = get_complex(j[i], field + "[" + std::to_string(i) + "]");
    }
  return m;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::vector<std::string> series_columns(const std::vector<std::string>& obs) {
  std::vector<std::string> c = {"time", "negativity_mean", "negativity_std", "negativity_sem", "negativity_of_mean",
                                "negativity_of_mean_batch_sem"};
  for (const auto& o : obs) {
    c.push_back(o);
    c.push_back(o + "_std");
    c.push_back(o + "_sem");
    c.push_back(o + "_batch_sem");
  }
  c.push_back("trace");
  return c;
}

SolverRun from_ensemble(const std::string& solver, const EnsembleSeries& es) {
  SolverRun r;
  r.solver = solver;
  r.columns = series_columns(es.obs_names);
  for (std::size_t t = 0; t < es.times.size(); ++t) {
    std::vector<double> row = {es.times[t], es.neg_mean[t], es.neg_std[t], es.neg_sem[t], es.neg_of_mean[t],
                               es.neg_of_mean_batch_sem[t]};
    for (std::size_t o = 0; o < es.obs_names.size(); ++o) {
      row.push_back(es.obs_mean[t][o]);
      row.push_back(es.obs_std[t][o]);
      row.push_back(es.obs_sem[t][o]);
      row.push_back(es.obs_batch_sem[t][o]);
    }
    row.push_back(es.trace[t]);
    r.rows.push_back(std::move(row));
  }
  r.rho = es.rho;
  r.branch_counts = es.branch_counts;
  r.annihilation_events = es.annihilation_events;
  r.singular_events = es.singular_events;
  return r;
}

SolverRun from_density(const std::string& solver, const std::vector<double>& times, const std::vector<Mat>& rho,
                       const Scenario& sc) {
  SolverRun r;
  r.solver = solver;
  std::vector<std::string> names;
  for (const auto& o : sc.observables) names.push_back(o.name);
  r.columns = series_columns(names);
  for (std::size_t t = 0; t < times.size(); ++t) {
    const double tr = std::real(rho[t].trace());
    const Mat rn = rho[t] / tr;
    const double ng = negativity(rn, 0, sc.model.shape);
    std::vector<double> row = {times[t], ng, 0.0, 0.0, ng, 0.0};
    for (const auto& o : sc.observables) {
      row.push_back(std::real((o.P * rn).trace()));
      row.insert(row.end(), {0.0, 0.0, 0.0});
    }
    row.push_back(tr);
    r.rows.push_back(std::move(row));
  }
  r.rho = rho;
  return r;
}

const Vec& full_of(const Vec& v) { return v; }
Vec full_of(const ProductState& p) { return p.full(); }

template <class Step, class State>
EnsembleSeries stochastic_ensemble(const Setup& su, const RunConfig& cfg, const EnsembleOptions& eo, const State& start,
                                   Step step) {
  const auto& sc = su.sc;
  const int steps = step_count(sc.t_final, sc.dt);
  return run_trajectories(sc.model.shape, steps, sc.dt, sc.n_traj, eo, sc.model.channels() + 1,
                          [&](std::uint64_t index, const TrajectoryObserver& observe, TrajectoryCounters& cnt) {
                            Rng rng(cfg.seed, index);
                            State psi = start;
                            observe(0, full_of(psi));
                            for (int s = 0; s < steps; ++s) {
                              JumpIncrement inc;
                              psi = step(psi, rng, inc);
                              cnt.branch_counts[static_cast<std::size_t>(inc.channel + 1)] += 1;
                              observe(s + 1, full_of(psi));
                            }
                          });
}

const std::set<std::string> kConfigKeys = {"scenario", "model",   "initial", "t_final",   "dt",        "n_traj",
                                           "seed",     "solvers", "out_dir", "threads",   "n_batches", "weighting",
                                           "exact"};

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  RunConfig c;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kConfigKeys.count(it.key())) field_error(it.key(), "unknown key");
  if (j.contains("scenario")) {
    if (!j["scenario"].is_string()) field_error("scenario", "expected a string");
    c.scenario = j["scenario"].get<std::string>();
  }
  if (j.contains("model")) {
    if (!j["model"].is_object()) field_error("model", "expected an object");
    c.model_json = j["model"].dump();
  }
  if (j.contains("initial")) {
    const auto& v = j["initial"];
    if (v.is_string())
      c.initial = v.get<std::string>();
    else if (v.is_object())
      c.initial_json = v.dump();
    else
      field_error("initial", "expected a label string or an object with 'factors' or 'vector'");
  }
  if (j.contains("t_final")) c.t_final = get_number(j["t_final"], "t_final");
  if (j.contains("dt")) c.dt = get_number(j["dt"], "dt");
  if (j.contains("n_traj")) {
    if (!j["n_traj"].is_number_integer()) field_error("n_traj", "expected an integer");
    c.n_traj = j["n_traj"].get<int>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) field_error("seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("solvers")) {
    if (!j["solvers"].is_array()) field_error("solvers", "expected an array of solver names");
    c.solvers.clear();
    for (const auto& s : j["solvers"]) {
      if (!s.is_string()) field_error("solvers", "expected strings");
      c.solvers.push_back(s.get<std::string>());
    }
  }
  if (j.contains("out_dir")) {
    if (!j["out_dir"].is_string()) field_error("out_dir", "expected a string");
    c.out_dir = j["out_dir"].get<std::string>();
  }
  if (j.contains("threads")) {
    if (!j["threads"].is_number_integer()) field_error("threads", "expected an integer");
    c.threads = j["threads"].get<int>();
  }
  if (j.contains("n_batches")) {
    if (!j["n_batches"].is_number_integer()) field_error("n_batches", "expected an integer");
    c.n_batches = j["n_batches"].get<int>();
  }
  if (j.contains("weighting")) {
    const auto w = j["weighting"].is_string() ? j["weighting"].get<std::string>() : "";
    if (w == "restricted")
      c.weighting = Weighting::restricted;
    else if (w == "unrestricted")
      c.weighting = Weighting::unrestricted;
    else
      field_error("weighting", "expected \"restricted\" or \"unrestricted\"");
  }
  if (j.contains("exact")) {
    if (!j["exact"].is_boolean()) field_error("exact", "expected true or false");
    c.exact = j["exact"].get<bool>();
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

LindbladModel parse_model(const std::string& text) {
  const json j = json::parse(text);
  if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].empty()) field_error("model.dims", "expected an array of local dimensions");
  std::vector<int> dims;
  for (const auto& d : j["dims"]) {
    if (!d.is_number_integer() || d.get<int>() < 1) field_error("model.dims", "entries must be positive integers");
    dims.push_back(d.get<int>());
  }
  SystemShape shape{dims};
  shape.validate();
  const int D = shape.total();
  Mat H = Mat::Zero(D, D);
  if (j.contains("H")) H = get_matrix(j["H"], D, "model.H");
  if (hermiticity_defect(H) > 1e-10) field_error("model.H", "not Hermitian");
  std::vector<Mat> L;
  std::vector<std::string> labels;
  if (j.contains("L")) {
    if (!j["L"].is_array()) field_error("model.L", "expected an array of {label, matrix}");
    for (std::size_t a = 0; a < j["L"].size(); ++a) {
      const auto& e = j["L"][a];
      const std::string f = "model.L[" + std::to_string(a) + "]";
      if (!e.is_object() || !e.contains("matrix")) field_error(f, "expected an object with 'matrix'");
      Mat La = get_matrix(e["matrix"], D, f + ".matrix");
      if (e.contains("rate")) La *= std::sqrt(get_number(e["rate"], f + ".rate"));
      labels.push_back(e.contains("label") && e["label"].is_string() ? e["label"].get<std::string>()
                                                                     : "L" + std::to_string(a + 1));
      L.push_back(std::move(La));
    }
  }
  const std::string name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "inline";
  return LindbladModel(shape, H, L, labels, {}, name);
}

ProductState parse_product_label(const std::string& label, const SystemShape& shape) {
  if (static_cast<int>(label.size()) != shape.parties())
    throw std::invalid_argument("initial label '" + label + "' needs one character per party (" +
                                std::to_string(shape.parties()) + ")");
  std::vector<Vec> f;
  for (int k = 0; k < shape.parties(); ++k) {
    const char ch = label[static_cast<std::size_t>(k)];
    const int dk = shape.dim(k);
    if (ch >= '0' && ch <= '9' && ch - '0' < dk) {
      f.push_back(basis_vector(dk, ch - '0'));
    } else if ((ch == '+' || ch == '-') && dk >= 2) {
      Vec v = basis_vector(dk, 0) + (ch == '+' ? 1.0 : -1.0) * basis_vector(dk, 1);
      f.push_back(v / std::sqrt(2.0));
    } else {
      throw std::invalid_argument(std::string("initial label: invalid character '") + ch + "' for party " +
                                  std::to_string(k) + " of dimension " + std::to_string(dk));
    }
  }
  return ProductState(shape, f);
}

Setup resolve(const RunConfig& cfg) {
  Setup su;
  if (cfg.model_json) {
    su.sc.name = "custom";
    su.sc.description = "inline model";
    su.sc.model = parse_model(*cfg.model_json);
    const json j = json::parse(*cfg.model_json);
    if (j.contains("observables")) {
      for (const auto& o : j["observables"]) {
        if (!o.is_string()) field_error("model.observables", "expected label strings");
        const auto l = o.get<std::string>();
        su.sc.observables.push_back({"p" + l, label_projector(l, su.sc.model.shape)});
      }
    }
    if (!cfg.initial && !cfg.initial_json) field_error("initial", "required with an inline model");
  } else {
    su.sc = make_scenario(cfg.scenario);
    su.swap = cfg.scenario == "swap";
  }
  const auto& shape = su.sc.model.shape;
  if (cfg.initial_json) {
    const json j = json::parse(*cfg.initial_json);
    if (j.contains("factors")) {
      if (!j["factors"].is_array() || static_cast<int>(j["factors"].size()) != shape.parties())
        field_error("initial.factors", "expected one vector per party");
      std::vector<Vec> f;
      for (int k = 0; k < shape.parties(); ++k) {
        Vec v = get_vector(j["factors"][static_cast<std::size_t>(k)], "initial.factors[" + std::to_string(k) + "]");
        if (v.size() != shape.dim(k)) field_error("initial.factors[" + std::to_string(k) + "]", "wrong dimension");
        if (v.norm() == 0.0) field_error("initial.factors[" + std::to_string(k) + "]", "zero vector");
        f.push_back(v);
      }
      su.sc.initial = ProductState(shape, f);
      su.psi0 = su.sc.initial.full();
    } else if (j.contains("vector")) {
      su.psi0 = get_vector(j["vector"], "initial.vector");
      if (su.psi0.size() != shape.total()) field_error("initial.vector", "wrong dimension");
      if (su.psi0.norm() == 0.0) field_error("initial.vector", "zero vector");
    } else {
      field_error("initial", "expected 'factors' or 'vector'");
    }
  } else if (cfg.initial) {
    su.sc.initial = parse_product_label(*cfg.initial, shape);
    su.psi0 = su.sc.initial.full();
  } else {
    su.psi0 = su.sc.initial.full();
  }
  su.psi0 /= su.psi0.norm();
  if (auto p = as_product(su.psi0, shape, 1e-10)) su.product = p->normalized();
  if (su.sc.observables.empty())
    for (int i = 0; i < shape.total(); ++i) {
      std::string l;
      int rem = i;
      for (int k = shape.parties() - 1; k >= 0; --k) {
        l.insert(l.begin(), static_cast<char>('0' + rem % shape.dim(k)));
        rem /= shape.dim(k);
      }
      su.sc.observables.push_back({"p" + l, projector(basis_vector(shape.total(), i))});
    }
  if (cfg.t_final) su.sc.t_final = *cfg.t_final;
  if (cfg.dt) su.sc.dt = *cfg.dt;
  if (cfg.n_traj) su.sc.n_traj = *cfg.n_traj;
  if (!(su.sc.dt > 0.0)) field_error("dt", "must be > 0");
  if (su.sc.t_final < su.sc.dt) field_error("t_final", "must be >= dt");
  for (const auto& s : cfg.solvers) {
    if (!kSolvers.count(s)) field_error("solvers", "unknown solver '" + s + "'");
    if (stochastic_solver(s) && su.sc.n_traj < 1) field_error("n_traj", "must be >= 1 for stochastic solvers");
    if (restricted_solver(s) && !su.product)
      throw std::invalid_argument("solver " + s + " requires a product initial state; the state fails the "
                                  "factorization check (product_defect = " +
                                  fmt(product_defect(su.psi0, shape)) + " > 1e-10)");
  }
  if (cfg.solvers.empty()) field_error("solvers", "empty solver set");
  if (cfg.threads < 1) field_error("threads", "must be >= 1");
  if (cfg.n_batches < 1) field_error("n_batches", "must be >= 1");
  if (cfg.exact && !su.swap) field_error("exact", "closed-form columns exist only for the swap scenario");
  return su;
}

std::string to_csv(const SolverRun& r) {
  std::string out;
  for (std::size_t i = 0; i < r.columns.size(); ++i) out += (i ? "," : "") + r.columns[i];
  out += "\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + fmt(row[i]);
    out += "\n";
  }
  return out;
}

namespace {

SolverRun run_solver(const std::string& solver, const Setup& su, const RunConfig& cfg) {
  const auto& sc = su.sc;
  const auto& m = sc.model;
  SepOptions sop;
  sop.weighting = cfg.weighting;
  EnsembleOptions eo;
  eo.threads = cfg.threads;
  eo.n_batches = cfg.n_batches;
  eo.observables = sc.observables;

  if (solver == "mcwf") return from_ensemble(solver, run_ensemble(m, su.psi0, sc.t_final, sc.dt, sc.n_traj, cfg.seed, eo));
  if (solver == "sep-mcwf")
    return from_ensemble(solver, run_sep_ensemble(m, *su.product, sc.t_final, sc.dt, sc.n_traj, cfg.seed, eo, sop));
  if (solver == "lindblad") {
    const auto ds = integrate(m, projector(su.psi0), sc.t_final, sc.dt, Method::rk4);
    return from_density(solver, ds.times, ds.rho, sc);
  }
  if (solver == "sep-lindblad") {
    PiecewiseOptions po;
    po.seed = cfg.seed;
    po.keep_members = false;
    po.sep = sop;
    const auto frames = sep_piecewise_propagate({{1.0, *su.product}}, m, sc.t_final, sc.dt, po);
    std::vector<double> times;
    std::vector<Mat> rho;
    for (const auto& f : frames) {
      times.push_back(f.time);
      rho.push_back(f.rho);
    }
    return from_density(solver, times, rho, sc);
  }
  if (solver == "sse")
    return from_ensemble(solver, stochastic_ensemble(su, cfg, eo, su.psi0, [&](const Vec& psi, Rng& rng, JumpIncrement& inc) {
                           return sse_step(psi, m, sc.dt, rng, &inc);
                         }));
  if (solver == "sep-sse")
    return from_ensemble(solver, stochastic_ensemble(su, cfg, eo, *su.product,
                                                     [&](const ProductState& psi, Rng& rng, JumpIncrement& inc) {
                                                       return sep_sse_step(psi, m, sc.dt, rng, &inc, sop);
                                                     }));
  throw std::invalid_argument("unknown solver " + solver);
}

std::vector<double> sems_at(const SolverRun& r, std::size_t t) {
  std::vector<double> out;
  for (std::size_t i = 0; i < r.columns.size(); ++i)
    if (r.columns[i].size() > 4 && r.columns[i].ends_with("_sem") && !r.columns[i].ends_with("_batch_sem"))
      out.push_back(r.rows[t][i]);
  return out;
}

double z_score(double a, double b, double sa, double sb, double abs_tol) {
  const double d = std::abs(a - b);
  if (d <= abs_tol) return 0.0;
  const double s = std::sqrt(sa * sa + sb * sb);
  return s > 0.0 ? d / s : std::numeric_limits<double>::infinity();
}

// Trace distance plus the largest per-observable z-score at each time.
SolverRun pair_series(const SolverRun& u, const SolverRun& r) {
  SolverRun p;
  p.solver = u.solver + "_vs_" + r.solver;
  p.columns = {"time", "trace_distance", "max_z", "within_3sigma"};
  for (std::size_t t = 0; t < u.rows.size(); ++t) {
    const double td = trace_distance(u.rho[t] / std::real(u.rho[t].trace()), r.rho[t] / std::real(r.rho[t].trace()));
    double zmax = 0.0;
    for (std::size_t i = 1; i < u.columns.size(); ++i) {
      const auto& c = u.columns[i];
      if (c == "trace" || c.ends_with("_std") || c.ends_with("_sem")) continue;
      if (c == "negativity_mean") continue;
      const auto find = [&](const std::string& name) {
        for (std::size_t k = 0; k < u.columns.size(); ++k)
          if (u.columns[k] == name) return k;
        return std::size_t(0);
      };
      const std::size_t si = c == "negativity_of_mean" ? find("negativity_of_mean_batch_sem") : find(c + "_sem");
      zmax = std::max(zmax, z_score(u.rows[t][i], r.rows[t][i], u.rows[t][si], r.rows[t][si], 1e-9));
    }
    p.rows.push_back({u.rows[t][0], td, zmax, zmax <= 3.0 ? 1.0 : 0.0});
  }
  return p;
}

}  // namespace

RunResult run(const RunConfig& cfg, bool write_files) {
  const auto t0 = std::chrono::steady_clock::now();
  const Setup su = resolve(cfg);
  const auto& sc = su.sc;
  RunResult res;
  for (const auto& s : cfg.solvers) res.runs.push_back(run_solver(s, su, cfg));

  json meta;
  meta["version"] = SEPDYN_VERSION;
  meta["scenario"] = sc.name;
  meta["seed"] = cfg.seed;
  json echo;
  echo["scenario"] = sc.name;
  echo["t_final"] = sc.t_final;
  echo["dt"] = sc.dt;
  echo["n_traj"] = sc.n_traj;
  echo["seed"] = cfg.seed;
  echo["solvers"] = cfg.solvers;
  echo["threads"] = cfg.threads;
  echo["n_batches"] = cfg.n_batches;
  echo["weighting"] = cfg.weighting == Weighting::restricted ? "restricted" : "unrestricted";
  echo["exact"] = cfg.exact;
  if (cfg.initial) echo["initial"] = *cfg.initial;
  if (cfg.initial_json) echo["initial"] = json::parse(*cfg.initial_json);
  if (cfg.model_json) echo["model"] = json::parse(*cfg.model_json);
  meta["config"] = echo;
  std::vector<std::string> labels = {"no-jump"};
  for (const auto& l : sc.model.labels) labels.push_back(l);
  meta["branch_labels"] = labels;

  if (cfg.exact) {
    // closed-form swap columns; gamma = 1 and |psi1 psi2> taken from the product initial state
    const double gamma = 1.0;
    json dev;
    for (auto& r : res.runs) {
      std::vector<std::string> names;
      for (const auto& o : sc.observables) names.push_back(o.name);
      for (const auto& n : names) r.columns.push_back("exact_full_" + n);
      if (su.product)
        for (const auto& n : names) r.columns.push_back("exact_restricted_" + n);
      double dmax = 0.0;
      const bool restricted = restricted_solver(r.solver);
      for (std::size_t t = 0; t < r.rows.size(); ++t) {
        const Mat full = swap_analytic_full(r.rows[t][0], gamma, projector(su.psi0));
        for (const auto& o : sc.observables) r.rows[t].push_back(std::real((o.P * full).trace()));
        Mat rest;
        if (su.product) {
          rest = swap_analytic_restricted(static_cast<int>(t), sc.dt, gamma, (*su.product)[0], (*su.product)[1]);
          for (const auto& o : sc.observables) r.rows[t].push_back(std::real((o.P * rest).trace()));
        }
        const Mat& oracle = restricted && su.product ? rest : full;
        dmax = std::max(dmax, (r.rho[t] / std::real(r.rho[t].trace()) - oracle).cwiseAbs().maxCoeff());
      }
      dev[r.solver] = dmax;
    }
    meta["exact_max_deviation"] = dev;
  }

  json solvers;
  for (const auto& r : res.runs) {
    json s;
    s["branch_counts"] = r.branch_counts;
    s["annihilation_events"] = r.annihilation_events;
    s["singular_events"] = r.singular_events;
    solvers[r.solver] = s;
  }
  meta["solvers"] = solvers;

  std::vector<SolverRun> pairs;
  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{
           {"mcwf", "sep-mcwf"}, {"lindblad", "sep-lindblad"}, {"sse", "sep-sse"}}) {
    const SolverRun *ua = nullptr, *rb = nullptr;
    for (const auto& r : res.runs) {
      if (r.solver == a) ua = &r;
      if (r.solver == b) rb = &r;
    }
    if (ua && rb) pairs.push_back(pair_series(*ua, *rb));
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  meta["wall_time_s"] = wall;

  if (write_files) {
    std::filesystem::create_directories(cfg.out_dir);
    for (const auto& r : res.runs) {
      const auto path = join_path(cfg.out_dir, sc.name + "_" + r.solver + ".csv");
      write_text(path, to_csv(r));
      res.files.push_back(path);
    }
    for (const auto& p : pairs) {
      const auto path = join_path(cfg.out_dir, sc.name + "_pair_" + p.solver + ".csv");
      write_text(path, to_csv(p));
      res.files.push_back(path);
    }
    const auto path = join_path(cfg.out_dir, sc.name + "_meta.json");
    write_text(path, meta.dump(2) + "\n");
    res.files.push_back(path);
  }
  for (auto& p : pairs) res.runs.push_back(std::move(p));
  return res;
}

int Table::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
  {
    std::istringstream h(line);
    std::string c;
    while (std::getline(h, c, ',')) t.columns.push_back(c);
  }
  int ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream h(line);
    std::string c;
    while (std::getline(h, c, ',')) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw std::invalid_argument("csv line " + std::to_string(ln) + ": bad number '" + c + "'");
      }
    }
    if (row.size() != t.columns.size())
      throw std::invalid_argument("csv line " + std::to_string(ln) + ": expected " + std::to_string(t.columns.size()) +
                                  " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

// Verdict observables: negativity of the mean state (batch SEM band) and every column X with an X_sem band.
// The per-trajectory negativity is reported but does not enter the verdict.
CompareReport compare(const Table& a, const Table& b, double sigma, double abs_tol) {
  const int ta = a.col("time"), tb = b.col("time");
  if (ta < 0 || tb < 0) throw std::invalid_argument("compare: missing time column");
  if (a.rows.size() != b.rows.size()) throw std::invalid_argument("compare: time grid mismatch (row counts differ)");
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    if (std::abs(a.rows[i][static_cast<std::size_t>(ta)] - b.rows[i][static_cast<std::size_t>(tb)]) > 1e-9)
      throw std::invalid_argument("compare: time grid mismatch at row " + std::to_string(i + 1));

  struct Spec {
    std::string name, value, sem;
    bool verdict;
  };
  std::vector<Spec> specs;
  if (a.col("negativity_of_mean") >= 0) specs.push_back({"negativity", "negativity_of_mean", "negativity_of_mean_batch_sem", true});
  if (a.col("negativity_mean") >= 0) specs.push_back({"negativity_trajectory_mean", "negativity_mean", "negativity_sem", false});
  for (const auto& c : a.columns) {
    if (c.rfind("negativity", 0) == 0 || c == "time" || c == "trace") continue;
    if (a.col(c + "_sem") >= 0) specs.push_back({c, c, c + "_sem", true});
  }
  CompareReport rep;
  for (const auto& s : specs) {
    const int va = a.col(s.value), vb = b.col(s.value), sa = a.col(s.sem), sb = b.col(s.sem);
    if (vb < 0 || sa < 0 || sb < 0) continue;
    ObservableReport o;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      const double x = a.rows[i][static_cast<std::size_t>(va)], y = b.rows[i][static_cast<std::size_t>(vb)];
      o.max_abs_dev = std::max(o.max_abs_dev, std::abs(x - y));
      const double z =
          z_score(x, y, a.rows[i][static_cast<std::size_t>(sa)], b.rows[i][static_cast<std::size_t>(sb)], abs_tol);
      o.z.push_back(z);
      o.max_z = std::max(o.max_z, z);
    }
    o.compatible = o.max_z <= sigma;
    if (s.verdict && !o.compatible) rep.compatible = false;
    rep.observables[s.name] = std::move(o);
  }
  return rep;
}

std::string report_json(const CompareReport& r) {
  json j;
  j["verdict"] = r.compatible ? "compatible" : "divergent";
  json obs;
  for (const auto& [name, o] : r.observables) {
    json e;
    e["max_abs_deviation"] = o.max_abs_dev;
    e["max_z"] = std::isfinite(o.max_z) ? json(o.max_z) : json("inf");
    e["verdict"] = o.compatible ? "compatible" : "divergent";
    if (name == "negativity_trajectory_mean") e["informational"] = true;
    json z = json::array();
    for (double v : o.z) z.push_back(std::isfinite(v) ? json(v) : json("inf"));
    e["z"] = z;
    obs[name] = e;
  }
  j["observables"] = obs;
  return j.dump(2);
}

}  // namespace sepdyn::app
