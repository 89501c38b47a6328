#include "app.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sepdyn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sepdyn_test_" + name);
  fs::remove_all(p);
  return p;
}

app::RunConfig small(const std::string& scenario) {
  app::RunConfig c;
  c.scenario = scenario;
  c.t_final = 1.0;
  c.n_traj = 40;
  return c;
}

}  // namespace

TEST(Config, ParsesFieldsAndRejectsBadOnes) {
  const auto c = app::parse_config(R"({"scenario": "cnot", "initial": "10", "dt": 0.1, "t_final": 2,
                                       "n_traj": 50, "seed": 3, "solvers": ["lindblad"], "threads": 2})");
  EXPECT_EQ(c.scenario, "cnot");
  EXPECT_EQ(*c.initial, "10");
  EXPECT_DOUBLE_EQ(*c.dt, 0.1);
  EXPECT_EQ(*c.n_traj, 50);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.solvers, std::vector<std::string>{"lindblad"});
  EXPECT_EQ(c.threads, 2);

  auto msg = [](const std::string& text) {
    try {
      app::resolve(app::parse_config(text));
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(msg(R"({"dt": "x"})").find("'dt'"), std::string::npos);
  EXPECT_NE(msg(R"({"dt": -1})").find("'dt'"), std::string::npos);
  EXPECT_NE(msg(R"({"bogus": 1})").find("'bogus'"), std::string::npos);
  EXPECT_NE(msg(R"({"solvers": ["euler"]})").find("'solvers'"), std::string::npos);
  EXPECT_NE(msg("{\n \"dt\": 0.1,\n}").find("line 3"), std::string::npos);
  EXPECT_NE(msg(R"({"t_final": 0.05, "dt": 0.1})").find("'t_final'"), std::string::npos);
}

TEST(Config, EntangledInitialStateIsRejectedForRestrictedSolvers) {
  const auto text = R"({"scenario": "bell-decay", "solvers": ["sep-mcwf"],
                        "initial": {"vector": [0, [0.7071067811865476, 0], [0.7071067811865476, 0], 0]}})";
  try {
    app::resolve(app::parse_config(text));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("product_defect"), std::string::npos);
  }
  // the same state is fine for an unrestricted solver
  const auto ok = R"({"scenario": "bell-decay", "solvers": ["lindblad"],
                      "initial": {"vector": [0, [0.7071067811865476, 0], [0.7071067811865476, 0], 0]}})";
  EXPECT_NO_THROW(app::resolve(app::parse_config(ok)));
}

TEST(Config, InlineModel) {
  const auto text = R"({
    "model": {"dims": [2, 2],
              "H": [0,0,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,0],
              "L": [{"label": "swap", "rate": 1.0,
                     "matrix": [1,0,0,0, 0,0,1,0, 0,1,0,0, 0,0,0,1]}],
              "observables": ["01", "10"]},
    "initial": {"factors": [[1, 0], [0, 1]]},
    "solvers": ["lindblad"], "dt": 0.001, "t_final": 1})";
  auto cfg = app::parse_config(text);
  const auto res = app::run(cfg, false);
  ASSERT_EQ(res.runs.size(), 1u);
  const auto& r = res.runs[0];
  const int c01 = static_cast<int>(std::find(r.columns.begin(), r.columns.end(), "p01") - r.columns.begin());
  EXPECT_NEAR(r.rows.back()[static_cast<std::size_t>(c01)], std::exp(-1.0) * std::cosh(1.0), 1e-5);
}

TEST(Config, ProductLabels) {
  const SystemShape s{2, 3};
  const auto p = app::parse_product_label("+2", s);
  EXPECT_NEAR(std::abs(p[0](0)), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(std::abs(p[1](2)), 1.0, 1e-15);
  EXPECT_THROW(app::parse_product_label("3", s), std::invalid_argument);
  EXPECT_THROW(app::parse_product_label("0x", s), std::invalid_argument);
}

TEST(Run, WritesCsvAndMeta) {
  auto cfg = small("bell-decay");
  const auto dir = scratch("run");
  cfg.out_dir = dir.string();
  const auto res = app::run(cfg);
  EXPECT_TRUE(fs::exists(dir / "bell-decay_mcwf.csv"));
  EXPECT_TRUE(fs::exists(dir / "bell-decay_sep-mcwf.csv"));
  EXPECT_TRUE(fs::exists(dir / "bell-decay_pair_mcwf_vs_sep-mcwf.csv"));
  const auto meta = slurp((dir / "bell-decay_meta.json").string());
  for (const char* key : {"\"version\"", "\"seed\"", "\"wall_time_s\"", "\"annihilation_events\"", "\"config\""})
    EXPECT_NE(meta.find(key), std::string::npos) << key;
  const auto t = app::read_csv((dir / "bell-decay_mcwf.csv").string());
  EXPECT_EQ(t.columns.front(), "time");
  EXPECT_EQ(t.columns.back(), "trace");
  EXPECT_GE(t.col("negativity_mean"), 0);
  EXPECT_GE(t.col("negativity_std"), 0);
  EXPECT_GE(t.col("ground"), 0);
  const int g = t.col("ground"), m = t.col("intermediate"), e = t.col("excited");
  for (const auto& row : t.rows) {
    EXPECT_NEAR(row[static_cast<std::size_t>(g)] + row[static_cast<std::size_t>(m)] + row[static_cast<std::size_t>(e)], 1.0, 1e-8);
    EXPECT_NEAR(row.back(), 1.0, 1e-10);
  }
  // 17 significant digits reproduce the doubles exactly
  const auto again = app::parse_csv(app::to_csv(res.runs[0]));
  EXPECT_EQ(again.rows, res.runs[0].rows);
}

TEST(Run, ByteIdenticalAcrossThreadCounts) {
  auto cfg = small("product-decay-rotated");
  cfg.solvers = {"mcwf", "sep-mcwf", "sse", "sep-sse"};
  cfg.dt = 0.05;
  const auto a = scratch("serial"), b = scratch("threads");
  cfg.out_dir = a.string();
  app::run(cfg);
  cfg.out_dir = b.string();
  cfg.threads = 4;
  app::run(cfg);
  for (const char* f : {"mcwf", "sep-mcwf", "sse", "sep-sse"}) {
    const std::string name = std::string("product-decay-rotated_") + f + ".csv";
    EXPECT_EQ(slurp((a / name).string()), slurp((b / name).string())) << name;
  }
}

TEST(Run, SwapExactColumns) {
  app::RunConfig cfg;
  cfg.scenario = "swap";
  cfg.solvers = {"sep-lindblad", "lindblad"};
  cfg.exact = true;
  cfg.dt = 0.01;
  const auto res = app::run(cfg, false);
  const auto& r = res.runs[0];
  EXPECT_NE(std::find(r.columns.begin(), r.columns.end(), "exact_restricted_p01"), r.columns.end());
  EXPECT_NE(std::find(r.columns.begin(), r.columns.end(), "exact_full_p01"), r.columns.end());
  const auto col = [&](const std::string& n) {
    return static_cast<std::size_t>(std::find(r.columns.begin(), r.columns.end(), n) - r.columns.begin());
  };
  for (const auto& row : r.rows) EXPECT_NEAR(row[col("p01")], row[col("exact_restricted_p01")], 1e-12);
  auto bad = cfg;
  bad.scenario = "cnot";
  EXPECT_THROW(app::resolve(bad), std::invalid_argument);
}

TEST(Compare, IdenticalRunsAreCompatible) {
  auto cfg = small("product-decay");
  const auto res = app::run(cfg, false);
  const auto t = app::parse_csv(app::to_csv(res.runs[0]));
  const auto rep = app::compare(t, t);
  EXPECT_TRUE(rep.compatible);
  for (const auto& [n, o] : rep.observables) {
    EXPECT_EQ(o.max_abs_dev, 0.0) << n;
    EXPECT_EQ(o.max_z, 0.0) << n;
  }
  EXPECT_NE(app::report_json(rep).find("\"compatible\""), std::string::npos);
}

TEST(Compare, GridMismatch) {
  auto a = app::parse_csv("time,x,x_sem\n0,1,0\n0.1,1,0\n");
  auto b = app::parse_csv("time,x,x_sem\n0,1,0\n0.2,1,0\n");
  EXPECT_THROW(app::compare(a, b), std::invalid_argument);
  auto c = app::parse_csv("time,x,x_sem\n0,1,0\n");
  EXPECT_THROW(app::compare(a, c), std::invalid_argument);
  EXPECT_THROW(app::parse_csv("time,x\n0,abc\n"), std::invalid_argument);
}

TEST(Compare, ZScores) {
  const auto a = app::parse_csv("time,x,x_sem\n0,1.0,0.1\n");
  const auto b = app::parse_csv("time,x,x_sem\n0,1.5,0.0\n");
  const auto rep = app::compare(a, b);
  EXPECT_NEAR(rep.observables.at("x").max_z, 5.0, 1e-12);
  EXPECT_FALSE(rep.compatible);
}
