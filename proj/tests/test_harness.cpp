#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sdlab/harness.hpp"

using namespace sdlab;
namespace fs = std::filesystem;
using doctest::Approx;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

using Table = std::vector<std::map<std::string, std::string>>;

Table read_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  Table rows;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::map<std::string, std::string> row;
    std::size_t i = 0;
    for (std::string cell; std::getline(ls, cell, ',');) row[header.at(i++)] = cell;
    rows.push_back(row);
  }
  return rows;
}

const std::string kSmallTask =
    R"("task": {"seed": 1, "num_questions": 16, "vocab": 8, "length": 2, "context_dim": 8})";

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SDLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("format_double round-trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5, 0.0, 123456789.125}) {
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("metrics CSV has the documented header and one row per step") {
  std::vector<StepMetrics> ms(3);
  ms[1].step = 1;
  ms[1].bin_counts[4] = 32;
  ms[2].step = 2;
  std::ostringstream out;
  write_metrics_csv(out, ms);
  const std::string text = out.str();
  CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  const auto rows = read_csv(text);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].at("bin_4") == "32");
  CHECK(rows[2].at("step") == "2");
  CHECK(rows[0].size() == 18);
  CHECK(text.find('\r') == std::string::npos);
}

TEST_CASE("cmd_run writes metrics and checkpoint, reproducibly") {
  TempDir dir("sdlab_test_run");
  const fs::path cfg = dir.path / "cfg.json";
  write(cfg, "{" + kSmallTask + R"(, "train": {"method": "sc_sdpo", "steps": 200, "batch_size": 8}})");
  std::ostringstream log;
  REQUIRE(cmd_run(cfg, dir.path / "a", std::nullopt, log) == kExitOk);
  REQUIRE(cmd_run(cfg, dir.path / "b", std::nullopt, log) == kExitOk);
  const std::string a = slurp(dir.path / "a" / "sc_sdpo_0.csv");
  CHECK(read_csv(a).size() == 200);
  CHECK(a == slurp(dir.path / "b" / "sc_sdpo_0.csv"));
  CHECK(fs::exists(dir.path / "a" / "sc_sdpo_0.ckpt.json"));
  const auto ckpt = PolicyParams::load_json(dir.path / "a" / "sc_sdpo_0.ckpt.json");
  CHECK(ckpt.step == 200);

  REQUIRE(cmd_run(cfg, dir.path / "c", 5, log) == kExitOk);
  CHECK(fs::exists(dir.path / "c" / "sc_sdpo_5.csv"));
  CHECK(slurp(dir.path / "c" / "sc_sdpo_5.csv") != a);
}

TEST_CASE("cmd_run exit codes") {
  TempDir dir("sdlab_test_run_errors");
  std::ostringstream log;
  CHECK(cmd_run(dir.path / "missing.json", dir.path, std::nullopt, log) == kExitUsage);
  write(dir.path / "bad.json", "{\n  \"train\": {\"alpha\": 0}\n}");
  CHECK(cmd_run(dir.path / "bad.json", dir.path, std::nullopt, log) == kExitUsage);
  write(dir.path / "boom.json",
        "{" + kSmallTask + R"(, "train": {"method": "sdpo", "divergence": "kl", "feedback_gain": 1e4, "steps": 2}})");
  CHECK(cmd_run(dir.path / "boom.json", dir.path, std::nullopt, log) == kExitNumerical);
}

TEST_CASE("sweep writes one CSV per run and a seed-mean aggregate") {
  TempDir dir("sdlab_test_sweep");
  const fs::path spec = dir.path / "spec.json";
  write(spec, "{" + kSmallTask + R"(, "train": {"steps": 6, "batch_size": 8},
    "methods": [{"method": "sdpo"}, {"method": "sc_sdpo"}],
    "seeds": [0, 1, 2, 3, 4], "out": ")" + (dir.path / "out").string() + R"(", "jobs": 3})");
  std::ostringstream log;
  REQUIRE(cmd_sweep(spec, std::nullopt, std::nullopt, log) == kExitOk);
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "out"))
    if (e.path().extension() == ".csv") ++csvs;
  CHECK(csvs == 11);

  const auto agg = read_csv(slurp(dir.path / "out" / "aggregate.csv"));
  CHECK(agg.size() == 2 * 6);
  for (const std::string label : {"sdpo", "sc_sdpo"}) {
    double sum = 0.0;
    for (int s = 0; s < 5; ++s) {
      const auto rows = read_csv(slurp(dir.path / "out" / (label + "_" + std::to_string(s) + ".csv")));
      sum += std::stod(rows.at(1).at("mean_pass_rate"));
    }
    for (const auto& row : agg)
      if (row.at("label") == label && row.at("step") == "1") {
        CHECK(row.at("seeds") == "5");
        CHECK(std::stod(row.at("mean_pass_rate")) == Approx(sum / 5).epsilon(1e-15));
      }
  }

  // Parallelism does not change the results.
  REQUIRE(cmd_sweep(spec, dir.path / "serial", std::size_t{1}, log) == kExitOk);
  CHECK(slurp(dir.path / "serial" / "aggregate.csv") == slurp(dir.path / "out" / "aggregate.csv"));
}

TEST_CASE("aggregate skips failed runs") {
  std::vector<SweepRun> runs(3);
  for (int i = 0; i < 3; ++i) {
    runs[i].label = "m";
    runs[i].seed = i;
    runs[i].ok = i != 1;
    runs[i].metrics.resize(2);
    runs[i].metrics[0].mean_pass_rate = i;
  }
  const auto agg = aggregate_runs(runs);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].seeds == 2);
  CHECK(agg[0].mean_pass_rate == 1.0);
}

TEST_CASE("bounds table") {
  std::vector<double> ps;
  for (int i = 1; i <= 9; ++i) ps.push_back(i / 10.0);
  std::ostringstream out;
  write_bounds_csv(out, ps, {10, 20, 40, 80, 100, 1000, 10000});
  const auto rows = read_csv(out.str());
  CHECK(rows.size() == 9 * 7);
  for (const auto& r : rows) {
    const double p = std::stod(r.at("p")), beta = std::stod(r.at("beta"));
    const double kn = std::stod(r.at("kl_normalized"));
    if (p == 0.5 && beta == 10) {
      CHECK(kn == Approx(0.00499168).epsilon(1e-6));
      CHECK(std::stod(r.at("leading_term")) == 0.005);
      CHECK(std::stod(r.at("residual_slope")) == Approx(-4.0).epsilon(0.025));
    }
    if (beta >= 100) {
      CHECK(kn * 2 * beta * beta >= 0.95);
      CHECK(kn * 2 * beta * beta <= 1.05);
    }
    if (beta == 10000)
      CHECK(std::stod(r.at("kl_raw")) * 2 * beta * beta / (p * (1 - p)) == Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("gradcheck passes and its negative control fails") {
  const GradcheckReport ok = run_gradcheck(0, 20);
  CHECK(ok.passed);
  CHECK(ok.stop_gradient_ok);
  CHECK(ok.max_rel_err < kGradcheckTolerance);
  CHECK(ok.instances == 20);
  const GradcheckReport bad = run_gradcheck(0, 2, true);
  CHECK_FALSE(bad.passed);
  CHECK(bad.max_rel_err > kGradcheckTolerance);
}

TEST_CASE("identity checks pass") {
  const IdentityReport r = run_identity_checks();
  CHECK(r.passed);
  CHECK(r.max_magnitude_err <= 1e-9);
}

TEST_CASE("flat-advantage diagnostic") {
  TaskParams tp;
  const Task task = generate_task(tp);
  const PolicyParams fresh = init_policy(task, 3.0, 0.05);
  const auto bins = flat_advantage(fresh, task, 16, 100, 0.6, 0);
  CHECK(bins.size() <= 16);
  std::size_t questions = 0;
  for (const auto& b : bins) {
    CHECK(b.successes > 0);
    CHECK(b.pass_rate == b.successes / 16.0);
    CHECK(b.rollouts == 16 * b.questions);
    CHECK(b.adv_jsd_mean > 0.0);
    CHECK(b.adv_jsd_mean <= 0.5 * std::log(2.0) * 2.0 + 1e-12);
    questions += b.questions;
  }
  CHECK(questions <= task.questions.size());
  CHECK(flat_advantage(fresh, task, 16, 100, 0.6, 0).size() == bins.size());

  const PolicyParams blind = init_policy(task, 0.0, 0.05, 0.3, 1);
  for (const auto& b : flat_advantage(blind, task, 16, 100, 0.6, 0)) {
    CHECK(b.kl_mean == 0.0);
    CHECK(b.jsd_mean == 0.0);
    CHECK(b.adv_kl_mean == 0.0);
    CHECK(b.adv_jsd_mean == 0.0);
  }

  std::ostringstream out;
  write_flat_advantage_csv(out, bins);
  const auto rows = read_csv(out.str());
  CHECK(rows.size() == bins.size());
  for (const char* col : {"kl_mean", "kl_std", "jsd_mean", "jsd_std", "adv_kl_mean", "adv_kl_std",
                          "adv_jsd_mean", "adv_jsd_std"})
    CHECK(rows.at(0).count(col) == 1);
}

TEST_CASE("command-line exit codes") {
  TempDir dir("sdlab_test_cli");
  const fs::path cfg = dir.path / "cfg.json";
  write(cfg, "{" + kSmallTask + R"(, "train": {"steps": 3, "batch_size": 4}})");
  const std::string out = " --out " + (dir.path / "out").string();
  CHECK(run_cli("run --config " + cfg.string() + out) == 0);
  CHECK(fs::exists(dir.path / "out" / "sc_sdpo_0.csv"));
  CHECK(run_cli("--seed 3 run --config " + cfg.string() + out) == 0);
  CHECK(fs::exists(dir.path / "out" / "sc_sdpo_3.csv"));
  CHECK(run_cli("run --config " + (dir.path / "nope.json").string()) == 2);
  CHECK(run_cli("run") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("identity") == 0);
  CHECK(run_cli("gradcheck --instances 2") == 0);
  CHECK(run_cli("gradcheck --instances 2 --corrupt-gradient") == 1);
  CHECK(run_cli("bounds --p 0.2,0.5 --beta 10,20" + out) == 0);
  CHECK(read_csv(slurp(dir.path / "out" / "bounds.csv")).size() == 4);
  CHECK(run_cli("flat-advantage --config " + cfg.string() + out) == 0);
  CHECK(fs::exists(dir.path / "out" / "flat_advantage.csv"));
  CHECK(run_cli("flat-advantage --config " + cfg.string() + " --checkpoint " +
                (dir.path / "out" / "sc_sdpo_0.ckpt.json").string() + out) == 0);
}
