#pragma once

// Experiment harness behind the CLI: metrics CSV export, runs and sweeps,
// bound tables, gradient and identity self-checks, and the pass-rate-binned
// advantage diagnostic.
//
// Exit codes: 0 success, 1 a self-check failed, 2 usage or config error,
// 3 numerical abort during training.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdlab/config.hpp"
#include "sdlab/trainer.hpp"

namespace sdlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Shortest decimal that round-trips the double.
std::string format_double(double x);

// step,mean_pass_rate,bin_0..bin_8,frac_mid_wide,frac_mid_narrow,grad_norm,
// grad_norm_raw,loss,mean_weight,active_questions
extern const char* const kMetricsHeader;
void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& metrics);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& metrics);

std::string run_file_stem(const std::string& label, std::uint64_t seed);

// Train, then write <out>/<method>_<seed>.csv and <out>/<method>_<seed>.ckpt.json.
int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed_override, std::ostream& log);

struct AggregateRow {
  std::string label;
  std::size_t step = 0;
  std::size_t seeds = 0;
  double mean_pass_rate = 0.0;
  double frac_mid_wide = 0.0;
  double frac_mid_narrow = 0.0;
  double grad_norm = 0.0;
};

struct SweepRun {
  std::string label;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<StepMetrics> metrics;
};

struct SweepResult {
  std::vector<SweepRun> runs;  // method-major, then seed order
  std::vector<AggregateRow> aggregate;
};

// Seed-mean of each metric per (label, step) over the successful runs.
std::vector<AggregateRow> aggregate_runs(const std::vector<SweepRun>& runs);

// Runs every (method, seed). Failed runs are recorded and skipped. When
// out_dir is non-empty writes one CSV per run plus aggregate.csv.
SweepResult run_sweep(const ExperimentSpec& spec, const Task& task,
                      const std::filesystem::path& out_dir);

int cmd_sweep(const std::filesystem::path& spec_path, std::optional<std::filesystem::path> out_dir,
              std::optional<std::size_t> jobs, std::ostream& log);

// p,beta,kl_raw,kl_normalized,leading_term,residual,residual_slope. The slope is
// the log-log residual fit over beta in {10, 20, 40, 80}, repeated on each row of p.
void write_bounds_csv(std::ostream& out, const std::vector<double>& p_grid,
                      const std::vector<double>& beta_grid);
int cmd_bounds(const std::vector<double>& p_grid, const std::vector<double>& beta_grid,
               const std::optional<std::filesystem::path>& out_dir, std::ostream& log);

struct GradcheckReport {
  std::size_t instances = 0;
  double max_rel_err = 0.0;
  double max_rel_err_kl = 0.0;
  double max_rel_err_jsd = 0.0;
  bool stop_gradient_ok = false;
  bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-5;
inline constexpr double kGradcheckStep = 1e-5;

// Relative error ||a - b|| / max(||a||, ||b||) (0 when both vanish).
double gradient_rel_error(const Matrix& analytic, const Matrix& numeric);

// Central finite differences of the distillation loss with respect to W.
Matrix numeric_distillation_gradient(const std::vector<RolloutGroup>& groups, const Task& task,
                                     PolicyParams params, const DistillationSpec& spec,
                                     const std::vector<double>& weights, double h);

// Random instances over {kl, jsd} x {weighted, unweighted} (V=8, d=4, L=2).
// corrupt perturbs the analytic gradient (negative control).
GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t instances, bool corrupt = false);
int cmd_gradcheck(std::uint64_t seed, std::size_t instances, bool corrupt, std::ostream& log);

struct IdentityReport {
  double max_magnitude_err = 0.0;  // |sum|A| - 2G sqrt(p(1-p))| over G in 2..16
  bool magnitude_ok = false;
  bool symmetry_ok = false;
  bool unimodal_ok = false;
  bool unit_mean_ok = false;
  bool passed = false;
};
IdentityReport run_identity_checks();
int cmd_identity(std::ostream& log);

struct FlatBin {
  std::size_t successes = 0;  // pass rate = successes / rollouts_per_question
  double pass_rate = 0.0;
  std::size_t questions = 0;
  std::size_t rollouts = 0;
  double kl_mean = 0.0, kl_std = 0.0;
  double jsd_mean = 0.0, jsd_std = 0.0;
  double adv_kl_mean = 0.0, adv_kl_std = 0.0;
  double adv_jsd_mean = 0.0, adv_jsd_std = 0.0;
};

// Per-rollout token-averaged KL, JSD and advantage magnitudes at the sampled
// tokens, grouped by the question's pass rate. Questions with no success are
// excluded.
std::vector<FlatBin> flat_advantage(const PolicyParams& params, const Task& task,
                                    std::size_t rollouts_per_question, std::size_t top_k,
                                    double temperature, std::uint64_t seed);
void write_flat_advantage_csv(std::ostream& out, const std::vector<FlatBin>& bins);
int cmd_flat_advantage(const std::optional<std::filesystem::path>& config_path,
                       const std::optional<std::filesystem::path>& checkpoint,
                       const std::optional<std::filesystem::path>& task_file,
                       const std::optional<std::filesystem::path>& out_dir,
                       std::size_t rollouts_per_question, std::optional<std::uint64_t> seed,
                       std::ostream& log);

}  // namespace sdlab
