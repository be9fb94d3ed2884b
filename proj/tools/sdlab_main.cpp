// sdlab: command-line front end for the self-distillation toy lab.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdlab/error.hpp"
#include "sdlab/harness.hpp"

namespace {

template <typename T>
std::optional<T> opt_if(const CLI::Option* opt, const T& value) {
  if (opt->count() == 0) return std::nullopt;
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sdlab;
  namespace fs = std::filesystem;

  CLI::App app{"Self-distillation toy lab: training runs, sweeps and self-checks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string out, config;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out, "Output directory");
  auto* config_opt = app.add_option("--config", config, "JSON config file");

  auto* run = app.add_subcommand("run", "Train one method and write metrics and a checkpoint");

  auto* sweep = app.add_subcommand("sweep", "Run every (method, seed) of a sweep spec");
  std::string spec_path;
  std::size_t jobs = 1;
  auto* spec_opt = sweep->add_option("spec", spec_path, "Sweep spec JSON (or --config)");
  auto* jobs_opt = sweep->add_option("--jobs,-j", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* bounds = app.add_subcommand("bounds", "Tabulate the learnability KL against its leading term");
  std::vector<double> p_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> beta_grid{1, 2, 5, 10, 20, 40, 80, 100, 200, 500, 1000};
  bounds->add_option("--p", p_grid, "Pass probabilities in (0, 1)")->delimiter(',');
  bounds->add_option("--beta", beta_grid, "KL-regularization strengths")->delimiter(',');

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of distillation gradients");
  std::size_t instances = 20;
  bool corrupt = false;
  gradcheck->add_option("--instances", instances, "Random instances")->check(CLI::PositiveNumber);
  gradcheck->add_flag("--corrupt-gradient", corrupt, "Perturb the analytic gradient (negative control)")
      ->group("");

  auto* identity = app.add_subcommand("identity", "Exhaustive advantage and weighting identities");

  auto* flat = app.add_subcommand("flat-advantage", "Per-token advantage magnitudes binned by pass rate");
  std::string checkpoint, task_file;
  std::size_t rollouts = 16;
  auto* ckpt_opt = flat->add_option("--checkpoint", checkpoint, "Policy checkpoint (default: fresh policy)");
  auto* task_opt = flat->add_option("--task", task_file, "Saved task JSON (default: from config)");
  flat->add_option("--rollouts", rollouts, "Rollouts per question")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const auto seed_o = opt_if(seed_opt, seed);
  const auto out_o = opt_if(out_opt, fs::path(out));
  const auto config_o = opt_if(config_opt, fs::path(config));

  try {
    if (*run) {
      if (!config_o) {
        std::cerr << "run: --config is required\n";
        return kExitUsage;
      }
      return cmd_run(*config_o, out_o.value_or("results"), seed_o, std::cerr);
    }
    if (*sweep) {
      std::optional<fs::path> path = opt_if(spec_opt, fs::path(spec_path));
      if (!path) path = config_o;
      if (!path) {
        std::cerr << "sweep: a spec file is required\n";
        return kExitUsage;
      }
      return cmd_sweep(*path, out_o, opt_if(jobs_opt, jobs), std::cerr);
    }
    if (*bounds) return cmd_bounds(p_grid, beta_grid, out_o, std::cerr);
    if (*gradcheck) return cmd_gradcheck(seed_o.value_or(0), instances, corrupt, std::cout);
    if (*identity) return cmd_identity(std::cout);
    if (*flat)
      return cmd_flat_advantage(config_o, opt_if(ckpt_opt, fs::path(checkpoint)),
                                opt_if(task_opt, fs::path(task_file)), out_o, rollouts, seed_o,
                                std::cerr);
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
