#include "sdlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "sdlab/advantage.hpp"
#include "sdlab/error.hpp"
#include "sdlab/learnability.hpp"

namespace sdlab {

namespace fs = std::filesystem;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

const char* const kMetricsHeader =
    "step,mean_pass_rate,bin_0,bin_1,bin_2,bin_3,bin_4,bin_5,bin_6,bin_7,bin_8,"
    "frac_mid_wide,frac_mid_narrow,grad_norm,grad_norm_raw,loss,mean_weight,active_questions";

void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& metrics) {
  out << kMetricsHeader << '\n';
  for (const auto& m : metrics) {
    out << m.step << ',' << format_double(m.mean_pass_rate);
    for (std::size_t c : m.bin_counts) out << ',' << c;
    out << ',' << format_double(m.frac_mid_wide) << ',' << format_double(m.frac_mid_narrow) << ','
        << format_double(m.grad_norm) << ',' << format_double(m.grad_norm_raw) << ','
        << format_double(m.loss) << ',' << format_double(m.mean_weight) << ','
        << m.active_questions << '\n';
  }
}

void write_metrics_csv(const fs::path& path, const std::vector<StepMetrics>& metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_metrics_csv(out, metrics);
}

std::string run_file_stem(const std::string& label, std::uint64_t seed) {
  return label + "_" + std::to_string(seed);
}

namespace {

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError(dir.string() + ": cannot create output directory");
}

}  // namespace

int cmd_run(const fs::path& config_path, const fs::path& out_dir,
            std::optional<std::uint64_t> seed_override, std::ostream& log) {
  RunConfig rc;
  Task task;
  try {
    rc = load_run_config(config_path);
    if (seed_override) rc.train.seed = *seed_override;
    task = rc.make_task();
    ensure_dir(out_dir);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  TrainResult result;
  try {
    result = run_training(rc.train, task);
  } catch (const NumericalAbort& e) {
    log << "training aborted: " << e.what();
    return kExitNumerical;
  }
  const std::string stem = run_file_stem(method_name(rc.train.method), rc.train.seed);
  write_metrics_csv(out_dir / (stem + ".csv"), result.metrics);
  result.final_params.save_json(out_dir / (stem + ".ckpt.json"));
  const auto& last = result.metrics.back();
  log << stem << ": " << result.metrics.size() << " steps, final mean pass rate "
      << format_double(last.mean_pass_rate) << '\n';
  return kExitOk;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<SweepRun>& runs) {
  std::vector<AggregateRow> rows;
  std::vector<std::string> labels;
  for (const auto& r : runs)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  for (const auto& label : labels) {
    std::vector<const SweepRun*> ok;
    for (const auto& r : runs)
      if (r.label == label && r.ok) ok.push_back(&r);
    if (ok.empty()) continue;
    std::size_t steps = ok.front()->metrics.size();
    for (const auto* r : ok) steps = std::min(steps, r->metrics.size());
    for (std::size_t s = 0; s < steps; ++s) {
      AggregateRow row;
      row.label = label;
      row.step = s;
      row.seeds = ok.size();
      for (const auto* r : ok) {
        const auto& m = r->metrics[s];
        row.mean_pass_rate += m.mean_pass_rate;
        row.frac_mid_wide += m.frac_mid_wide;
        row.frac_mid_narrow += m.frac_mid_narrow;
        row.grad_norm += m.grad_norm;
      }
      const double n = static_cast<double>(ok.size());
      row.mean_pass_rate /= n;
      row.frac_mid_wide /= n;
      row.frac_mid_narrow /= n;
      row.grad_norm /= n;
      rows.push_back(row);
    }
  }
  return rows;
}

SweepResult run_sweep(const ExperimentSpec& spec, const Task& task, const fs::path& out_dir) {
  SweepResult result;
  for (const auto& m : spec.methods)
    for (std::uint64_t seed : spec.seeds) {
      SweepRun r;
      r.label = m.label;
      r.seed = seed;
      result.runs.push_back(std::move(r));
    }
  ensure_dir(out_dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      SweepRun& run = result.runs[i];
      const SweepMethod& method = spec.methods[i / spec.seeds.size()];
      TrainConfig cfg = method.train;
      cfg.seed = run.seed;
      try {
        run.metrics = run_training(cfg, task).metrics;
        run.ok = true;
        if (!out_dir.empty())
          write_metrics_csv(out_dir / (run_file_stem(run.label, run.seed) + ".csv"), run.metrics);
      } catch (const Error& e) {
        run.error = e.what();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(spec.jobs, 1, result.runs.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
  }

  result.aggregate = aggregate_runs(result.runs);
  if (!out_dir.empty()) {
    std::ofstream out(out_dir / "aggregate.csv", std::ios::binary);
    out << "label,step,seeds,mean_pass_rate,frac_mid_wide,frac_mid_narrow,grad_norm\n";
    for (const auto& row : result.aggregate)
      out << row.label << ',' << row.step << ',' << row.seeds << ','
          << format_double(row.mean_pass_rate) << ',' << format_double(row.frac_mid_wide) << ','
          << format_double(row.frac_mid_narrow) << ',' << format_double(row.grad_norm) << '\n';
  }
  return result;
}

int cmd_sweep(const fs::path& spec_path, std::optional<fs::path> out_dir,
              std::optional<std::size_t> jobs, std::ostream& log) {
  ExperimentSpec spec;
  Task task;
  try {
    spec = load_experiment_spec(spec_path);
    if (out_dir) spec.out_dir = *out_dir;
    if (jobs) spec.jobs = std::max<std::size_t>(1, *jobs);
    if (spec.out_dir.empty()) throw ConfigError(spec_path.string() + ":1: no output directory");
    task = spec.base.make_task();
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  const SweepResult res = run_sweep(spec, task, spec.out_dir);
  std::size_t failed = 0;
  for (const auto& r : res.runs) {
    if (r.ok) continue;
    ++failed;
    log << "run " << run_file_stem(r.label, r.seed) << " failed: " << r.error << '\n';
  }
  log << res.runs.size() - failed << "/" << res.runs.size() << " runs completed; aggregate in "
      << (spec.out_dir / "aggregate.csv").string() << '\n';
  return failed == 0 ? kExitOk : kExitNumerical;
}

void write_bounds_csv(std::ostream& out, const std::vector<double>& p_grid,
                      const std::vector<double>& beta_grid) {
  // Fixed fit grid: past beta ~ 100 the residual is near the rounding floor.
  const std::vector<double> fit_betas{10.0, 20.0, 40.0, 80.0};
  out << "p,beta,kl_raw,kl_normalized,leading_term,residual,residual_slope\n";
  for (double p : p_grid) {
    const double slope = verify_expansion(p, fit_betas).slope;
    for (double beta : beta_grid) {
      const double kn = exact_kl_normalized(p, beta);
      const double lead = leading_term_normalized(beta);
      out << format_double(p) << ',' << format_double(beta) << ','
          << format_double(exact_kl_raw(p, beta)) << ',' << format_double(kn) << ','
          << format_double(lead) << ',' << format_double(kn - lead) << ','
          << format_double(slope) << '\n';
    }
  }
}

int cmd_bounds(const std::vector<double>& p_grid, const std::vector<double>& beta_grid,
               const std::optional<fs::path>& out_dir, std::ostream& log) {
  try {
    if (p_grid.empty() || beta_grid.empty()) throw ParameterError("empty p or beta grid");
    if (out_dir) {
      ensure_dir(*out_dir);
      std::ofstream out(*out_dir / "bounds.csv", std::ios::binary);
      write_bounds_csv(out, p_grid, beta_grid);
      log << "wrote " << (*out_dir / "bounds.csv").string() << '\n';
    } else {
      write_bounds_csv(std::cout, p_grid, beta_grid);
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

double gradient_rel_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    diff += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    na += a.data[i] * a.data[i];
    nb += b.data[i] * b.data[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

namespace {

double loss_value(const std::vector<RolloutGroup>& groups, const Task& task,
                  const PolicyParams& params, const DistillationSpec& spec,
                  const std::vector<double>& weights) {
  return distillation_loss(groups, task, params, spec, weights,
                           std::vector<bool>(groups.size(), true))
      .loss;
}

// FD that also moves the teacher, as if gradients flowed through it.
Matrix numeric_coupled_gradient(const std::vector<RolloutGroup>& groups, const Task& task,
                                PolicyParams params, const DistillationSpec& spec,
                                const std::vector<double>& weights, double h) {
  Matrix g(params.W.rows, params.W.cols);
  for (std::size_t i = 0; i < params.W.data.size(); ++i) {
    const double w0 = params.W.data[i];
    params.W.data[i] = params.ema_W.data[i] = w0 + h;
    const double up = loss_value(groups, task, params, spec, weights);
    params.W.data[i] = params.ema_W.data[i] = w0 - h;
    const double down = loss_value(groups, task, params, spec, weights);
    params.W.data[i] = params.ema_W.data[i] = w0;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace

Matrix numeric_distillation_gradient(const std::vector<RolloutGroup>& groups, const Task& task,
                                     PolicyParams params, const DistillationSpec& spec,
                                     const std::vector<double>& weights, double h) {
  Matrix g(params.W.rows, params.W.cols);
  for (std::size_t i = 0; i < params.W.data.size(); ++i) {
    const double w0 = params.W.data[i];
    params.W.data[i] = w0 + h;
    const double up = loss_value(groups, task, params, spec, weights);
    params.W.data[i] = w0 - h;
    const double down = loss_value(groups, task, params, spec, weights);
    params.W.data[i] = w0;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t instances, bool corrupt) {
  GradcheckReport rep;
  rep.instances = instances;
  rep.stop_gradient_ok = true;
  Rng rng = make_stream(seed, 0, 0, /*tag=*/0x9c);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (std::size_t inst = 0; inst < instances; ++inst) {
    TaskParams tp;
    tp.seed = rng();
    tp.num_questions = 3;
    tp.vocab = 8;
    tp.length = 2;
    tp.context_dim = 4;
    const Task task = generate_task(tp);
    PolicyParams params = init_policy(task, 0.5 + 2.5 * unif(rng), 0.05, 0.5, rng());
    for (double& w : params.ema_W.data) w += 0.3 * normal(rng);

    std::vector<RolloutGroup> groups;
    for (const auto& q : task.questions) groups.push_back(sample_rollouts(params, q, 4, rng));

    for (Divergence div : {Divergence::Kl, Divergence::Jsd}) {
      for (bool weighted : {false, true}) {
        const DistillationSpec spec{div, inst % 2 == 0 ? std::size_t{8} : std::size_t{5}};
        std::vector<double> weights(groups.size(), 1.0);
        if (weighted)
          for (double& w : weights) w = 0.2 + 1.8 * unif(rng);
        LossResult lr = distillation_loss(groups, task, params, spec, weights,
                                          std::vector<bool>(groups.size(), true));
        if (corrupt) lr.grad.data[lr.grad.data.size() / 2] += 1e-3;
        const Matrix fd =
            numeric_distillation_gradient(groups, task, params, spec, weights, kGradcheckStep);
        const double err = gradient_rel_error(lr.grad, fd);
        double& slot = div == Divergence::Kl ? rep.max_rel_err_kl : rep.max_rel_err_jsd;
        slot = std::max(slot, err);
        rep.max_rel_err = std::max(rep.max_rel_err, err);
      }
    }

    // Stop-gradient: the teacher moves the loss value but contributes no
    // gradient terms through its own parameters.
    const DistillationSpec spec{Divergence::Jsd, 8};
    const std::vector<double> ones(groups.size(), 1.0);
    const std::vector<bool> all(groups.size(), true);
    const LossResult base = distillation_loss(groups, task, params, spec, ones, all);
    const Matrix saved = params.ema_W;
    for (double& w : params.ema_W.data) w += 0.1 * normal(rng);
    const double perturbed = distillation_loss(groups, task, params, spec, ones, all).loss;
    params.ema_W = saved;
    const LossResult restored = distillation_loss(groups, task, params, spec, ones, all);
    if (perturbed == base.loss || !(restored.grad == base.grad) || restored.loss != base.loss)
      rep.stop_gradient_ok = false;

    // Teacher sharing the student's weights: detached FD must match, coupled FD must not.
    PolicyParams tied = params;
    tied.ema_W = tied.W;
    const LossResult tied_lr = distillation_loss(groups, task, tied, spec, ones, all);
    const Matrix detached_fd =
        numeric_distillation_gradient(groups, task, tied, spec, ones, kGradcheckStep);
    const Matrix coupled_fd = numeric_coupled_gradient(groups, task, tied, spec, ones, kGradcheckStep);
    if (gradient_rel_error(tied_lr.grad, detached_fd) >= kGradcheckTolerance ||
        gradient_rel_error(tied_lr.grad, coupled_fd) < 1e-3)
      rep.stop_gradient_ok = false;

    // The student's own log-prob gradient ignores the feedback gain.
    const Question& q0 = task.questions.front();
    const auto& toks = groups.front().rollouts.front().tokens;
    Matrix g1(params.W.rows, params.W.cols), g2(params.W.rows, params.W.cols);
    token_log_prob(params, q0, 1, toks, toks[1], 1.0, &g1);
    PolicyParams gained = params;
    gained.feedback_gain += 1.0;
    token_log_prob(gained, q0, 1, toks, toks[1], 1.0, &g2);
    if (!(g1 == g2)) rep.stop_gradient_ok = false;
  }
  rep.passed = rep.max_rel_err < kGradcheckTolerance && rep.stop_gradient_ok;
  return rep;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances, bool corrupt, std::ostream& log) {
  const GradcheckReport rep = run_gradcheck(seed, instances, corrupt);
  log << "instances " << rep.instances << " (kl, jsd) x (weighted, unweighted)\n"
      << "max relative error kl  " << format_double(rep.max_rel_err_kl) << '\n'
      << "max relative error jsd " << format_double(rep.max_rel_err_jsd) << '\n'
      << "stop-gradient check " << (rep.stop_gradient_ok ? "PASS" : "FAIL") << '\n'
      << (rep.passed ? "PASS" : "FAIL") << " max rel err " << format_double(rep.max_rel_err)
      << " (tolerance " << format_double(kGradcheckTolerance) << ")\n";
  return rep.passed ? kExitOk : kExitCheckFailed;
}

IdentityReport run_identity_checks() {
  IdentityReport rep;
  for (std::size_t g = 2; g <= 16; ++g) {
    for (std::size_t k = 0; k <= g; ++k) {
      std::vector<double> rewards(g, 0.0);
      std::fill(rewards.begin(), rewards.begin() + static_cast<std::ptrdiff_t>(k), 1.0);
      const double p = static_cast<double>(k) / static_cast<double>(g);
      const double closed = 2.0 * static_cast<double>(g) * std::sqrt(p * (1.0 - p));
      rep.max_magnitude_err =
          std::max(rep.max_magnitude_err, std::abs(grpo_total_magnitude(rewards) - closed));
    }
  }
  rep.magnitude_ok = rep.max_magnitude_err <= 1e-9;

  rep.symmetry_ok = true;
  rep.unimodal_ok = true;
  for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
    for (int i = 0; i <= 8; ++i) {
      const double p = i / 8.0;
      if (raw_weight(p, alpha) != raw_weight(1.0 - p, alpha)) rep.symmetry_ok = false;
    }
    for (int i = 0; i < 4; ++i)
      if (!(raw_weight(i / 8.0, alpha) < raw_weight((i + 1) / 8.0, alpha))) rep.unimodal_ok = false;
    for (int i = 4; i < 8; ++i)
      if (!(raw_weight(i / 8.0, alpha) > raw_weight((i + 1) / 8.0, alpha))) rep.unimodal_ok = false;
  }

  rep.unit_mean_ok = true;
  Rng rng = make_stream(0, 0, 0, /*tag=*/0x1d);
  std::uniform_int_distribution<int> kdist(0, 8);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(32);
    for (double& x : p) x = kdist(rng) / 8.0;
    const WeightVector w = batch_weights(p, 0.5);
    if (w.active_set.empty()) continue;
    double s = 0.0;
    for (std::size_t j : w.active_set) s += w.normalized[j];
    if (std::abs(s / static_cast<double>(w.active_set.size()) - 1.0) > 1e-12)
      rep.unit_mean_ok = false;
  }
  rep.passed = rep.magnitude_ok && rep.symmetry_ok && rep.unimodal_ok && rep.unit_mean_ok;
  return rep;
}

int cmd_identity(std::ostream& log) {
  const IdentityReport rep = run_identity_checks();
  auto line = [&](bool ok, const std::string& what) {
    log << (ok ? "PASS " : "FAIL ") << what << '\n';
  };
  line(rep.magnitude_ok, "sum|A| = 2G sqrt(p(1-p)) for G in 2..16, k in 0..G (max err " +
                             format_double(rep.max_magnitude_err) + ")");
  line(rep.symmetry_ok, "raw_weight(p) = raw_weight(1-p)");
  line(rep.unimodal_ok, "raw_weight unimodal on {0..8}/8, peak at 1/2");
  line(rep.unit_mean_ok, "normalized weights have unit mean over the active set");
  line(raw_weight(0.5, 0.5) == 0.5, "raw_weight(0.5, 0.5) = 0.5");
  return rep.passed && raw_weight(0.5, 0.5) == 0.5 ? kExitOk : kExitCheckFailed;
}

namespace {

struct RolloutStats {
  double kl = 0.0, jsd = 0.0, adv_kl = 0.0, adv_jsd = 0.0;
};

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  sd = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<FlatBin> flat_advantage(const PolicyParams& params, const Task& task,
                                    std::size_t rollouts_per_question, std::size_t top_k,
                                    double temperature, std::uint64_t seed) {
  if (rollouts_per_question < 1) throw ParameterError("flat_advantage: need >= 1 rollout");
  const std::size_t k = std::clamp<std::size_t>(top_k, 1, task.vocab());
  std::map<std::size_t, std::pair<std::size_t, std::vector<RolloutStats>>> by_successes;

  for (const Question& q : task.questions) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(q.id), 0, /*tag=*/0xf1a7);
    const RolloutGroup g = sample_rollouts(params, q, rollouts_per_question, rng, temperature);
    if (g.pass_rate.k == 0) continue;
    const Feedback fb = render_feedback(q);
    auto& slot = by_successes[g.pass_rate.k];
    ++slot.first;
    for (const Rollout& r : g.rollouts) {
      RolloutStats st;
      for (std::size_t t = 0; t < task.length(); ++t) {
        const ProbVector s_full(softmax(student_logits(params, q, t, r.tokens)));
        const ProbVector t_full(softmax(teacher_logits(params, q, t, r.tokens, fb)));
        const TruncatedDist s = truncate_top_k(s_full, k);
        const TruncatedDist tt = project_onto(t_full, s);
        st.kl += kl_divergence(s, tt);
        st.jsd += jsd(s, tt);
        const auto idx = s.indices();
        const auto it = std::find(idx.begin(), idx.end(), static_cast<std::size_t>(r.tokens[t]));
        const std::size_t o = static_cast<std::size_t>(it - idx.begin());  // k means tail
        st.adv_kl += std::abs(sdpo_token_advantage(s, tt).per_bucket[o]);
        st.adv_jsd += std::abs(jsd_token_advantage(s, tt).per_bucket[o]);
      }
      const double L = static_cast<double>(task.length());
      st.kl /= L;
      st.jsd /= L;
      st.adv_kl /= L;
      st.adv_jsd /= L;
      slot.second.push_back(st);
    }
  }

  std::vector<FlatBin> bins;
  for (const auto& [succ, slot] : by_successes) {
    FlatBin b;
    b.successes = succ;
    b.pass_rate = static_cast<double>(succ) / static_cast<double>(rollouts_per_question);
    b.questions = slot.first;
    b.rollouts = slot.second.size();
    std::vector<double> kl, js, ak, aj;
    for (const auto& st : slot.second) {
      kl.push_back(st.kl);
      js.push_back(st.jsd);
      ak.push_back(st.adv_kl);
      aj.push_back(st.adv_jsd);
    }
    mean_std(kl, b.kl_mean, b.kl_std);
    mean_std(js, b.jsd_mean, b.jsd_std);
    mean_std(ak, b.adv_kl_mean, b.adv_kl_std);
    mean_std(aj, b.adv_jsd_mean, b.adv_jsd_std);
    bins.push_back(b);
  }
  return bins;
}

void write_flat_advantage_csv(std::ostream& out, const std::vector<FlatBin>& bins) {
  out << "pass_rate,questions,rollouts,kl_mean,kl_std,jsd_mean,jsd_std,adv_kl_mean,adv_kl_std,"
         "adv_jsd_mean,adv_jsd_std\n";
  for (const auto& b : bins)
    out << format_double(b.pass_rate) << ',' << b.questions << ',' << b.rollouts << ','
        << format_double(b.kl_mean) << ',' << format_double(b.kl_std) << ','
        << format_double(b.jsd_mean) << ',' << format_double(b.jsd_std) << ','
        << format_double(b.adv_kl_mean) << ',' << format_double(b.adv_kl_std) << ','
        << format_double(b.adv_jsd_mean) << ',' << format_double(b.adv_jsd_std) << '\n';
}

int cmd_flat_advantage(const std::optional<fs::path>& config_path,
                       const std::optional<fs::path>& checkpoint,
                       const std::optional<fs::path>& task_file,
                       const std::optional<fs::path>& out_dir, std::size_t rollouts_per_question,
                       std::optional<std::uint64_t> seed, std::ostream& log) {
  std::vector<FlatBin> bins;
  try {
    RunConfig rc;
    if (config_path) rc = load_run_config(*config_path);
    if (task_file) rc.task_file = *task_file;
    if (seed) rc.train.seed = *seed;
    const Task task = rc.make_task();
    PolicyParams params = checkpoint ? PolicyParams::load_json(*checkpoint)
                                     : init_policy(task, rc.train.feedback_gain,
                                                   rc.train.ema_rate, rc.train.init_scale,
                                                   rc.train.seed);
    if (params.vocab() != task.vocab() || params.features.dim() != FeatureMap::for_task(task).dim())
      throw ConfigError("checkpoint does not match the task dimensions");
    bins = flat_advantage(params, task, rollouts_per_question, rc.train.top_k,
                          rc.train.eval_temperature, rc.train.seed);
    if (out_dir) {
      ensure_dir(*out_dir);
      std::ofstream out(*out_dir / "flat_advantage.csv", std::ios::binary);
      write_flat_advantage_csv(out, bins);
      log << "wrote " << (*out_dir / "flat_advantage.csv").string() << '\n';
    } else {
      write_flat_advantage_csv(std::cout, bins);
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace sdlab
