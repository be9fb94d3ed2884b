// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1 for ctest).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sdlab/advantage.hpp"
#include "sdlab/config.hpp"
#include "sdlab/harness.hpp"
#include "sdlab/learnability.hpp"
#include "sdlab/trainer.hpp"
#include "sdlab/weighting.hpp"

using namespace sdlab;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out{false, ""};
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < time_limit_s;
  const bool pass = out.pass && in_time;
  if (!pass) ++failures;
  std::printf("[%s] %d %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", id, name,
              out.detail.c_str(), secs, time_limit_s, in_time ? "" : " TOO SLOW");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const std::filesystem::path kConfigDir = std::filesystem::path(SDLAB_SOURCE_DIR) / "configs";

Outcome magnitude_identity() {
  double worst = 0.0;
  for (std::size_t g = 2; g <= 16; ++g)
    for (std::size_t k = 0; k <= g; ++k) {
      std::vector<double> r(g, 0.0);
      std::fill_n(r.begin(), k, 1.0);
      const double p = static_cast<double>(k) / static_cast<double>(g);
      worst = std::max(worst, std::abs(grpo_total_magnitude(r) - 2.0 * g * std::sqrt(p * (1 - p))));
    }
  return {worst <= 1e-9, fmt("max |sum|A| - 2G sqrt(p(1-p))| = %.3g over G in 2..16, k in 0..G", worst)};
}

Outcome normalization_contract() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 64), kind(0, 3), kdist(0, 8);
  std::uniform_real_distribution<double> unif(0.0, 1.0), alpha(0.1, 2.0);
  double worst_mean = 0.0, worst_ratio = 0.0;
  int empty = 0, singles = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> raw(static_cast<std::size_t>(size(rng)), 0.0);
    switch (kind(rng)) {
      case 0:  // all zero
        break;
      case 1:  // single nonzero
        raw[std::uniform_int_distribution<std::size_t>(0, raw.size() - 1)(rng)] = unif(rng) + 1e-3;
        break;
      case 2: {  // pass-rate weights with degenerate entries
        const double a = alpha(rng);
        for (double& w : raw) w = raw_weight(kdist(rng) / 8.0, a);
        break;
      }
      default:  // arbitrary magnitudes with zeros mixed in
        for (double& w : raw) w = unif(rng) < 0.3 ? 0.0 : std::exp(8.0 * (unif(rng) - 0.5));
    }
    const WeightVector w = normalize_batch(raw);
    if (w.active_set.empty()) {
      ++empty;
      if (std::any_of(w.normalized.begin(), w.normalized.end(), [](double x) { return x != 0.0; }))
        return {false, "nonzero weight with empty active set"};
      continue;
    }
    if (w.active_set.size() == 1) ++singles;
    double s = 0.0;
    for (std::size_t j : w.active_set) s += w.normalized[j];
    worst_mean = std::max(worst_mean, std::abs(s / static_cast<double>(w.active_set.size()) - 1.0));
    const std::size_t a0 = w.active_set.front();
    for (std::size_t j : w.active_set) {
      const double want = raw[j] / raw[a0];
      worst_ratio = std::max(worst_ratio, std::abs(w.normalized[j] / w.normalized[a0] - want) / want);
    }
  }
  const bool ok = worst_mean <= 1e-12 && worst_ratio <= 1e-12 && empty > 0 && singles > 0;
  std::ostringstream d;
  d << "10000 batches (" << empty << " empty, " << singles << " singleton): max |mean-1| "
    << worst_mean << ", max ratio err " << worst_ratio;
  return {ok, d.str()};
}

Outcome learnability_expansion() {
  const std::vector<double> grid{10, 20, 40, 80};
  double lo = 1e9, hi = -1e9, worst_slope = -1e9, half_slope = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const double p = i / 10.0;
    const double v = exact_kl_normalized(p, 100.0) * 2.0 * 100.0 * 100.0;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    const double slope = verify_expansion(p, grid).slope;
    if (i == 5)
      half_slope = slope;
    else
      worst_slope = std::max(worst_slope, slope);
  }
  const bool ok = lo >= 0.95 && hi <= 1.05 && worst_slope <= -2.9 && std::abs(half_slope + 4.0) <= 0.1;
  std::ostringstream d;
  d << "2b^2 KL at b=100 in [" << lo << ", " << hi << "]; max slope over p!=0.5 "
    << worst_slope << "; slope p=0.5 " << half_slope;
  return {ok, d.str()};
}

Outcome gradient_oracle() {
  const GradcheckReport r = run_gradcheck(0, 20);
  std::ostringstream d;
  d << r.instances << " instances x {kl, jsd} x {weighted, unweighted}: max rel err kl "
    << r.max_rel_err_kl << ", jsd " << r.max_rel_err_jsd << "; stop-gradient "
    << (r.stop_gradient_ok ? "exact" : "VIOLATED");
  return {r.passed && r.instances >= 20, d.str()};
}

Outcome advantage_expectation() {
  std::mt19937_64 rng(77);
  std::exponential_distribution<double> ex(1.0);
  std::uniform_int_distribution<std::size_t> vdist(2, 64);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t V = vdist(rng);
    auto draw = [&] {
      std::vector<double> p(V);
      for (double& x : p) x = ex(rng) + 1e-6;
      return normalize(p);
    };
    const ProbVector s = draw(), t = draw();
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, V)(rng);
    const TruncatedDist S = truncate_top_k(s, k), T = project_onto(t, S);
    const auto so = S.outcomes();
    const auto a = sdpo_token_advantage(S, T);
    double e = 0.0;
    for (std::size_t o = 0; o < so.size(); ++o) e += so[o] * a.per_bucket[o];
    worst = std::max(worst, std::abs(e + kl_divergence(S, T)));
  }
  return {worst <= 1e-9, fmt("max |E_s[A] + KL(s||t)| = %.3g over 1000 random pairs", worst)};
}

Outcome degenerate_batch() {
  const RunConfig rc = load_run_config(kConfigDir / "default.json");
  const Task task = rc.make_task();
  TrainConfig cfg = rc.train;
  cfg.method = Method::ScSdpo;
  TrainState state = init_state(cfg, task);
  // Move away from the all-zero init so a spurious update would show.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (double& w : state.params.W.data) w = nd(rng);
  for (double& w : state.params.ema_W.data) w = nd(rng);
  const PolicyParams before = state.params;

  std::vector<RolloutGroup> groups;
  for (QuestionId id : select_batch(cfg, task, 0)) {
    const Question& q = task.question(id);
    RolloutGroup g;
    g.question_id = id;
    g.step = 0;
    const bool solved = id % 2 == 0;
    std::vector<double> rewards;
    for (std::size_t i = 0; i < cfg.group_size; ++i) {
      Rollout r{id, q.answer, 0.0};
      if (!solved) r.tokens[i % r.tokens.size()] = (r.tokens[i % r.tokens.size()] + 1) % task.vocab();
      r.reward = evaluate(q, r.tokens);
      rewards.push_back(r.reward);
      g.rollouts.push_back(r);
    }
    g.pass_rate = pass_rate(rewards);
    groups.push_back(g);
  }
  const StepMetrics m = apply_batch(state, cfg, task, groups);
  const std::size_t bytes = before.W.data.size() * sizeof(double);
  const bool same = std::memcmp(before.W.data.data(), state.params.W.data.data(), bytes) == 0 &&
                    std::memcmp(before.ema_W.data.data(), state.params.ema_W.data.data(), bytes) == 0;
  std::ostringstream d;
  d << groups.size() << " groups with p_hat in {0,1}: loss " << m.loss << ", grad norm "
    << m.grad_norm << ", parameters " << (same ? "bitwise unchanged" : "CHANGED");
  return {same && m.loss == 0.0 && m.grad_norm == 0.0, d.str()};
}

Outcome flat_advantage_profile() {
  const RunConfig rc = load_run_config(kConfigDir / "default.json");
  const Task task = rc.make_task();
  const PolicyParams fresh = init_policy(task, 3.0, rc.train.ema_rate);
  const auto bins = flat_advantage(fresh, task, 16, rc.train.top_k, rc.train.eval_temperature, 0);
  double lo = 1e300, hi = 0.0;
  std::size_t used = 0;
  std::ostringstream d;
  d << "bins with >=5 questions:";
  for (const auto& b : bins) {
    if (b.questions < 5) continue;
    ++used;
    lo = std::min(lo, b.adv_jsd_mean);
    hi = std::max(hi, b.adv_jsd_mean);
    d << " p=" << b.pass_rate << " (n=" << b.questions << ", |A_jsd|=" << b.adv_jsd_mean << ")";
  }
  const double ratio = used > 0 ? hi / lo : 0.0;
  d << "; max/min " << ratio;
  // A single qualifying bin would make the comparison vacuous.
  return {used >= 2 && ratio < 2.0, d.str()};
}

struct MethodStats {
  double final_pass = 0.0;      // seed mean of the last-40-step mean pass rate
  double median_grad = 0.0;     // median over steps of the seed-mean grad norm
  std::vector<std::string> csv;  // per-seed metrics CSV bytes
};

MethodStats stats_for(const SweepResult& res, const std::string& label) {
  MethodStats st;
  std::vector<double> finals;
  for (const auto& r : res.runs) {
    if (r.label != label || !r.ok) continue;
    double s = 0.0;
    const std::size_t n = r.metrics.size(), from = n >= 40 ? n - 40 : 0;
    for (std::size_t i = from; i < n; ++i) s += r.metrics[i].mean_pass_rate;
    finals.push_back(s / static_cast<double>(n - from));
    std::ostringstream out;
    write_metrics_csv(out, r.metrics);
    st.csv.push_back(out.str());
  }
  for (double f : finals) st.final_pass += f / static_cast<double>(finals.size());
  std::vector<double> g;
  for (const auto& row : res.aggregate)
    if (row.label == label) g.push_back(row.grad_norm);
  std::sort(g.begin(), g.end());
  if (!g.empty()) st.median_grad = g.size() % 2 ? g[g.size() / 2] : 0.5 * (g[g.size() / 2 - 1] + g[g.size() / 2]);
  return st;
}

SweepResult directional_sweep(ExperimentSpec& spec, Task& task) {
  const RunConfig rc = load_run_config(kConfigDir / "default.json");
  spec.base = rc;
  task = rc.make_task();
  auto add = [&](const std::string& label, Method m, double alpha) {
    SweepMethod sm{label, rc.train};
    sm.train.method = m;
    sm.train.alpha = alpha;
    spec.methods.push_back(sm);
  };
  add("sdpo", Method::Sdpo, 0.5);
  add("sc_sdpo_a05", Method::ScSdpo, 0.5);
  add("sc_sdpo_a1", Method::ScSdpo, 1.0);
  for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
  spec.jobs = std::max(1u, std::thread::hardware_concurrency());
  return run_sweep(spec, task, {});
}

}  // namespace

int main() {
  criterion(1, "GRPO magnitude identity", 1, magnitude_identity);
  criterion(2, "weight normalization contract", 1, normalization_contract);
  criterion(3, "standardized learnability expansion", 1, learnability_expansion);
  criterion(4, "distillation gradient oracle", 10, gradient_oracle);
  criterion(5, "advantage-expectation identity", 1, advantage_expectation);
  criterion(6, "degenerate batch gives a zero update", 1, degenerate_batch);
  criterion(7, "flat per-token advantage across pass rates", 60, flat_advantage_profile);

  ExperimentSpec spec;
  Task task;
  SweepResult sweep;
  MethodStats sdpo, sc05, sc1;
  criterion(8, "directional training reproduction (10 seeds)", 1800, [&]() -> Outcome {
    sweep = directional_sweep(spec, task);
    for (const auto& r : sweep.runs)
      if (!r.ok) return {false, "run " + r.label + " seed " + std::to_string(r.seed) + ": " + r.error};
    sdpo = stats_for(sweep, "sdpo");
    sc05 = stats_for(sweep, "sc_sdpo_a05");
    sc1 = stats_for(sweep, "sc_sdpo_a1");
    const bool a = sc05.final_pass >= sdpo.final_pass - 0.01;
    const bool b = sc05.final_pass >= sc1.final_pass;
    const double ratio = sc05.median_grad / sdpo.median_grad;
    const bool c = ratio >= 0.5 && ratio <= 2.0 && sc1.median_grad < sdpo.median_grad;
    std::ostringstream d;
    d << "final-40 pass: sdpo " << sdpo.final_pass << ", sc a=0.5 " << sc05.final_pass
      << ", sc a=1 " << sc1.final_pass << " [(a) " << (a ? "ok" : "FAIL") << ", (b) "
      << (b ? "ok" : "FAIL") << "]; median grad norm: sdpo " << sdpo.median_grad << ", sc a=0.5 "
      << sc05.median_grad << " (ratio " << ratio << "), sc a=1 " << sc1.median_grad << " [(c) "
      << (c ? "ok" : "FAIL") << "]";
    return {a && b && c, d.str()};
  });

  criterion(9, "determinism (byte-identical metrics CSV)", 120, [&]() -> Outcome {
    if (spec.methods.empty()) return {false, "sweep did not run"};
    std::size_t compared = 0;
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      const MethodStats& st = m == 0 ? sdpo : m == 1 ? sc05 : sc1;
      for (std::uint64_t seed : {std::uint64_t{0}, std::uint64_t{7}}) {
        TrainConfig cfg = spec.methods[m].train;
        cfg.seed = seed;
        std::ostringstream out;
        write_metrics_csv(out, run_training(cfg, task).metrics);
        if (out.str() != st.csv.at(seed))
          return {false, spec.methods[m].label + " seed " + std::to_string(seed) + " differs"};
        ++compared;
      }
    }
    return {true, std::to_string(compared) + " reruns match their sweep CSVs byte for byte"};
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
