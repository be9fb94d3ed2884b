#include "sdlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sdlab/advantage.hpp"
#include "sdlab/error.hpp"
#include "sdlab/simd/kernels.hpp"

namespace sdlab {
namespace {

constexpr std::uint64_t kTagBatch = 0xba7c;
constexpr std::uint64_t kTagRollout = 0x5011;
constexpr std::uint64_t kTagPaced = 0xface;

struct MethodEntry {
  Method method;
  const char* name;
};

constexpr MethodEntry kMethods[] = {
    {Method::Grpo, "grpo"},
    {Method::GrpoNoNorm, "grpo_no_norm"},
    {Method::Sdpo, "sdpo"},
    {Method::SdpoPaced, "sdpo_paced"},
    {Method::SdpoHardFilter, "sdpo_hard_filter"},
    {Method::ScSdpo, "sc_sdpo"},
};

std::vector<double> pass_rates_of(const std::vector<RolloutGroup>& groups) {
  std::vector<double> p(groups.size());
  for (std::size_t j = 0; j < groups.size(); ++j) p[j] = groups[j].pass_rate.p_hat;
  return p;
}

std::vector<bool> inclusion(const std::vector<RolloutGroup>& groups, const TrainConfig& config) {
  std::vector<bool> inc(groups.size(), true);
  if (config.exclude_zero_pass)
    for (std::size_t j = 0; j < groups.size(); ++j) inc[j] = groups[j].pass_rate.k > 0;
  return inc;
}

DistillationSpec spec_of(const TrainConfig& config) { return {config.divergence, config.top_k}; }

bool all_finite(const Matrix& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
}

std::string dump_batch(const TrainState& state, const TrainConfig& config,
                       const std::vector<RolloutGroup>& groups, const LossResult& lr) {
  std::ostringstream out;
  out.precision(17);
  out << "non-finite loss or gradient at step " << state.step << " (method "
      << method_name(config.method) << ", loss " << lr.loss << ")\n";
  for (std::size_t j = 0; j < groups.size(); ++j) {
    out << "  question " << groups[j].question_id << " p_hat " << groups[j].pass_rate.p_hat
        << " weight " << (j < lr.weights.size() ? lr.weights[j] : 0.0) << " rollouts";
    for (const auto& r : groups[j].rollouts) {
      out << " [";
      for (Token t : r.tokens) out << t << ' ';
      out << "r=" << r.reward << ']';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string method_name(Method m) {
  for (const auto& e : kMethods)
    if (e.method == m) return e.name;
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (const auto& e : kMethods)
    if (name == e.name) return e.method;
  throw ConfigError("unknown method '" + name + "'");
}

bool is_distillation(Method m) { return m != Method::Grpo && m != Method::GrpoNoNorm; }

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(paced_alpha > 0.0)) throw ConfigError("paced_alpha must be > 0");
  if (!(ema_rate > 0.0 && ema_rate <= 1.0)) throw ConfigError("ema_rate must be in (0, 1]");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
  if (!(feedback_gain >= 0.0)) throw ConfigError("feedback_gain must be >= 0");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
  if (!(0.0 <= hard_filter_lo && hard_filter_lo <= hard_filter_hi && hard_filter_hi <= 1.0))
    throw ConfigError("hard_filter_bounds must satisfy 0 <= lo <= hi <= 1");
  if (!(train_temperature > 0.0) || !(eval_temperature > 0.0))
    throw ConfigError("temperatures must be > 0");
}

std::vector<double> method_weights(const std::vector<RolloutGroup>& groups,
                                   const TrainConfig& config, const FrozenWeightTable* frozen) {
  std::vector<double> w(groups.size(), 1.0);
  switch (config.method) {
    case Method::ScSdpo:
      return batch_weights(pass_rates_of(groups), config.alpha).normalized;
    case Method::SdpoHardFilter:
      for (std::size_t j = 0; j < groups.size(); ++j)
        w[j] = hard_filter_weight(groups[j].pass_rate.p_hat, config.hard_filter_lo,
                                  config.hard_filter_hi);
      return w;
    case Method::SdpoPaced:
      if (frozen == nullptr) throw ConfigError("sdpo_paced needs a frozen weight table");
      for (std::size_t j = 0; j < groups.size(); ++j) w[j] = frozen->weight(groups[j].question_id);
      return w;
    default:
      return w;
  }
}

LossResult distillation_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                             const PolicyParams& params, const DistillationSpec& spec,
                             const std::vector<double>& weights,
                             const std::vector<bool>& included) {
  LossResult out;
  out.grad = Matrix(params.W.rows, params.W.cols);
  out.weights = weights;
  std::size_t cells = 0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (!included[j]) {
      out.weights[j] = 0.0;
      continue;
    }
    cells += groups[j].rollouts.size() * task.length();
    if (weights[j] > 0.0) ++out.active;
  }
  if (cells == 0) return out;
  const double inv_cells = 1.0 / static_cast<double>(cells);

  // Fixed summation order: groups, then rollouts, then positions.
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (!included[j] || weights[j] == 0.0) continue;
    const Question& q = task.question(groups[j].question_id);
    const Feedback fb = render_feedback(q);
    const double cell_weight = weights[j] * inv_cells;
    for (const Rollout& r : groups[j].rollouts)
      for (std::size_t t = 0; t < task.length(); ++t)
        out.loss += weights[j] *
                    token_distillation(params, q, t, r.tokens, fb, spec, cell_weight, &out.grad);
  }
  out.loss *= inv_cells;
  return out;
}

LossResult sc_sdpo_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                        const PolicyParams& params, const TrainConfig& config) {
  const auto w = batch_weights(pass_rates_of(groups), config.alpha).normalized;
  return distillation_loss(groups, task, params, spec_of(config), w, inclusion(groups, config));
}

LossResult sdpo_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                     const PolicyParams& params, const TrainConfig& config) {
  const std::vector<double> w(groups.size(), 1.0);
  return distillation_loss(groups, task, params, spec_of(config), w, inclusion(groups, config));
}

LossResult grpo_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                     const PolicyParams& params, const TrainConfig& config) {
  LossResult out;
  out.grad = Matrix(params.W.rows, params.W.cols);
  out.weights.assign(groups.size(), 0.0);
  std::size_t cells = 0;
  for (const auto& g : groups) cells += g.rollouts.size() * task.length();
  if (cells == 0) return out;
  const double inv_cells = 1.0 / static_cast<double>(cells);

  for (std::size_t j = 0; j < groups.size(); ++j) {
    const auto rewards = groups[j].rewards();
    std::vector<double> adv;
    if (config.method == Method::GrpoNoNorm) {
      const double mean = groups[j].pass_rate.p_hat;
      for (double r : rewards) adv.push_back(r - mean);
    } else {
      adv = grpo_advantages(rewards).values;
    }
    const bool active = std::any_of(adv.begin(), adv.end(), [](double a) { return a != 0.0; });
    out.weights[j] = active ? 1.0 : 0.0;
    if (!active) continue;
    ++out.active;
    const Question& q = task.question(groups[j].question_id);
    for (std::size_t i = 0; i < groups[j].rollouts.size(); ++i) {
      const auto& tokens = groups[j].rollouts[i].tokens;
      for (std::size_t t = 0; t < task.length(); ++t) {
        const double coeff = -adv[i] * inv_cells;
        out.loss += coeff * token_log_prob(params, q, t, tokens, tokens[t], coeff, &out.grad);
      }
    }
  }
  return out;
}

LossResult method_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                       const PolicyParams& params, const TrainConfig& config,
                       const FrozenWeightTable* frozen) {
  if (!is_distillation(config.method)) return grpo_loss(groups, task, params, config);
  const auto w = method_weights(groups, config, frozen);
  return distillation_loss(groups, task, params, spec_of(config), w, inclusion(groups, config));
}

double clip_grad_norm(Matrix& grad, double max_norm) {
  const double norm = std::sqrt(simd::sum_squares(grad.data));
  if (norm > max_norm) simd::scale(max_norm / norm, grad.data);
  return norm;
}

TrainState init_state(const TrainConfig& config, const Task& task) {
  config.validate();
  PolicyParams params = init_policy(task, config.feedback_gain, config.ema_rate, config.init_scale,
                                    config.seed);
  AdamWConfig opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  opt.warmup_steps = config.warmup_steps;
  TrainState state{std::move(params), AdamW(opt, task.vocab() * FeatureMap::for_task(task).dim()),
                   std::nullopt, 0, {}};

  if (config.method == Method::SdpoPaced) {
    // Single offline pass with the initial policy.
    std::map<QuestionId, double> initial;
    for (const Question& q : task.questions) {
      Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(q.id), 0, kTagPaced);
      initial[q.id] = sample_rollouts(state.params, q, config.group_size, rng,
                                      config.train_temperature)
                          .pass_rate.p_hat;
    }
    state.frozen = frozen_weight_table(initial, config.paced_alpha);
  }
  return state;
}

std::vector<QuestionId> select_batch(const TrainConfig& config, const Task& task,
                                     std::size_t step) {
  std::vector<QuestionId> ids;
  ids.reserve(task.questions.size());
  for (const auto& q : task.questions) ids.push_back(q.id);
  if (config.batch_size >= ids.size()) return ids;
  Rng rng = make_stream(config.seed, step, 0, kTagBatch);
  // Partial Fisher-Yates; std::shuffle's draw pattern is library-specific.
  for (std::size_t i = 0; i < config.batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(config.batch_size);
  return ids;
}

std::vector<RolloutGroup> sample_batch(const TrainState& state, const TrainConfig& config,
                                       const Task& task) {
  std::vector<RolloutGroup> groups;
  for (QuestionId id : select_batch(config, task, state.step)) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(id), state.step, kTagRollout);
    RolloutGroup g = sample_rollouts(state.params, task.question(id), config.group_size, rng,
                                     config.train_temperature);
    g.step = static_cast<std::int64_t>(state.step);
    groups.push_back(std::move(g));
  }
  return groups;
}

StepMetrics apply_batch(TrainState& state, const TrainConfig& config, const Task& task,
                        std::vector<RolloutGroup> groups) {
  for (const auto& g : groups)
    if (g.step != static_cast<std::int64_t>(state.step))
      throw ParameterError("apply_batch: group for question " + std::to_string(g.question_id) +
                           " was sampled at step " + std::to_string(g.step) + ", not " +
                           std::to_string(state.step));

  LossResult lr;
  // Non-finite logits surface as an invalid softmax; an underflowed teacher
  // probability as a support mismatch (infinite KL).
  auto abort_from = [&](const Error& e) {
    lr.loss = std::nan("");
    return NumericalAbort(dump_batch(state, config, groups, lr) + "  cause: " + e.what() + '\n');
  };
  try {
    lr = method_loss(groups, task, state.params, config, state.frozen ? &*state.frozen : nullptr);
  } catch (const InvalidDistribution& e) {
    throw abort_from(e);
  } catch (const SupportMismatch& e) {
    throw abort_from(e);
  }
  if (!std::isfinite(lr.loss) || !all_finite(lr.grad))
    throw NumericalAbort(dump_batch(state, config, groups, lr));

  StepMetrics m;
  m.step = state.step;
  m.loss = lr.loss;
  m.active_questions = lr.active;
  m.grad_norm_raw = clip_grad_norm(lr.grad, config.grad_clip_norm);
  m.grad_norm = std::min(m.grad_norm_raw, config.grad_clip_norm);

  // An identically zero gradient (every group degenerate or filtered) leaves
  // the policy and the optimizer state untouched.
  const bool zero = std::all_of(lr.grad.data.begin(), lr.grad.data.end(),
                                [](double x) { return x == 0.0; });
  if (!zero) {
    state.optimizer.step(state.params.W, lr.grad);
    ema_update(state.params);
  }

  double pass_sum = 0.0, weight_sum = 0.0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const double p = groups[j].pass_rate.p_hat;
    pass_sum += p;
    weight_sum += lr.weights[j];
    const auto bin = static_cast<std::size_t>(std::lround(p * 8.0));
    ++m.bin_counts[std::min<std::size_t>(bin, 8)];
  }
  const double n = static_cast<double>(groups.size());
  m.mean_pass_rate = groups.empty() ? 0.0 : pass_sum / n;
  m.mean_weight = groups.empty() ? 0.0 : weight_sum / n;
  std::size_t wide = 0, narrow = 0;
  for (std::size_t b = 1; b <= 7; ++b) wide += m.bin_counts[b];
  for (std::size_t b = 2; b <= 6; ++b) narrow += m.bin_counts[b];
  m.frac_mid_wide = groups.empty() ? 0.0 : static_cast<double>(wide) / n;
  m.frac_mid_narrow = groups.empty() ? 0.0 : static_cast<double>(narrow) / n;

  state.last_groups = std::move(groups);
  ++state.step;
  state.params.step = state.step;
  return m;
}

StepMetrics train_step(TrainState& state, const TrainConfig& config, const Task& task) {
  return apply_batch(state, config, task, sample_batch(state, config, task));
}

TrainResult run_training(const TrainConfig& config, const Task& task) {
  TrainState state = init_state(config, task);
  TrainResult result;
  result.metrics.reserve(config.steps);
  for (std::size_t s = 0; s < config.steps; ++s)
    result.metrics.push_back(train_step(state, config, task));
  result.final_params = std::move(state.params);
  return result;
}

}  // namespace sdlab
