#pragma once

// On-policy training loop for the GRPO / SDPO / SC-SDPO family.
//
// Every step samples G rollouts for each of M questions from the current
// policy, turns the group outcomes into per-question weights, and takes one
// AdamW step on the resulting loss. Distillation losses are a global mean
// over (question, rollout, token) cells of weight_j * D(student || teacher);
// the weight multiplies each cell before the mean.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sdlab/env.hpp"
#include "sdlab/optimizer.hpp"
#include "sdlab/policy.hpp"
#include "sdlab/weighting.hpp"

namespace sdlab {

enum class Method { Grpo, GrpoNoNorm, Sdpo, SdpoPaced, SdpoHardFilter, ScSdpo };

std::string method_name(Method m);
// Throws ConfigError for unknown names.
Method parse_method(const std::string& name);
bool is_distillation(Method m);

struct TrainConfig {
  Method method = Method::ScSdpo;
  double alpha = 0.5;
  Divergence divergence = Divergence::Jsd;
  std::size_t top_k = 100;
  std::size_t group_size = 8;   // G
  std::size_t batch_size = 32;  // M
  std::size_t steps = 200;
  // Sized for the linear toy policy; large-model fine-tuning runs use ~1e-5.
  double learning_rate = 5e-2;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 10;
  double grad_clip_norm = 1.0;
  double ema_rate = 0.05;
  double feedback_gain = 3.0;
  double init_scale = 0.0;
  double paced_alpha = 1.0;
  double hard_filter_lo = 0.2;
  double hard_filter_hi = 0.8;
  bool exclude_zero_pass = false;
  double train_temperature = 1.0;
  double eval_temperature = 0.6;
  std::uint64_t seed = 0;

  // Throws ConfigError on an invalid combination.
  void validate() const;
};

struct StepMetrics {
  std::size_t step = 0;
  double mean_pass_rate = 0.0;
  std::array<std::size_t, 9> bin_counts{};  // p_hat in {0, 1/8, ..., 1}
  double frac_mid_wide = 0.0;               // bins 1/8 .. 7/8
  double frac_mid_narrow = 0.0;             // bins 2/8 .. 6/8
  double grad_norm = 0.0;                   // after clipping
  double grad_norm_raw = 0.0;               // before clipping
  double loss = 0.0;
  double mean_weight = 0.0;
  std::size_t active_questions = 0;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad;
  std::vector<double> weights;  // per group, as applied
  std::size_t active = 0;       // groups with nonzero weight
};

// Per-group weights for a distillation method. frozen is required for
// SdpoPaced only.
std::vector<double> method_weights(const std::vector<RolloutGroup>& groups,
                                   const TrainConfig& config,
                                   const FrozenWeightTable* frozen = nullptr);

// Weighted distillation loss with explicit per-group weights. Groups whose
// weight is dropped (see exclude_zero_pass) do not count in the mean.
LossResult distillation_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                             const PolicyParams& params, const DistillationSpec& spec,
                             const std::vector<double>& weights,
                             const std::vector<bool>& included);

LossResult sc_sdpo_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                        const PolicyParams& params, const TrainConfig& config);
LossResult sdpo_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                     const PolicyParams& params, const TrainConfig& config);
// Normalized advantages for Method::Grpo, centred rewards for GrpoNoNorm.
LossResult grpo_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                     const PolicyParams& params, const TrainConfig& config);

// Loss for whichever method the config selects.
LossResult method_loss(const std::vector<RolloutGroup>& groups, const Task& task,
                       const PolicyParams& params, const TrainConfig& config,
                       const FrozenWeightTable* frozen);

struct TrainState {
  PolicyParams params;
  AdamW optimizer;
  std::optional<FrozenWeightTable> frozen;
  std::size_t step = 0;
  std::vector<RolloutGroup> last_groups;  // the batch of the most recent step
};

TrainState init_state(const TrainConfig& config, const Task& task);

// Question ids used at a given step.
std::vector<QuestionId> select_batch(const TrainConfig& config, const Task& task, std::size_t step);

// Sample one on-policy batch stamped with state.step.
std::vector<RolloutGroup> sample_batch(const TrainState& state, const TrainConfig& config,
                                       const Task& task);

// Apply one update from an already-sampled batch. Throws ParameterError if a
// group was not sampled at state.step and NumericalAbort on non-finite
// loss or gradient.
StepMetrics apply_batch(TrainState& state, const TrainConfig& config, const Task& task,
                        std::vector<RolloutGroup> groups);

StepMetrics train_step(TrainState& state, const TrainConfig& config, const Task& task);

struct TrainResult {
  std::vector<StepMetrics> metrics;
  PolicyParams final_params;
};

TrainResult run_training(const TrainConfig& config, const Task& task);

double clip_grad_norm(Matrix& grad, double max_norm);

}  // namespace sdlab
