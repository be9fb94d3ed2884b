#pragma once

// Linear-softmax autoregressive policy over the synthetic task.
//
//   student logits  = W     phi(x, t, y<t) + bias * e[answer_t]
//   teacher logits  = ema_W phi(x, t, y<t) + bias * e[answer_t] + gain * e[feedback_t]
//
// phi concatenates the question context (d), a one-hot of the position (L)
// and a one-hot of the previous token (V, all zero at t = 0). The teacher is
// never differentiated: gradients only flow through W.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sdlab/dist_core.hpp"
#include "sdlab/env.hpp"
#include "sdlab/matrix.hpp"

namespace sdlab {

enum class Divergence { Kl, Jsd };

struct FeatureMap {
  std::size_t context_dim = 0;
  std::size_t length = 0;
  std::size_t vocab = 0;

  static FeatureMap for_task(const Task& task);
  std::size_t dim() const { return context_dim + length + vocab; }
  // Writes dim() entries into out.
  void features(const Question& q, std::size_t t, std::span<const Token> prefix,
                std::span<double> out) const;
  std::vector<double> features(const Question& q, std::size_t t,
                               std::span<const Token> prefix) const;
};

struct PolicyParams {
  FeatureMap features;
  Matrix W;      // V x features.dim()
  Matrix ema_W;  // same shape
  double feedback_gain = 3.0;
  double ema_rate = 0.05;
  std::uint64_t step = 0;

  std::size_t vocab() const { return W.rows; }

  void save_json(const std::filesystem::path& path) const;
  static PolicyParams load_json(const std::filesystem::path& path);
};

// Fresh policy with W = ema_W drawn from N(0, init_scale^2) (all zero when
// init_scale == 0).
PolicyParams init_policy(const Task& task, double feedback_gain, double ema_rate,
                         double init_scale = 0.0, std::uint64_t seed = 0);

std::vector<double> student_logits(const PolicyParams& params, const Question& q, std::size_t t,
                                   std::span<const Token> prefix);

// Throws ParameterError if the feedback belongs to a different question or
// does not match its answer.
std::vector<double> teacher_logits(const PolicyParams& params, const Question& q, std::size_t t,
                                   std::span<const Token> prefix, const Feedback& feedback);

// Numerically stable softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

RolloutGroup sample_rollouts(const PolicyParams& params, const Question& q, std::size_t group_size,
                             Rng& rng, double temperature = 1.0);

// Sum of per-token log-probabilities of a sequence under the student.
double sequence_log_prob(const PolicyParams& params, const Question& q,
                         std::span<const Token> tokens);

void ema_update(PolicyParams& params);

struct DistillationSpec {
  Divergence divergence = Divergence::Jsd;
  std::size_t top_k = 100;  // capped at V
};

// Divergence between the top-K truncated student and the detached teacher
// projected onto the student's index set, at one position. If grad is
// non-null, adds weight * dD/dW into it.
double token_distillation(const PolicyParams& params, const Question& q, std::size_t t,
                          std::span<const Token> prefix, const Feedback& feedback,
                          const DistillationSpec& spec, double weight, Matrix* grad);

// log pi(token | x, prefix). If grad is non-null, adds coeff * d log pi / dW.
double token_log_prob(const PolicyParams& params, const Question& q, std::size_t t,
                      std::span<const Token> prefix, Token token, double coeff, Matrix* grad);

}  // namespace sdlab
