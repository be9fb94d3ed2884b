#pragma once

// Synthetic exact-match task: each question has a context vector, an
// L-token answer over a V-token vocabulary, and a difficulty bias that the
// policy adds to the correct token's logit (larger = easier).

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdlab/weighting.hpp"

namespace sdlab {

using Token = std::uint32_t;

struct Question {
  QuestionId id = 0;
  std::vector<double> context;  // dimension d
  std::vector<Token> answer;    // length L, ids < V
  double difficulty_bias = 0.0;
};

struct Rollout {
  QuestionId question_id = 0;
  std::vector<Token> tokens;
  double reward = 0.0;
};

struct RolloutGroup {
  QuestionId question_id = 0;
  std::int64_t step = -1;  // training step that sampled the group; -1 outside training
  std::vector<Rollout> rollouts;
  PassRateEstimate pass_rate;

  std::vector<double> rewards() const;
};

struct Feedback {
  QuestionId question_id = 0;
  std::vector<Token> answer_tokens;
};

struct DifficultySpec {
  enum class Kind { Uniform, Constant } kind = Kind::Uniform;
  double lo = -1.0;
  double hi = 3.0;
  double value = 0.0;

  static DifficultySpec uniform(double lo, double hi);
  static DifficultySpec constant(double value);
  // "uniform LO HI" or "constant V".
  static DifficultySpec parse(const std::string& text);
  std::string to_string() const;
};

struct TaskParams {
  std::uint64_t seed = 0;
  std::size_t num_questions = 64;
  std::size_t vocab = 8;        // V
  std::size_t length = 2;       // L
  std::size_t context_dim = 16; // d
  DifficultySpec difficulty;
};

struct Task {
  TaskParams params;
  std::vector<Question> questions;

  std::size_t vocab() const { return params.vocab; }
  std::size_t length() const { return params.length; }
  std::size_t context_dim() const { return params.context_dim; }
  const Question& question(QuestionId id) const;

  void save_json(const std::filesystem::path& path) const;
  static Task load_json(const std::filesystem::path& path);
  bool operator==(const Task& o) const;
};

Task generate_task(const TaskParams& params);

double evaluate(const Question& question, std::span<const Token> tokens);

Feedback render_feedback(const Question& question);

using Rng = std::mt19937_64;

// Independent random stream keyed by (seed, a, b, tag).
Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag);

}  // namespace sdlab
