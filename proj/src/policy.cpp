#include "sdlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sdlab/advantage.hpp"
#include "sdlab/error.hpp"
#include "sdlab/simd/kernels.hpp"

namespace sdlab {

FeatureMap FeatureMap::for_task(const Task& task) {
  return {task.context_dim(), task.length(), task.vocab()};
}

void FeatureMap::features(const Question& q, std::size_t t, std::span<const Token> prefix,
                          std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(q.context.begin(), q.context.end(), out.begin());
  out[context_dim + t] = 1.0;
  if (t > 0) out[context_dim + length + prefix[t - 1]] = 1.0;
}

std::vector<double> FeatureMap::features(const Question& q, std::size_t t,
                                         std::span<const Token> prefix) const {
  std::vector<double> out(dim());
  features(q, t, prefix, out);
  return out;
}

PolicyParams init_policy(const Task& task, double feedback_gain, double ema_rate,
                         double init_scale, std::uint64_t seed) {
  if (!(ema_rate >= 0.0 && ema_rate <= 1.0)) throw ParameterError("ema_rate must be in [0, 1]");
  if (!(feedback_gain >= 0.0)) throw ParameterError("feedback_gain must be >= 0");
  PolicyParams p;
  p.features = FeatureMap::for_task(task);
  p.W = Matrix(task.vocab(), p.features.dim());
  if (init_scale > 0.0) {
    Rng rng = make_stream(seed, 0, 0, /*tag=*/0x1a17);
    std::normal_distribution<double> normal(0.0, init_scale);
    for (double& w : p.W.data) w = normal(rng);
  }
  p.ema_W = p.W;
  p.feedback_gain = feedback_gain;
  p.ema_rate = ema_rate;
  return p;
}

namespace {

void check_position(const PolicyParams& params, const Question& q, std::size_t t,
                    std::span<const Token> prefix) {
  if (t >= q.answer.size() || prefix.size() < t)
    throw ParameterError("policy: position out of range or prefix too short");
  (void)params;
}

void logits_into(const Matrix& W, std::span<const double> phi, const Question& q, std::size_t t,
                 std::span<double> out) {
  for (std::size_t v = 0; v < W.rows; ++v) out[v] = simd::dot(W.row(v), phi);
  out[q.answer[t]] += q.difficulty_bias;
}

void check_feedback(const Question& q, const Feedback& fb) {
  if (fb.question_id != q.id || fb.answer_tokens != q.answer)
    throw ParameterError("teacher_logits: feedback does not match question " +
                         std::to_string(q.id));
}

}  // namespace

std::vector<double> student_logits(const PolicyParams& params, const Question& q, std::size_t t,
                                   std::span<const Token> prefix) {
  check_position(params, q, t, prefix);
  const auto phi = params.features.features(q, t, prefix);
  std::vector<double> z(params.vocab());
  logits_into(params.W, phi, q, t, z);
  return z;
}

std::vector<double> teacher_logits(const PolicyParams& params, const Question& q, std::size_t t,
                                   std::span<const Token> prefix, const Feedback& feedback) {
  check_position(params, q, t, prefix);
  check_feedback(q, feedback);
  const auto phi = params.features.features(q, t, prefix);
  std::vector<double> u(params.vocab());
  logits_into(params.ema_W, phi, q, t, u);
  u[feedback.answer_tokens[t]] += params.feedback_gain;
  return u;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax: temperature must be > 0");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - hi) / temperature);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

namespace {

Token sample_categorical(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<Token>(i);
  }
  // u landed in the rounding gap above the last partial sum.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<Token>(i);
  return 0;
}

}  // namespace

RolloutGroup sample_rollouts(const PolicyParams& params, const Question& q, std::size_t group_size,
                             Rng& rng, double temperature) {
  if (group_size < 1) throw ParameterError("sample_rollouts: G must be >= 1");
  RolloutGroup group;
  group.question_id = q.id;
  group.rollouts.reserve(group_size);
  const std::size_t L = q.answer.size();
  std::vector<double> phi(params.features.dim());
  std::vector<double> z(params.vocab());
  for (std::size_t i = 0; i < group_size; ++i) {
    Rollout r;
    r.question_id = q.id;
    r.tokens.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
      params.features.features(q, t, r.tokens, phi);
      logits_into(params.W, phi, q, t, z);
      r.tokens.push_back(sample_categorical(softmax(z, temperature), rng));
    }
    r.reward = evaluate(q, r.tokens);
    group.rollouts.push_back(std::move(r));
  }
  group.pass_rate = pass_rate(group.rewards());
  return group;
}

double sequence_log_prob(const PolicyParams& params, const Question& q,
                         std::span<const Token> tokens) {
  double lp = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t)
    lp += token_log_prob(params, q, t, tokens, tokens[t], 0.0, nullptr);
  return lp;
}

void ema_update(PolicyParams& params) { simd::lerp(params.ema_rate, params.W.data, params.ema_W.data); }

double token_distillation(const PolicyParams& params, const Question& q, std::size_t t,
                          std::span<const Token> prefix, const Feedback& feedback,
                          const DistillationSpec& spec, double weight, Matrix* grad) {
  check_position(params, q, t, prefix);
  check_feedback(q, feedback);
  const std::size_t V = params.vocab();
  const std::size_t k = std::clamp<std::size_t>(spec.top_k, 1, V);

  std::vector<double> phi(params.features.dim());
  params.features.features(q, t, prefix, phi);
  std::vector<double> z(V), u(V);
  logits_into(params.W, phi, q, t, z);
  logits_into(params.ema_W, phi, q, t, u);
  u[feedback.answer_tokens[t]] += params.feedback_gain;

  const ProbVector student_full(softmax(z));
  const ProbVector teacher_full(softmax(u));
  const TruncatedDist student = truncate_top_k(student_full, k);
  const TruncatedDist teacher = project_onto(teacher_full, student);
  const auto s = student.outcomes();
  const auto tt = teacher.outcomes();

  // d D / d (outcome mass), up to an additive constant.
  std::vector<double> g(s.size());
  double loss = 0.0;
  if (spec.divergence == Divergence::Kl) {
    loss = detail::kl_terms(s, tt);
    detail::sdpo_advantage_terms(s, tt, g);
    for (double& x : g) x = -x;
  } else {
    loss = detail::jsd_terms(s, tt);
    detail::jsd_advantage_terms(s, tt, g);
  }
  if (grad == nullptr || weight == 0.0) return loss;

  // Through the softmax: dD/dz_v = pi_v (g_{o(v)} - sum_o S_o g_o).
  std::vector<double> g_token(V, g.back());
  for (std::size_t i = 0; i < k; ++i) g_token[student.indices()[i]] = g[i];
  double baseline = 0.0;
  for (std::size_t o = 0; o < s.size(); ++o) baseline += s[o] * g[o];
  for (std::size_t v = 0; v < V; ++v) {
    const double dz = student_full[v] * (g_token[v] - baseline);
    simd::axpy(weight * dz, phi, grad->row(v));
  }
  return loss;
}

double token_log_prob(const PolicyParams& params, const Question& q, std::size_t t,
                      std::span<const Token> prefix, Token token, double coeff, Matrix* grad) {
  check_position(params, q, t, prefix);
  const std::size_t V = params.vocab();
  std::vector<double> phi(params.features.dim());
  params.features.features(q, t, prefix, phi);
  std::vector<double> z(V);
  logits_into(params.W, phi, q, t, z);
  const auto pi = softmax(z);
  const double hi = *std::max_element(z.begin(), z.end());
  double lse = 0.0;
  for (double zi : z) lse += std::exp(zi - hi);
  const double lp = z[token] - hi - std::log(lse);
  if (grad != nullptr && coeff != 0.0) {
    for (std::size_t v = 0; v < V; ++v) {
      const double dz = (v == token ? 1.0 : 0.0) - pi[v];
      simd::axpy(coeff * dz, phi, grad->row(v));
    }
  }
  return lp;
}

void PolicyParams::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["vocab"] = W.rows;
  j["feature_dim"] = W.cols;
  j["context_dim"] = features.context_dim;
  j["length"] = features.length;
  j["W"] = W.data;
  j["ema_W"] = ema_W.data;
  j["feedback_gain"] = feedback_gain;
  j["ema_rate"] = ema_rate;
  j["step"] = step;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump() << '\n';
}

PolicyParams PolicyParams::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    PolicyParams p;
    p.features.vocab = j.at("vocab").get<std::size_t>();
    p.features.context_dim = j.at("context_dim").get<std::size_t>();
    p.features.length = j.at("length").get<std::size_t>();
    const std::size_t cols = j.at("feature_dim").get<std::size_t>();
    if (cols != p.features.dim()) throw ConfigError(path.string() + ": feature_dim mismatch");
    p.W = Matrix(p.features.vocab, cols);
    p.ema_W = Matrix(p.features.vocab, cols);
    p.W.data = j.at("W").get<std::vector<double>>();
    p.ema_W.data = j.at("ema_W").get<std::vector<double>>();
    if (p.W.data.size() != p.features.vocab * cols || p.ema_W.data.size() != p.W.data.size())
      throw ConfigError(path.string() + ": weight matrix size mismatch");
    p.feedback_gain = j.at("feedback_gain").get<double>();
    p.ema_rate = j.at("ema_rate").get<double>();
    p.step = j.at("step").get<std::uint64_t>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace sdlab
