#include "sdlab/env.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdlab/error.hpp"

namespace sdlab {

std::vector<double> RolloutGroup::rewards() const {
  std::vector<double> r;
  r.reserve(rollouts.size());
  for (const auto& ro : rollouts) r.push_back(ro.reward);
  return r;
}

DifficultySpec DifficultySpec::uniform(double lo, double hi) {
  if (!(lo <= hi)) throw ParameterError("difficulty: uniform needs lo <= hi");
  DifficultySpec s;
  s.kind = Kind::Uniform;
  s.lo = lo;
  s.hi = hi;
  return s;
}

DifficultySpec DifficultySpec::constant(double value) {
  DifficultySpec s;
  s.kind = Kind::Constant;
  s.value = value;
  return s;
}

DifficultySpec DifficultySpec::parse(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  if (kind == "uniform") {
    double lo, hi;
    if (in >> lo >> hi) return uniform(lo, hi);
  } else if (kind == "constant") {
    double v;
    if (in >> v) return constant(v);
  }
  throw ParameterError("difficulty spec must be 'uniform LO HI' or 'constant V', got '" + text +
                       "'");
}

std::string DifficultySpec::to_string() const {
  std::ostringstream out;
  out.precision(17);
  if (kind == Kind::Uniform)
    out << "uniform " << lo << ' ' << hi;
  else
    out << "constant " << value;
  return out.str();
}

const Question& Task::question(QuestionId id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < questions.size() && questions[id].id == id)
    return questions[id];
  for (const auto& q : questions)
    if (q.id == id) return q;
  throw ParameterError("unknown question id " + std::to_string(id));
}

Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

Task generate_task(const TaskParams& params) {
  if (params.vocab < 2) throw ParameterError("generate_task: V must be >= 2");
  if (params.length < 1) throw ParameterError("generate_task: L must be >= 1");
  if (params.num_questions < 1) throw ParameterError("generate_task: need at least one question");
  if (params.context_dim < 1) throw ParameterError("generate_task: d must be >= 1");

  Task task;
  task.params = params;
  task.questions.reserve(params.num_questions);
  Rng rng = make_stream(params.seed, 0, 0, /*tag=*/0x7a5c);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<Token> token(0, static_cast<Token>(params.vocab - 1));
  std::uniform_real_distribution<double> bias(params.difficulty.lo, params.difficulty.hi);

  for (std::size_t j = 0; j < params.num_questions; ++j) {
    Question q;
    q.id = static_cast<QuestionId>(j);
    // Uniform on the unit sphere.
    q.context.resize(params.context_dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& x : q.context) {
        x = normal(rng);
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : q.context) x *= inv;

    q.answer.resize(params.length);
    for (Token& t : q.answer) t = token(rng);

    q.difficulty_bias = params.difficulty.kind == DifficultySpec::Kind::Uniform
                            ? bias(rng)
                            : params.difficulty.value;
    task.questions.push_back(std::move(q));
  }
  return task;
}

double evaluate(const Question& question, std::span<const Token> tokens) {
  if (tokens.size() != question.answer.size())
    throw ParameterError("evaluate: expected " + std::to_string(question.answer.size()) +
                         " tokens, got " + std::to_string(tokens.size()));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (tokens[t] != question.answer[t]) return 0.0;
  return 1.0;
}

Feedback render_feedback(const Question& question) { return {question.id, question.answer}; }

void Task::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["seed"] = params.seed;
  j["num_questions"] = params.num_questions;
  j["vocab"] = params.vocab;
  j["length"] = params.length;
  j["context_dim"] = params.context_dim;
  j["difficulty"] = params.difficulty.to_string();
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& q : questions)
    qs.push_back({{"id", q.id},
                  {"context", q.context},
                  {"answer", q.answer},
                  {"difficulty_bias", q.difficulty_bias}});
  j["questions"] = std::move(qs);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Task Task::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    Task t;
    t.params.seed = j.at("seed").get<std::uint64_t>();
    t.params.num_questions = j.at("num_questions").get<std::size_t>();
    t.params.vocab = j.at("vocab").get<std::size_t>();
    t.params.length = j.at("length").get<std::size_t>();
    t.params.context_dim = j.at("context_dim").get<std::size_t>();
    t.params.difficulty = DifficultySpec::parse(j.at("difficulty").get<std::string>());
    for (const auto& jq : j.at("questions")) {
      Question q;
      q.id = jq.at("id").get<QuestionId>();
      q.context = jq.at("context").get<std::vector<double>>();
      q.answer = jq.at("answer").get<std::vector<Token>>();
      q.difficulty_bias = jq.at("difficulty_bias").get<double>();
      if (q.answer.size() != t.params.length || q.context.size() != t.params.context_dim)
        throw ConfigError(path.string() + ": question " + std::to_string(q.id) +
                          " has wrong dimensions");
      for (Token tok : q.answer)
        if (tok >= t.params.vocab) throw ConfigError(path.string() + ": answer token >= V");
      t.questions.push_back(std::move(q));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

bool Task::operator==(const Task& o) const {
  if (questions.size() != o.questions.size()) return false;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto& a = questions[i];
    const auto& b = o.questions[i];
    if (a.id != b.id || a.context != b.context || a.answer != b.answer ||
        a.difficulty_bias != b.difficulty_bias)
      return false;
  }
  return params.vocab == o.params.vocab && params.length == o.params.length &&
         params.context_dim == o.params.context_dim;
}

}  // namespace sdlab
