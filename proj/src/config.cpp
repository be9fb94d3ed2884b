#include "sdlab/config.hpp"

#include <fstream>
#include <sstream>

#include "sdlab/error.hpp"

namespace sdlab {
namespace {

using nlohmann::json;

// Error raised while reading a key; the caller maps the key to a line.
struct KeyError {
  std::string key;
  std::string message;
};

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find('"' + key + '"');
  return pos == std::string::npos ? 1 : line_of_offset(text, pos);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw KeyError{key, "bad value for '" + key + "': " + e.what()};
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ":1: cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(origin, line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
}

Divergence parse_divergence(const std::string& s) {
  if (s == "kl") return Divergence::Kl;
  if (s == "jsd") return Divergence::Jsd;
  throw KeyError{"divergence", "divergence must be 'kl' or 'jsd', got '" + s + "'"};
}

template <typename F>
auto with_lines(const std::string& text, const std::string& origin, F&& f) {
  try {
    return f();
  } catch (const KeyError& e) {
    fail(origin, line_of_key(text, e.key), e.message);
  } catch (const ConfigError& e) {
    // Validation errors name the offending field first.
    const std::string msg = e.what();
    const std::string key = msg.substr(0, msg.find(' '));
    fail(origin, line_of_key(text, key), msg);
  }
}

RunConfig run_config_from(const json& root, const std::string& text, const std::string& origin,
                          const std::vector<std::string>& extra_keys) {
  RunConfig rc;
  if (!root.is_object()) fail(origin, 1, "top level must be a JSON object");
  for (const auto& [key, value] : root.items()) {
    if (key == "task") {
      apply_task_json(value, rc.task_params);
    } else if (key == "task_file") {
      rc.task_file = get_as<std::string>(value, key);
    } else if (key == "train") {
      apply_train_json(value, rc.train);
    } else if (std::find(extra_keys.begin(), extra_keys.end(), key) == extra_keys.end()) {
      throw KeyError{key, "unknown key '" + key + "'"};
    }
  }
  rc.train.validate();
  (void)text;
  return rc;
}

}  // namespace

Task RunConfig::make_task() const {
  if (!task_file.empty()) return Task::load_json(task_file);
  return generate_task(task_params);
}

void apply_task_json(const json& j, TaskParams& p) {
  if (!j.is_object()) throw KeyError{"task", "'task' must be an object"};
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") p.seed = get_as<std::uint64_t>(v, key);
    else if (key == "num_questions") p.num_questions = get_as<std::size_t>(v, key);
    else if (key == "vocab") p.vocab = get_as<std::size_t>(v, key);
    else if (key == "length") p.length = get_as<std::size_t>(v, key);
    else if (key == "context_dim") p.context_dim = get_as<std::size_t>(v, key);
    else if (key == "difficulty") {
      try {
        p.difficulty = DifficultySpec::parse(get_as<std::string>(v, key));
      } catch (const ParameterError& e) {
        throw KeyError{key, e.what()};
      }
    } else
      throw KeyError{key, "unknown task key '" + key + "'"};
  }
  if (p.vocab < 2) throw KeyError{"vocab", "vocab must be >= 2"};
  if (p.length < 1) throw KeyError{"length", "length must be >= 1"};
  if (p.num_questions < 1) throw KeyError{"num_questions", "num_questions must be >= 1"};
  if (p.context_dim < 1) throw KeyError{"context_dim", "context_dim must be >= 1"};
}

void apply_train_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw KeyError{"train", "'train' must be an object"};
  for (const auto& [key, v] : j.items()) {
    if (key == "method") {
      try {
        c.method = parse_method(get_as<std::string>(v, key));
      } catch (const ConfigError& e) {
        throw KeyError{key, e.what()};
      }
    } else if (key == "alpha") c.alpha = get_as<double>(v, key);
    else if (key == "divergence") c.divergence = parse_divergence(get_as<std::string>(v, key));
    else if (key == "top_k") c.top_k = get_as<std::size_t>(v, key);
    else if (key == "group_size") c.group_size = get_as<std::size_t>(v, key);
    else if (key == "batch_size") c.batch_size = get_as<std::size_t>(v, key);
    else if (key == "steps") c.steps = get_as<std::size_t>(v, key);
    else if (key == "learning_rate") c.learning_rate = get_as<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = get_as<double>(v, key);
    else if (key == "warmup_steps") c.warmup_steps = get_as<std::size_t>(v, key);
    else if (key == "grad_clip_norm") c.grad_clip_norm = get_as<double>(v, key);
    else if (key == "ema_rate") c.ema_rate = get_as<double>(v, key);
    else if (key == "feedback_gain") c.feedback_gain = get_as<double>(v, key);
    else if (key == "init_scale") c.init_scale = get_as<double>(v, key);
    else if (key == "paced_alpha") c.paced_alpha = get_as<double>(v, key);
    else if (key == "hard_filter_bounds") {
      const auto b = get_as<std::vector<double>>(v, key);
      if (b.size() != 2) throw KeyError{key, "hard_filter_bounds must be [lo, hi]"};
      c.hard_filter_lo = b[0];
      c.hard_filter_hi = b[1];
    } else if (key == "exclude_zero_pass") c.exclude_zero_pass = get_as<bool>(v, key);
    else if (key == "train_temperature") c.train_temperature = get_as<double>(v, key);
    else if (key == "eval_temperature") c.eval_temperature = get_as<double>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else
      throw KeyError{key, "unknown train key '" + key + "'"};
  }
}

json train_config_to_json(const TrainConfig& c) {
  return {{"method", method_name(c.method)},
          {"alpha", c.alpha},
          {"divergence", c.divergence == Divergence::Kl ? "kl" : "jsd"},
          {"top_k", c.top_k},
          {"group_size", c.group_size},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"grad_clip_norm", c.grad_clip_norm},
          {"ema_rate", c.ema_rate},
          {"feedback_gain", c.feedback_gain},
          {"init_scale", c.init_scale},
          {"paced_alpha", c.paced_alpha},
          {"hard_filter_bounds", {c.hard_filter_lo, c.hard_filter_hi}},
          {"exclude_zero_pass", c.exclude_zero_pass},
          {"train_temperature", c.train_temperature},
          {"eval_temperature", c.eval_temperature},
          {"seed", c.seed}};
}

json task_params_to_json(const TaskParams& p) {
  return {{"seed", p.seed},
          {"num_questions", p.num_questions},
          {"vocab", p.vocab},
          {"length", p.length},
          {"context_dim", p.context_dim},
          {"difficulty", p.difficulty.to_string()}};
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  const json root = parse_json(text, origin);
  return with_lines(text, origin, [&] { return run_config_from(root, text, origin, {}); });
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), path.string());
}

ExperimentSpec parse_experiment_spec(const std::string& text, const std::string& origin) {
  const json root = parse_json(text, origin);
  return with_lines(text, origin, [&] {
    ExperimentSpec spec;
    spec.base = run_config_from(root, text, origin, {"methods", "seeds", "out", "jobs"});
    if (!root.contains("methods") || !root["methods"].is_array() || root["methods"].empty())
      throw KeyError{"methods", "'methods' must be a non-empty array"};
    for (const auto& m : root["methods"]) {
      SweepMethod sm;
      sm.train = spec.base.train;
      json overrides = m;
      if (overrides.contains("label")) {
        sm.label = get_as<std::string>(overrides["label"], "label");
        overrides.erase("label");
      }
      apply_train_json(overrides, sm.train);
      sm.train.validate();
      if (sm.label.empty()) sm.label = method_name(sm.train.method);
      for (const auto& other : spec.methods)
        if (other.label == sm.label)
          throw KeyError{"label", "duplicate method label '" + sm.label + "'"};
      spec.methods.push_back(std::move(sm));
    }
    if (!root.contains("seeds") || !root["seeds"].is_array() || root["seeds"].empty())
      throw KeyError{"seeds", "'seeds' must be a non-empty array"};
    spec.seeds = get_as<std::vector<std::uint64_t>>(root["seeds"], "seeds");
    if (root.contains("out")) spec.out_dir = get_as<std::string>(root["out"], "out");
    if (root.contains("jobs")) spec.jobs = std::max<std::size_t>(1, get_as<std::size_t>(root["jobs"], "jobs"));
    return spec;
  });
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  return parse_experiment_spec(read_file(path), path.string());
}

}  // namespace sdlab
