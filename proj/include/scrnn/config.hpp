#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrnn/seqmodel.hpp"
#include "scrnn/synthdata.hpp"

namespace scrnn {

enum class Task { Multilabel, Caption };

inline std::string task_name(Task t) { return t == Task::Multilabel ? "multilabel" : "caption"; }

inline Task parse_task(const std::string& s) {
  if (s == "multilabel") return Task::Multilabel;
  if (s == "caption") return Task::Caption;
  throw std::invalid_argument("unknown task '" + s + "' (expected multilabel or caption)");
}

/// Everything a run needs. Serialised as flat `key = value` lines.
struct RunConfig {
  Task task = Task::Multilabel;
  InterfaceVariant variant = InterfaceVariant::SemanticPrediction;
  std::optional<std::uint64_t> seed;
  std::string data_dir;  // empty: the run directory

  DatasetSpec data{};
  std::size_t caption_top_k = 12;

  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  bool peepholes = false;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  bool side_info = false;

  std::size_t unary_epochs = 15;
  std::size_t unary_side_epochs = 10;
  std::size_t unary_batch = 32;
  double unary_lr = 1e-3;
  std::size_t rnn_epochs = 15;
  std::size_t rnn_batch = 32;
  double rnn_lr = 1e-3;
  std::size_t joint_iterations = 1000;
  std::size_t joint_batch = 32;
  double joint_lr = 1e-3;
  double joint_lambda = 1.0;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;

  std::size_t max_len = 8;
  std::size_t beam_width = 3;

  std::size_t ablation_seeds = 5;
  double ablation_threshold = 3.0;
  std::size_t ablation_eval_every = 25;
  std::size_t ablation_probe_size = 200;

  std::uint64_t require_seed() const {
    if (!seed) throw std::invalid_argument("config: seed is mandatory");
    return *seed;
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad value '" + v + "' for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string fmt(bool v) { return v ? "true" : "false"; }
inline std::string fmt(std::size_t v) { return std::to_string(v); }

}  // namespace config_detail

/// Binds every key to a field, for both reading and writing.
template <typename Visitor>
void visit_config(RunConfig& c, Visitor&& v) {
  v("task", c.task);
  v("variant", c.variant);
  v("seed", c.seed);
  v("data_dir", c.data_dir);
  v("data.n_samples", c.data.n_samples);
  v("data.grid", c.data.grid);
  v("data.correlation", c.data.correlation);
  v("data.tag_noise", c.data.tag_noise);
  v("data.tag_drop", c.data.tag_drop);
  v("data.rare_shape_prob", c.data.rare_shape_prob);
  v("data.pixel_noise", c.data.pixel_noise);
  v("data.min_radius", c.data.min_radius);
  v("data.max_radius", c.data.max_radius);
  v("data.position_jitter", c.data.position_jitter);
  v("data.train_fraction", c.data.train_fraction);
  v("caption.top_k", c.caption_top_k);
  v("model.embed_dim", c.embed_dim);
  v("model.hidden", c.hidden);
  v("model.peepholes", c.peepholes);
  v("model.conv1_channels", c.conv1_channels);
  v("model.conv2_channels", c.conv2_channels);
  v("model.side_info", c.side_info);
  v("unary.epochs", c.unary_epochs);
  v("unary.side_epochs", c.unary_side_epochs);
  v("unary.batch", c.unary_batch);
  v("unary.lr", c.unary_lr);
  v("rnn.epochs", c.rnn_epochs);
  v("rnn.batch", c.rnn_batch);
  v("rnn.lr", c.rnn_lr);
  v("joint.iterations", c.joint_iterations);
  v("joint.batch", c.joint_batch);
  v("joint.lr", c.joint_lr);
  v("joint.lambda", c.joint_lambda);
  v("rmsprop.decay", c.rmsprop_decay);
  v("rmsprop.epsilon", c.rmsprop_epsilon);
  v("decode.max_len", c.max_len);
  v("decode.beam_width", c.beam_width);
  v("ablation.seeds", c.ablation_seeds);
  v("ablation.threshold", c.ablation_threshold);
  v("ablation.eval_every", c.ablation_eval_every);
  v("ablation.probe_size", c.ablation_probe_size);
}

/// Sets one key from its text value; unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace config_detail;
  bool found = false;
  visit_config(c, [&](const std::string& k, auto& field) {
    if (k != key) return;
    found = true;
    using F = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<F, Task>) {
      field = parse_task(value);
    } else if constexpr (std::is_same_v<F, InterfaceVariant>) {
      field = parse_variant(value);
    } else if constexpr (std::is_same_v<F, std::optional<std::uint64_t>>) {
      field = parse_number<std::uint64_t>(k, value);
    } else if constexpr (std::is_same_v<F, std::string>) {
      field = value;
    } else if constexpr (std::is_same_v<F, bool>) {
      field = parse_bool(k, value);
    } else if constexpr (std::is_same_v<F, double>) {
      field = parse_number<double>(k, value);
    } else {
      field = parse_number<F>(k, value);
    }
  });
  if (!found) throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Applies "key=value".
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + assignment + "'");
  set_config_value(c, config_detail::trim(assignment.substr(0, eq)), config_detail::trim(assignment.substr(eq + 1)));
}

/// Reads `key = value` lines; blank lines and lines starting with '#' are skipped.
inline void read_config_text(RunConfig& c, std::istream& is) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string t = config_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_override(c, t);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  RunConfig c;
  read_config_text(c, is);
  return c;
}

/// Ordered key/value pairs of the resolved config; an unset seed is omitted.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  using namespace config_detail;
  RunConfig c = cfg;
  std::vector<std::pair<std::string, std::string>> out;
  visit_config(c, [&](const std::string& k, auto& field) {
    using F = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<F, Task>) {
      out.emplace_back(k, task_name(field));
    } else if constexpr (std::is_same_v<F, InterfaceVariant>) {
      out.emplace_back(k, variant_name(field));
    } else if constexpr (std::is_same_v<F, std::optional<std::uint64_t>>) {
      if (field) out.emplace_back(k, std::to_string(*field));
    } else if constexpr (std::is_same_v<F, std::string>) {
      out.emplace_back(k, field);
    } else {
      out.emplace_back(k, fmt(field));
    }
  });
  return out;
}

inline std::string config_text(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

inline DatasetSpec dataset_spec(const RunConfig& c) {
  DatasetSpec d = c.data;
  d.seed = c.require_seed();
  d.validate();
  return d;
}

inline RMSPropConfig optimiser(const RunConfig& c, double lr) { return {lr, c.rmsprop_decay, c.rmsprop_epsilon}; }

}  // namespace scrnn
