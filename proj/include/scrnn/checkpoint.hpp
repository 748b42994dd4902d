#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scrnn/config.hpp"
#include "scrnn/seqmodel.hpp"

namespace scrnn {

inline constexpr int kCheckpointVersion = 1;

/// {format_version, config: {key: value}, parameters: [{name, shape, values}]}.
/// Doubles are written with round-trip precision, so save -> load -> save is byte-identical.
inline std::string checkpoint_text(const std::vector<Parameter*>& params, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  nlohmann::ordered_json conf = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_entries(cfg)) conf[k] = v;
  j["config"] = conf;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  std::set<std::string> seen;
  for (const Parameter* p : params) {
    if (!seen.insert(p->name).second) throw std::logic_error("duplicate parameter name " + p->name);
    nlohmann::ordered_json e;
    e["name"] = p->name;
    e["shape"] = p->value.shape();
    e["values"] = p->value.values();
    list.push_back(std::move(e));
  }
  j["parameters"] = std::move(list);
  return j.dump(1) + "\n";
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_checkpoint(const std::string& path, SCRModel& m, const RunConfig& cfg) {
  write_text_file(path, checkpoint_text(m.parameters(), cfg));
}

struct LoadedCheckpoint {
  RunConfig config;
  std::map<std::string, Tensor> tensors;
};

inline LoadedCheckpoint parse_checkpoint(const std::string& text, const std::string& origin = "checkpoint") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(origin + ": not valid JSON (" + e.what() + ")");
  }
  if (!j.contains("format_version") || j["format_version"] != kCheckpointVersion) {
    throw std::runtime_error(origin + ": unsupported format_version (expected " + std::to_string(kCheckpointVersion) +
                             ")");
  }
  LoadedCheckpoint out;
  for (const auto& [k, v] : j.at("config").items()) set_config_value(out.config, k, v.get<std::string>());
  for (const auto& e : j.at("parameters")) {
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    auto values = e.at("values").get<std::vector<double>>();
    if (values.size() != shape_size(shape)) {
      throw std::runtime_error(origin + ": parameter " + name + " has " + std::to_string(values.size()) +
                               " values for shape " + shape_str(shape));
    }
    out.tensors.emplace(name, Tensor(shape, std::move(values)));
  }
  return out;
}

inline LoadedCheckpoint read_checkpoint(const std::string& path) { return parse_checkpoint(read_text_file(path), path); }

/// Copies tensors into `params` by name. Every listed parameter must be present
/// with a matching shape.
inline void assign_parameters(const LoadedCheckpoint& ckpt, const std::vector<Parameter*>& params,
                              const std::string& origin = "checkpoint") {
  for (Parameter* p : params) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw std::runtime_error(origin + ": missing parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw std::runtime_error(origin + ": shape mismatch for " + p->name + ": file " + shape_str(it->second.shape()) +
                               ", model " + shape_str(p->value.shape()));
    }
    p->value = it->second;
  }
}

/// Loads every model parameter; the checkpoint must hold exactly the model's parameter set.
inline void load_checkpoint(const LoadedCheckpoint& ckpt, SCRModel& m, const std::string& origin = "checkpoint") {
  const auto params = m.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw std::runtime_error(origin + ": holds " + std::to_string(ckpt.tensors.size()) + " parameters, model has " +
                             std::to_string(params.size()));
  }
  assign_parameters(ckpt, params, origin);
}

}  // namespace scrnn
