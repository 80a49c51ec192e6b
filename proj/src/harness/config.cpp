// SPDX-License-Identifier: Apache-2.0
#include "gsifn/harness/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace gsifn {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(DropoutPosition p) { return p == DropoutPosition::post_softmax ? "post_softmax" : "pre_softmax"; }

namespace {

struct Key {
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <class F>
Key size_key(F field) {
  return {[field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); },
          [field](RunConfig& c, const json& v) {
            if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
            field(c) = v.get<std::size_t>();
          }};
}

template <class F>
Key real_key(F field) {
  return {[field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); },
          [field](RunConfig& c, const json& v) {
            if (!v.is_number()) throw ConfigError("expected a number");
            field(c) = v.get<double>();
          }};
}

template <class F>
Key bool_key(F field) {
  return {[field](const RunConfig& c) { return json(static_cast<bool>(field(const_cast<RunConfig&>(c)))); },
          [field](RunConfig& c, const json& v) {
            if (!v.is_boolean()) throw ConfigError("expected true or false");
            field(c) = v.get<bool>();
          }};
}

Key string_key(std::function<std::string(const RunConfig&)> get, std::function<void(RunConfig&, const std::string&)> set) {
  return {[get](const RunConfig& c) { return json(get(c)); },
          [set](RunConfig& c, const json& v) {
            if (!v.is_string()) throw ConfigError("expected a string");
            set(c, v.get<std::string>());
          }};
}

std::string modalities_str(const ModalitySet& s) {
  std::string out;
  for (std::size_t u = 0; u < 3; ++u)
    if (s[u]) out += modality_tag(static_cast<Modality>(u));
  return out;
}

ModalitySet parse_modalities(const std::string& s) {
  ModalitySet m{false, false, false};
  for (char c : s) {
    const auto pos = std::string("tva").find(c);
    if (pos == std::string::npos || m[pos]) throw ConfigError("modalities must be a subset of \"tva\", got " + s);
    m[pos] = true;
  }
  if (s.empty()) throw ConfigError("modalities must not be empty");
  return m;
}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> k = [] {
    std::map<std::string, Key> m;
    const char* groups[4] = {"text", "vision", "audio", "other"};
    m["model"] = string_key([](const RunConfig& c) { return to_string(c.model.kind); },
                            [](RunConfig& c, const std::string& v) { c.model.kind = parse_fusion(v); });
    m["structure"] = string_key([](const RunConfig& c) { return to_string(c.model.structure); },
                                [](RunConfig& c, const std::string& v) { c.model.structure = parse_structure(v); });
    m["seed"] = {[](const RunConfig& c) { return json(c.seed); },
                 [](RunConfig& c, const json& v) {
                   if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
                   c.seed = v.get<std::uint64_t>();
                 }};
    m["data.manifest"] = string_key([](const RunConfig& c) { return c.manifest; },
                                    [](RunConfig& c, const std::string& v) { c.manifest = v; });
    m["model.d_model"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.fusion.d_model; });
    m["model.heads"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.fusion.heads; });
    m["model.head_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.fusion.head_dim; });
    m["model.layers"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.fusion.layers; });
    m["model.ffn_mult"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.fusion.ffn_mult; });
    m["model.dropout"] = real_key([](RunConfig& c) -> double& { return c.model.fusion.dropout; });
    m["model.hidden"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.hidden; });
    m["model.text_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.text_dim; });
    m["model.vision_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.vision_dim; });
    m["model.audio_dim"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.audio_dim; });
    m["model.vocab"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.vocab; });
    m["model.text_kernel"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.text_kernel; });
    m["model.vision_kernel"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.vision_kernel; });
    m["model.audio_kernel"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.audio_kernel; });
    m["model.modalities"] =
        string_key([](const RunConfig& c) { return modalities_str(c.model.fusion_modalities); },
                   [](RunConfig& c, const std::string& v) { c.model.fusion_modalities = parse_modalities(v); });
    m["attn.dropout_position"] = string_key([](const RunConfig& c) { return to_string(c.dropout_position); },
                                            [](RunConfig& c, const std::string& v) {
                                              if (v == "post_softmax") {
                                                c.dropout_position = DropoutPosition::post_softmax;
                                              } else if (v == "pre_softmax") {
                                                c.dropout_position = DropoutPosition::pre_softmax;
                                              } else {
                                                throw ConfigError("expected post_softmax or pre_softmax");
                                              }
                                            });
    m["mlstm.blocks"] = size_key([](RunConfig& c) -> std::size_t& { return c.model.mlstm.num_blocks; });
    m["mlstm.forget"] = string_key(
        [](const RunConfig& c) { return std::string(c.model.mlstm.forget == ForgetActivation::sigmoid ? "sigmoid" : "exp"); },
        [](RunConfig& c, const std::string& v) {
          if (v != "sigmoid" && v != "exp") throw ConfigError("expected sigmoid or exp");
          c.model.mlstm.forget = v == "sigmoid" ? ForgetActivation::sigmoid : ForgetActivation::exp;
        });
    m["mlstm.stabilized"] = bool_key([](RunConfig& c) -> bool& { return c.model.mlstm.stabilized; });
    m["mlstm.mode"] = string_key(
        [](const RunConfig& c) { return std::string(c.model.mlstm.mode == MlstmMode::parallel ? "parallel" : "recurrent"); },
        [](RunConfig& c, const std::string& v) {
          if (v != "parallel" && v != "recurrent") throw ConfigError("expected parallel or recurrent");
          c.model.mlstm.mode = v == "parallel" ? MlstmMode::parallel : MlstmMode::recurrent;
        });
    m["ulgm.enabled"] = bool_key([](RunConfig& c) -> bool& { return c.ulgm.enabled; });
    m["ulgm.epsilon"] = real_key([](RunConfig& c) -> double& { return c.ulgm.epsilon; });
    m["ulgm.warmup_epochs"] = size_key([](RunConfig& c) -> std::size_t& { return c.ulgm.warmup_epochs; });
    m["ulgm.offset_scale"] = real_key([](RunConfig& c) -> double& { return c.ulgm.offset_scale; });
    m["ulgm.label_min"] = real_key([](RunConfig& c) -> double& { return c.ulgm.label_min; });
    m["ulgm.label_max"] = real_key([](RunConfig& c) -> double& { return c.ulgm.label_max; });
    m["train.epochs"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    m["train.batch_size"] = size_key([](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    for (std::size_t g = 0; g < 4; ++g) {
      m[std::string("train.lr_") + groups[g]] = real_key([g](RunConfig& c) -> double& { return c.train.lr[g]; });
      m[std::string("train.wd_") + groups[g]] =
          real_key([g](RunConfig& c) -> double& { return c.train.weight_decay[g]; });
    }
    m["train.early_stop_mae"] = real_key([](RunConfig& c) -> double& { return c.train.early_stop_mae; });
    m["train.bit_exact"] = bool_key([](RunConfig& c) -> bool& { return c.train.bit_exact; });
    return m;
  }();
  return k;
}

void validate(const RunConfig& c) {
  c.model.validate();
  if (c.train.epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (c.train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  for (std::size_t g = 0; g < 4; ++g) {
    if (c.train.lr[g] < 0) throw ConfigError("learning rates must be >= 0");
    if (c.train.weight_decay[g] < 0) throw ConfigError("weight decay must be >= 0");
  }
  if (!(c.ulgm.label_min < c.ulgm.label_max)) throw ConfigError("ulgm.label_min must be below ulgm.label_max");
  if (c.ulgm.epsilon <= 0) throw ConfigError("ulgm.epsilon must be positive");
}

}  // namespace

std::string RunConfig::to_json() const {
  ordered_json j = ordered_json::object();
  for (const auto& [name, key] : keys()) j[name] = key.get(*this);
  return j.dump(2);
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [name, value] : j.items()) {
    auto it = keys().find(name);
    if (it == keys().end()) throw ConfigError("unknown config key '" + name + "'");
    try {
      it->second.set(c, value);
    } catch (const Error& e) {
      throw ConfigError(name + ": " + e.what());
    }
  }
  c.model.mlstm.input_dim = c.model.fusion.d_model;
  c.model.mlstm.hidden_dim = c.model.fusion.d_model;
  if (!c.manifest.empty() && !base_dir.empty() && std::filesystem::path(c.manifest).is_relative()) {
    c.manifest = (base_dir / c.manifest).lexically_normal().string();
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace gsifn
