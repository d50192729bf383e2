// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ddit/errors.hpp"

namespace ddit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// validation

void DatasetSpec::validate() const {
  if (mode == DataMode::kPoints) {
    if (!(mode_std >= 0.0)) throw ConfigError("data.mode_std must be >= 0");
  } else {
    if (image_size == 0 || channels == 0) throw ConfigError("data.image_size/channels must be > 0");
    if (num_classes < 1) throw ConfigError("data.num_classes must be >= 1");
    if (!(blob_std > 0.0)) throw ConfigError("data.blob_std must be > 0");
  }
}

std::size_t ModelConfig::token_count() const {
  if (input_mode == DataMode::kPoints) return 1;
  const std::size_t g = image_size / patch_size;
  return g * g;
}

std::size_t ModelConfig::token_dim() const {
  return input_mode == DataMode::kPoints ? point_dim : channels * patch_size * patch_size;
}

void ModelConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("model.num_blocks must be >= 1");
  if (hidden_dim < 1 || num_heads < 1) throw ConfigError("model.hidden_dim and num_heads must be >= 1");
  if (hidden_dim % num_heads != 0) throw ConfigError("model.hidden_dim must be divisible by num_heads");
  if (use_long_residual && num_blocks % 2 != 0) {
    throw ConfigError("model.num_blocks must be even when use_long_residual is on");
  }
  if (mlp_ratio < 1) throw ConfigError("model.mlp_ratio must be >= 1");
  if (time_freq_dim < 2 || time_freq_dim % 2 != 0) throw ConfigError("model.time_freq_dim must be even");
  if (input_mode == DataMode::kGrid) {
    if (patch_size < 1 || image_size % patch_size != 0) {
      throw ConfigError("model.patch_size must divide the image size");
    }
  }
  if (num_classes < 1) throw ConfigError("model.num_classes must be >= 1");
}

ModelConfig with_geometry(ModelConfig model, const DatasetSpec& data) {
  model.input_mode = data.mode;
  if (data.mode == DataMode::kPoints) {
    model.point_dim = 2;
    model.num_classes = data.kind == PointKind::kGaussian8 ? 8 : 1;
  } else {
    model.channels = data.channels;
    model.image_size = data.image_size;
    model.num_classes = data.num_classes;
  }
  return model;
}

std::size_t DiversityConfig::subset_size(std::size_t num_blocks) const {
  const std::size_t s = layer_subset_size == 0 ? std::min<std::size_t>(10, num_blocks) : layer_subset_size;
  return s;
}

void DiversityConfig::validate() const {
  if (lambda_orth < 0 || lambda_mi < 0 || lambda_disp < 0) throw ConfigError("diversity lambdas must be >= 0");
  if (!(adaptive_lo >= 0.0 && adaptive_lo < adaptive_hi)) {
    throw ConfigError("diversity requires 0 <= adaptive_lo < adaptive_hi");
  }
  if (!(eps > 0.0)) throw ConfigError("diversity.eps must be > 0");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(label_dropout_prob >= 0.0 && label_dropout_prob < 1.0)) {
    throw ConfigError("train.label_dropout_prob must lie in [0, 1)");
  }
  if (!(alignment_coef >= 0.0)) throw ConfigError("train.alignment_coef must be >= 0");
  if (alignment_dim < 1 || projector_hidden < 1) throw ConfigError("train.alignment_dim/projector_hidden must be >= 1");
}

void SampleConfig::validate() const {
  if (num_steps < 1) throw ConfigError("sample.num_steps must be >= 1");
  if (!(cfg_scale >= 0.0)) throw ConfigError("sample.cfg_scale must be >= 0");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("sample.t_min must lie in (0, 1)");
}

void RunConfig::finalize() {
  data.validate();
  model = with_geometry(model, data);
  model.validate();
  diversity.validate();
  train.validate();
  sample.validate();
  if (train.alignment && train.alignment_depth >= model.num_blocks) {
    throw ConfigError("train.alignment_depth must be < model.num_blocks");
  }
  const std::size_t s = diversity.subset_size(model.num_blocks);
  if (train.diversity && (s < 2 || s > model.num_blocks)) {
    throw ConfigError("diversity.layer_subset_size must lie in [2, num_blocks]");
  }
  if (sample.class_id && *sample.class_id >= model.num_classes) {
    throw ConfigError("sample.class_id out of range");
  }
}

// ---------------------------------------------------------------------------
// enums

std::string to_string(DataMode m) { return m == DataMode::kPoints ? "points" : "grid"; }
std::string to_string(PointKind k) { return k == PointKind::kGaussian8 ? "gaussian8" : "checkerboard"; }
std::string to_string(SampleMode m) { return m == SampleMode::kSde ? "sde" : "ode"; }

SampleMode parse_sample_mode(std::string_view s) {
  if (s == "sde") return SampleMode::kSde;
  if (s == "ode") return SampleMode::kOde;
  throw ConfigError("unknown sample mode '" + std::string(s) + "'");
}

namespace {

DataMode parse_data_mode(const std::string& s) {
  if (s == "points") return DataMode::kPoints;
  if (s == "grid") return DataMode::kGrid;
  throw ConfigError("unknown data.mode '" + s + "'");
}

PointKind parse_point_kind(const std::string& s) {
  if (s == "gaussian8") return PointKind::kGaussian8;
  if (s == "checkerboard") return PointKind::kCheckerboard;
  throw ConfigError("unknown data.kind '" + s + "'");
}

// Reads keys from one JSON object and rejects anything left unread.
class Group {
 public:
  Group(const json& parent, const char* name) : name_(name) {
    if (!parent.contains(name)) return;
    obj_ = &parent.at(name);
    if (!obj_->is_object()) throw ConfigError(std::string("\"") + name + "\" must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
            throw ConfigError("");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(std::string(name_) + "." + key + ": wrong type or value");
    }
  }

  void read_optional_index(const char* key, std::optional<std::size_t>& out) {
    known_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    if (v.is_null()) {
      out.reset();
    } else if (v.is_number_unsigned()) {
      out = v.get<std::size_t>();
    } else {
      throw ConfigError(std::string(name_) + "." + key + ": expected a class index or null");
    }
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, _] : obj_->items()) {
      if (!known_.count(k)) throw ConfigError("unknown key \"" + std::string(name_) + "." + k + "\"");
    }
  }

 private:
  const char* name_;
  const json* obj_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"num_blocks", c.model.num_blocks},       {"hidden_dim", c.model.hidden_dim},
                {"num_heads", c.model.num_heads},         {"mlp_ratio", c.model.mlp_ratio},
                {"use_long_residual", c.model.use_long_residual},
                {"patch_size", c.model.patch_size},       {"time_freq_dim", c.model.time_freq_dim},
                {"init_seed", c.model.init_seed}};
  j["diversity"] = {{"lambda_orth", c.diversity.lambda_orth},
                    {"lambda_mi", c.diversity.lambda_mi},
                    {"lambda_disp", c.diversity.lambda_disp},
                    {"adaptive_lo", c.diversity.adaptive_lo},
                    {"adaptive_hi", c.diversity.adaptive_hi},
                    {"layer_subset_size", c.diversity.layer_subset_size},
                    {"eps", c.diversity.eps},
                    {"selection_seed", c.diversity.selection_seed}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"total_steps", c.train.total_steps},
                {"label_dropout_prob", c.train.label_dropout_prob},
                {"diversity", c.train.diversity},
                {"alignment", c.train.alignment},
                {"alignment_depth", c.train.alignment_depth},
                {"alignment_coef", c.train.alignment_coef},
                {"alignment_dim", c.train.alignment_dim},
                {"projector_hidden", c.train.projector_hidden},
                {"encoder_seed", c.train.encoder_seed},
                {"seed", c.train.seed},
                {"checkpoint_interval", c.train.checkpoint_interval},
                {"log_interval", c.train.log_interval}};
  j["sample"] = {{"num_steps", c.sample.num_steps},
                 {"mode", to_string(c.sample.mode)},
                 {"cfg_scale", c.sample.cfg_scale},
                 {"class_id", c.sample.class_id ? json(*c.sample.class_id) : json(nullptr)},
                 {"num_samples", c.sample.num_samples},
                 {"seed", c.sample.seed},
                 {"t_min", c.sample.t_min}};
  j["data"] = {{"mode", to_string(c.data.mode)},
               {"kind", to_string(c.data.kind)},
               {"mode_std", c.data.mode_std},
               {"image_size", c.data.image_size},
               {"channels", c.data.channels},
               {"num_classes", c.data.num_classes},
               {"blob_std", c.data.blob_std},
               {"seed", c.data.seed}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> kGroups{"model", "diversity", "train", "sample", "data"};
  for (const auto& [k, _] : j.items()) {
    if (!kGroups.count(k)) throw ConfigError("unknown key \"" + k + "\"");
  }
  RunConfig c;
  {
    Group g(j, "model");
    g.read("num_blocks", c.model.num_blocks);
    g.read("hidden_dim", c.model.hidden_dim);
    g.read("num_heads", c.model.num_heads);
    g.read("mlp_ratio", c.model.mlp_ratio);
    g.read("use_long_residual", c.model.use_long_residual);
    g.read("patch_size", c.model.patch_size);
    g.read("time_freq_dim", c.model.time_freq_dim);
    g.read("init_seed", c.model.init_seed);
    g.finish();
  }
  {
    Group g(j, "diversity");
    g.read("lambda_orth", c.diversity.lambda_orth);
    g.read("lambda_mi", c.diversity.lambda_mi);
    g.read("lambda_disp", c.diversity.lambda_disp);
    g.read("adaptive_lo", c.diversity.adaptive_lo);
    g.read("adaptive_hi", c.diversity.adaptive_hi);
    g.read("layer_subset_size", c.diversity.layer_subset_size);
    g.read("eps", c.diversity.eps);
    g.read("selection_seed", c.diversity.selection_seed);
    g.finish();
  }
  {
    Group g(j, "train");
    g.read("learning_rate", c.train.learning_rate);
    g.read("beta1", c.train.beta1);
    g.read("beta2", c.train.beta2);
    g.read("adam_eps", c.train.adam_eps);
    g.read("weight_decay", c.train.weight_decay);
    g.read("batch_size", c.train.batch_size);
    g.read("total_steps", c.train.total_steps);
    g.read("label_dropout_prob", c.train.label_dropout_prob);
    g.read("diversity", c.train.diversity);
    g.read("alignment", c.train.alignment);
    g.read("alignment_depth", c.train.alignment_depth);
    g.read("alignment_coef", c.train.alignment_coef);
    g.read("alignment_dim", c.train.alignment_dim);
    g.read("projector_hidden", c.train.projector_hidden);
    g.read("encoder_seed", c.train.encoder_seed);
    g.read("seed", c.train.seed);
    g.read("checkpoint_interval", c.train.checkpoint_interval);
    g.read("log_interval", c.train.log_interval);
    g.finish();
  }
  {
    Group g(j, "sample");
    std::string mode = to_string(c.sample.mode);
    g.read("num_steps", c.sample.num_steps);
    g.read("mode", mode);
    g.read("cfg_scale", c.sample.cfg_scale);
    g.read_optional_index("class_id", c.sample.class_id);
    g.read("num_samples", c.sample.num_samples);
    g.read("seed", c.sample.seed);
    g.read("t_min", c.sample.t_min);
    g.finish();
    c.sample.mode = parse_sample_mode(mode);
  }
  {
    Group g(j, "data");
    std::string mode = to_string(c.data.mode), kind = to_string(c.data.kind);
    g.read("mode", mode);
    g.read("kind", kind);
    g.read("mode_std", c.data.mode_std);
    g.read("image_size", c.data.image_size);
    g.read("channels", c.data.channels);
    g.read("num_classes", c.data.num_classes);
    g.read("blob_std", c.data.blob_std);
    g.read("seed", c.data.seed);
    g.finish();
    c.data.mode = parse_data_mode(mode);
    c.data.kind = parse_point_kind(kind);
  }
  c.finalize();
  return c;
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace ddit
