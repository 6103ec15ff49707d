#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pegcn/common.hpp"
#include "pegcn/model.hpp"
#include "pegcn/synth.hpp"
#include "pegcn/train.hpp"

namespace pegcn {

inline constexpr int kRunConfigFormatVersion = 1;

namespace detail {

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<const char*> allowed,
                           const std::string& context) {
  check(j.is_object(), "config: " + context + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    check(ok, "config: unknown key '" + key + "' in " + context);
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// ---- model config -----------------------------------------------------------

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["topology"] = cfg.topology;
  j["partition_strategy"] = cfg.partition_strategy;
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockSpec& b : cfg.blocks)
    blocks.push_back({{"channels", b.channels}, {"stride", b.stride}});
  j["blocks"] = blocks;
  j["embed_dim"] = cfg.embed_dim;
  j["gru_hidden"] = cfg.gru_hidden;
  j["classes"] = cfg.classes;
  j["temporal_kernel"] = cfg.temporal_kernel;
  j["with_global_attention"] = cfg.with_global_attention;
  j["with_data_graph"] = cfg.with_data_graph;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"preset", "topology", "partition_strategy", "blocks",
                          "embed_dim", "gru_hidden", "classes", "temporal_kernel",
                          "with_global_attention", "with_data_graph"},
                         "model");
  ModelConfig cfg;
  if (j.contains("preset")) apply_preset(cfg, j.at("preset").get<std::string>());
  detail::maybe(j, "topology", cfg.topology);
  detail::maybe(j, "partition_strategy", cfg.partition_strategy);
  if (j.contains("blocks")) {
    cfg.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      detail::reject_unknown(b, {"channels", "stride"}, "model.blocks[]");
      BlockSpec spec;
      spec.channels = b.at("channels").get<std::size_t>();
      detail::maybe(b, "stride", spec.stride);
      cfg.blocks.push_back(spec);
    }
  }
  detail::maybe(j, "embed_dim", cfg.embed_dim);
  detail::maybe(j, "gru_hidden", cfg.gru_hidden);
  detail::maybe(j, "classes", cfg.classes);
  detail::maybe(j, "temporal_kernel", cfg.temporal_kernel);
  detail::maybe(j, "with_global_attention", cfg.with_global_attention);
  detail::maybe(j, "with_data_graph", cfg.with_data_graph);
  return cfg;
}

// ---- run config -------------------------------------------------------------

struct DataConfig {
  std::string train_path;
  std::string eval_path;
};

struct EvalProtocolConfig {
  std::vector<std::size_t> levels = {0, 1, 3, 5, 10};
  std::size_t repeats = 10;
};

struct AblationConfig {
  std::vector<std::size_t> train_levels = {5};
  std::vector<std::size_t> test_levels = {0, 10};
};

struct GradCheckConfig {
  std::size_t frames = 16;
  std::size_t batch = 4;
  std::size_t noise_level = 2;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalProtocolConfig eval;
  AblationConfig ablation;
  GradCheckConfig grad_check;
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"format_version", "model", "loss", "train", "data",
                          "eval", "ablation", "grad_check"},
                         "run config");
  check(j.contains("format_version") &&
            j.at("format_version").get<int>() == kRunConfigFormatVersion,
        "config: missing or unsupported format_version");
  RunConfig cfg;
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::reject_unknown(l, {"lambda", "pe_enabled", "temperature"}, "loss");
    detail::maybe(l, "lambda", cfg.train.loss.lambda);
    detail::maybe(l, "pe_enabled", cfg.train.loss.pe_enabled);
    detail::maybe(l, "temperature", cfg.train.loss.temperature);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(t,
                           {"epochs", "batch_size", "base_lr", "decay_epochs",
                            "decay_factor", "momentum", "weight_decay",
                            "train_noise_level", "seed", "deterministic"},
                           "train");
    detail::maybe(t, "epochs", cfg.train.epochs);
    detail::maybe(t, "batch_size", cfg.train.batch_size);
    detail::maybe(t, "base_lr", cfg.train.base_lr);
    detail::maybe(t, "decay_epochs", cfg.train.decay_epochs);
    detail::maybe(t, "decay_factor", cfg.train.decay_factor);
    detail::maybe(t, "momentum", cfg.train.momentum);
    detail::maybe(t, "weight_decay", cfg.train.weight_decay);
    detail::maybe(t, "train_noise_level", cfg.train.train_noise_level);
    detail::maybe(t, "seed", cfg.train.seed);
    detail::maybe(t, "deterministic", cfg.train.deterministic);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::reject_unknown(d, {"train_path", "eval_path"}, "data");
    detail::maybe(d, "train_path", cfg.data.train_path);
    detail::maybe(d, "eval_path", cfg.data.eval_path);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown(e, {"levels", "repeats"}, "eval");
    detail::maybe(e, "levels", cfg.eval.levels);
    detail::maybe(e, "repeats", cfg.eval.repeats);
    check(cfg.eval.repeats >= 1, "config: eval.repeats must be >= 1");
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    detail::reject_unknown(a, {"train_levels", "test_levels"}, "ablation");
    detail::maybe(a, "train_levels", cfg.ablation.train_levels);
    detail::maybe(a, "test_levels", cfg.ablation.test_levels);
  }
  if (j.contains("grad_check")) {
    const auto& gc = j.at("grad_check");
    detail::reject_unknown(gc, {"frames", "batch", "noise_level", "eps", "tolerance"},
                           "grad_check");
    detail::maybe(gc, "frames", cfg.grad_check.frames);
    detail::maybe(gc, "batch", cfg.grad_check.batch);
    detail::maybe(gc, "noise_level", cfg.grad_check.noise_level);
    detail::maybe(gc, "eps", cfg.grad_check.eps);
    detail::maybe(gc, "tolerance", cfg.grad_check.tolerance);
  }
  validate_train_config(cfg.train);
  return cfg;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_runtime(in.good(), "config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + ": invalid JSON (" +
                                e.what() + ")");
  }
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(load_json_file(path));
}

// ---- synthetic dataset spec -------------------------------------------------

inline SyntheticSpec synth_spec_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"format_version", "classes", "per_class", "frames",
                          "topology", "jitter_sigma", "seed", "class_specs"},
                         "synth spec");
  check(j.value("format_version", 0) == 1,
        "synth spec: missing or unsupported format_version");
  SyntheticSpec spec;
  detail::maybe(j, "classes", spec.classes);
  detail::maybe(j, "per_class", spec.per_class);
  detail::maybe(j, "frames", spec.frames);
  detail::maybe(j, "topology", spec.topology);
  detail::maybe(j, "jitter_sigma", spec.jitter_sigma);
  detail::maybe(j, "seed", spec.seed);
  if (j.contains("class_specs")) {
    for (const auto& cs : j.at("class_specs")) {
      detail::reject_unknown(cs, {"family", "amp", "freq"}, "synth class_specs[]");
      ClassSpec out;
      out.family = cs.at("family").get<std::string>();
      if (cs.contains("amp")) {
        out.range.amp_lo = cs.at("amp").at(0).get<double>();
        out.range.amp_hi = cs.at("amp").at(1).get<double>();
      }
      if (cs.contains("freq")) {
        out.range.freq_lo = cs.at("freq").at(0).get<double>();
        out.range.freq_hi = cs.at("freq").at(1).get<double>();
      }
      spec.class_specs.push_back(out);
    }
  }
  return spec;
}

}  // namespace pegcn
