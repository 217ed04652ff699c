#pragma once

#include "mddnet/core.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <vector>

namespace mddnet {

using json = nlohmann::json;

enum class ModelMode { Mdd, AfemOnly, VfemOnly };
enum class FusionMode { MutualTransformer, Add, Multiply, Concat };
enum class Activation { Gelu, Relu };

inline std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::Mdd: return "mdd";
    case ModelMode::AfemOnly: return "afem_only";
    case ModelMode::VfemOnly: return "vfem_only";
  }
  return "?";
}

inline std::string to_string(FusionMode f) {
  switch (f) {
    case FusionMode::MutualTransformer: return "mt";
    case FusionMode::Add: return "add";
    case FusionMode::Multiply: return "multiply";
    case FusionMode::Concat: return "concat";
  }
  return "?";
}

inline std::string to_string(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

inline ModelMode parse_model_mode(const std::string& s) {
  if (s == "mdd") return ModelMode::Mdd;
  if (s == "afem_only") return ModelMode::AfemOnly;
  if (s == "vfem_only") return ModelMode::VfemOnly;
  throw Error(ErrorCode::UnknownMode, "unknown model mode '" + s + "'");
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "mt") return FusionMode::MutualTransformer;
  if (s == "add") return FusionMode::Add;
  if (s == "multiply") return FusionMode::Multiply;
  if (s == "concat") return FusionMode::Concat;
  throw Error(ErrorCode::UnknownMode, "unknown fusion mode '" + s + "'");
}

inline Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "relu") return Activation::Relu;
  throw Error(ErrorCode::UnknownMode, "unknown activation '" + s + "'");
}

struct ModelConfig {
  int d_a_in = 25;
  int d_v_in = 136;
  int d_a = 71;
  int d_v = 139;
  int seq_len = 256;

  int rel_window = 7;

  std::vector<int> vfem_depths{1, 2, 4, 2};
  std::vector<int> vfem_strides{1, 1, 1, 1};
  int vfem_heads = 1;
  int vfem_groups = 1;
  int vfem_mlp_ratio = 4;
  bool vfem_pre_mlp_norm = true;

  int mt_depth = 1;
  int joint_depth = 1;
  int joint_ff_ratio = 4;
  Activation activation = Activation::Gelu;
  int pool_window = 3;

  int head_hidden = 64;

  double bn_momentum = 0.1;
  double norm_eps = 1e-5;

  ModelMode mode = ModelMode::Mdd;
  FusionMode fusion = FusionMode::MutualTransformer;

  int d_m() const { return d_a + d_v; }
  int d_z() const { return 2 * d_m(); }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw Error(ErrorCode::InvalidConfig, msg);
    };
    need(d_a_in > 0 && d_v_in > 0 && d_a > 0 && d_v > 0, "feature widths must be positive");
    need(seq_len > 0, "seq_len must be positive");
    need(rel_window > 0 && rel_window % 2 == 1, "rel_window must be odd and positive");
    need(vfem_depths.size() == 4 && vfem_strides.size() == 4, "vfem needs exactly four stages");
    for (int d : vfem_depths) need(d >= 0, "stage depth must be non-negative");
    for (int s : vfem_strides) need(s >= 1, "stage stride must be >= 1");
    need(vfem_heads > 0 && d_v % vfem_heads == 0, "vfem_heads must divide d_v");
    need(vfem_groups > 0 && d_v % vfem_groups == 0, "vfem_groups must divide d_v");
    need(vfem_mlp_ratio > 0 && joint_ff_ratio > 0, "ff ratios must be positive");
    need(mt_depth >= 1 && joint_depth >= 1, "fusion depths must be >= 1");
    need(pool_window >= 1 && pool_window % 2 == 1, "pool_window must be odd and positive");
    need(head_hidden > 0, "head_hidden must be positive");
    need(bn_momentum > 0 && bn_momentum <= 1, "bn_momentum must lie in (0,1]");
    need(norm_eps > 0, "norm_eps must be positive");
  }
};

struct LossConfig {
  double eps_smooth = 0.1;
  double phi = 1.0;
  double gamma = 2.0;
  double lambda = 1e-5;
  bool symmetric_focal = false;

  void validate() const {
    if (!(eps_smooth >= 0 && eps_smooth < 1)) throw Error(ErrorCode::InvalidConfig, "eps_smooth must lie in [0,1)");
    if (!(phi >= 0 && gamma >= 0 && lambda >= 0))
      throw Error(ErrorCode::InvalidConfig, "phi, gamma, lambda must be non-negative");
  }
};

enum class EarlyStopMetric { Loss, F1 };

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.1;
  double adam_eps = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int epochs = 200;
  int batch_size = 8;
  int patience = 15;
  std::uint64_t seed = 0;
  EarlyStopMetric early_stop = EarlyStopMetric::Loss;
  int jobs = 1;
  LossConfig loss;
  ModelConfig model;

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw Error(ErrorCode::InvalidConfig, msg);
    };
    need(lr > 0, "lr must be positive");
    need(weight_decay >= 0, "weight_decay must be non-negative");
    need(adam_eps > 0, "adam_eps must be positive");
    need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adam betas must lie in [0,1)");
    need(epochs > 0, "epochs must be positive");
    need(batch_size > 0, "batch_size must be positive");
    need(patience > 0 && patience < epochs, "patience must be positive and below epochs");
    need(jobs >= 1, "jobs must be >= 1");
    loss.validate();
    model.validate();
  }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + k + "' in " + where);
}

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return json{{"d_a_in", c.d_a_in},
              {"d_v_in", c.d_v_in},
              {"d_a", c.d_a},
              {"d_v", c.d_v},
              {"seq_len", c.seq_len},
              {"rel_window", c.rel_window},
              {"vfem_depths", c.vfem_depths},
              {"vfem_strides", c.vfem_strides},
              {"vfem_heads", c.vfem_heads},
              {"vfem_groups", c.vfem_groups},
              {"vfem_mlp_ratio", c.vfem_mlp_ratio},
              {"vfem_pre_mlp_norm", c.vfem_pre_mlp_norm},
              {"mt_depth", c.mt_depth},
              {"joint_depth", c.joint_depth},
              {"joint_ff_ratio", c.joint_ff_ratio},
              {"activation", to_string(c.activation)},
              {"pool_window", c.pool_window},
              {"head_hidden", c.head_hidden},
              {"bn_momentum", c.bn_momentum},
              {"norm_eps", c.norm_eps},
              {"mode", to_string(c.mode)},
              {"fusion", to_string(c.fusion)}};
}

inline ModelConfig model_config_from_json(const json& j) {
  detail::reject_unknown_keys(j,
                              {"d_a_in", "d_v_in", "d_a", "d_v", "seq_len", "rel_window", "vfem_depths",
                               "vfem_strides", "vfem_heads", "vfem_groups", "vfem_mlp_ratio", "vfem_pre_mlp_norm",
                               "mt_depth", "joint_depth", "joint_ff_ratio", "activation", "pool_window",
                               "head_hidden", "bn_momentum", "norm_eps", "mode", "fusion"},
                              "model");
  ModelConfig c;
  detail::read_opt(j, "d_a_in", c.d_a_in);
  detail::read_opt(j, "d_v_in", c.d_v_in);
  detail::read_opt(j, "d_a", c.d_a);
  detail::read_opt(j, "d_v", c.d_v);
  detail::read_opt(j, "seq_len", c.seq_len);
  detail::read_opt(j, "rel_window", c.rel_window);
  detail::read_opt(j, "vfem_depths", c.vfem_depths);
  detail::read_opt(j, "vfem_strides", c.vfem_strides);
  detail::read_opt(j, "vfem_heads", c.vfem_heads);
  detail::read_opt(j, "vfem_groups", c.vfem_groups);
  detail::read_opt(j, "vfem_mlp_ratio", c.vfem_mlp_ratio);
  detail::read_opt(j, "vfem_pre_mlp_norm", c.vfem_pre_mlp_norm);
  detail::read_opt(j, "mt_depth", c.mt_depth);
  detail::read_opt(j, "joint_depth", c.joint_depth);
  detail::read_opt(j, "joint_ff_ratio", c.joint_ff_ratio);
  detail::read_opt(j, "pool_window", c.pool_window);
  detail::read_opt(j, "head_hidden", c.head_hidden);
  detail::read_opt(j, "bn_momentum", c.bn_momentum);
  detail::read_opt(j, "norm_eps", c.norm_eps);
  std::string s;
  if (j.contains("activation")) {
    detail::read_opt(j, "activation", s);
    c.activation = parse_activation(s);
  }
  if (j.contains("mode")) {
    detail::read_opt(j, "mode", s);
    c.mode = parse_model_mode(s);
  }
  if (j.contains("fusion")) {
    detail::read_opt(j, "fusion", s);
    c.fusion = parse_fusion_mode(s);
  }
  c.validate();
  return c;
}

inline json to_json(const LossConfig& c) {
  return json{{"eps_smooth", c.eps_smooth},
              {"phi", c.phi},
              {"gamma", c.gamma},
              {"lambda", c.lambda},
              {"symmetric_focal", c.symmetric_focal}};
}

inline LossConfig loss_config_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"eps_smooth", "phi", "gamma", "lambda", "symmetric_focal"}, "loss");
  LossConfig c;
  detail::read_opt(j, "eps_smooth", c.eps_smooth);
  detail::read_opt(j, "phi", c.phi);
  detail::read_opt(j, "gamma", c.gamma);
  detail::read_opt(j, "lambda", c.lambda);
  detail::read_opt(j, "symmetric_focal", c.symmetric_focal);
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"adam_eps", c.adam_eps},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"seed", c.seed},
              {"early_stop", c.early_stop == EarlyStopMetric::Loss ? "loss" : "f1"},
              {"jobs", c.jobs},
              {"loss", to_json(c.loss)},
              {"model", to_json(c.model)}};
}

inline TrainConfig train_config_from_json(const json& j) {
  detail::reject_unknown_keys(j,
                              {"lr", "weight_decay", "adam_eps", "beta1", "beta2", "epochs", "batch_size",
                               "patience", "seed", "early_stop", "jobs", "loss", "model"},
                              "config");
  TrainConfig c;
  detail::read_opt(j, "lr", c.lr);
  detail::read_opt(j, "weight_decay", c.weight_decay);
  detail::read_opt(j, "adam_eps", c.adam_eps);
  detail::read_opt(j, "beta1", c.beta1);
  detail::read_opt(j, "beta2", c.beta2);
  detail::read_opt(j, "epochs", c.epochs);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "patience", c.patience);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "jobs", c.jobs);
  if (j.contains("early_stop")) {
    std::string s;
    detail::read_opt(j, "early_stop", s);
    if (s == "loss")
      c.early_stop = EarlyStopMetric::Loss;
    else if (s == "f1")
      c.early_stop = EarlyStopMetric::F1;
    else
      throw Error(ErrorCode::InvalidConfig, "early_stop must be 'loss' or 'f1'");
  }
  if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  c.validate();
  return c;
}

}  // namespace mddnet
