#pragma once

// Run configuration: one JSON document carrying every tunable. User configs
// are validated against the default document (unknown keys and type
// mismatches are config errors) and merged over it, then dotted-path
// overrides apply. The fully resolved copy is what gets persisted.

#include <cstdlib>
#include <string>

#include <json.hpp>

#include "sodgan/common.hpp"

namespace sodgan {

using nlohmann::json;

inline json default_config() {
  return json{
      {"image_size", 64},
      {"class_count", 8},
      {"latent_dim", 64},
      {"threads", 0},  // 0 = hardware concurrency
      {"corpus", {{"n_per_class", 75}, {"seed", 1}, {"dir", "corpus"}}},
      {"gan",
       {{"base_channels", 64},
        {"emb_dim", 16},
        {"epochs", 90},
        {"batch", 16},
        {"lr_g", 2e-4},
        {"lr_d", 2e-4},
        {"adam_beta1", 0.5},
        {"adam_beta2", 0.999},
        {"seed", 11},
        {"ckpt", "models/gan"}}},
      {"schedule", {{"T", 50}, {"beta_start", 1e-4}, {"beta_end", 0.02}}},
      {"den",
       {{"warmup_steps", 500},
        {"epochs", 8},
        {"batch", 16},
        {"lr", 1e-3},
        {"dr_lr", 1e-4},
        {"w_pixel", 1.0},
        {"w_adv", 0.05},
        {"w_prior", 0.05},
        {"eval_cap", 64},
        {"seed", 21},
        {"ckpt", "models/den"},
        {"fewshot_seed", 31},
        {"fewshot", "models/fewshot.jsonl"}}},
      {"maskgen",
       {{"reduced_channels", 8},
        {"head", "mlp-s"},
        {"oaff", "full"},
        {"epochs", 150},
        {"lr", 5e-3},
        {"w_dq", 0.05},
        {"dq_lr", 1e-3},
        {"seed", 41},
        {"ckpt", "models/maskgen"},
        {"dq_ckpt", "models/dq"}}},
      {"dq", {{"epochs", 4}, {"steps_per_epoch", 40}, {"batch", 8}, {"lr", 1e-3}, {"seed", 46}}},
      {"policy", {{"mode", "threshold"}, {"tau", 0.5}, {"rho", 0.5}}},
      {"synth",
       {{"n_keep", 1000}, {"lambda", 1.0}, {"seed", 51}, {"dir", "synth"}, {"workers", 1}}},
      {"sod",
       {{"epochs", 6},
        {"batch", 8},
        {"base", 16},
        {"lr", 2e-3},
        {"seed", 61},
        {"ckpt", "models/sod"},
        {"data", "synth"}}},
      {"eval", {{"beta2", 0.3}, {"s_alpha", 0.5}, {"out", "eval"}, {"cap", 0}}},
  };
}

namespace detail {

inline bool same_json_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

inline void validate_against(const json& defaults, const json& user, const std::string& prefix) {
  require(user.is_object(), ErrKind::config, "config: expected an object at '" + prefix + "'");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    require(defaults.contains(key), ErrKind::config, "config: unknown key '" + path + "'");
    const json& dv = defaults.at(key);
    if (dv.is_object()) {
      validate_against(dv, value, path);
    } else {
      require(same_json_kind(dv, value), ErrKind::config,
              "config: wrong type for key '" + path + "'");
    }
  }
}

inline void merge_into(json& base, const json& user) {
  for (const auto& [key, value] : user.items()) {
    if (base.at(key).is_object())
      merge_into(base.at(key), value);
    else
      base.at(key) = value;
  }
}

}  // namespace detail

// Validates, merges over defaults, returns the fully materialized document.
inline json resolve_config(const json& user) {
  json cfg = default_config();
  detail::validate_against(cfg, user, "");
  detail::merge_into(cfg, user);
  return cfg;
}

// Applies one "path.to.key=value" override; the value is parsed as JSON when
// possible and falls back to a raw string.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrKind::config,
          "config: override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json* node = &cfg;
  std::size_t start = 0;
  std::string walked;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    walked = walked.empty() ? key : walked + "." + key;
    require(node->contains(key), ErrKind::config, "config: unknown key '" + walked + "'");
    node = &node->at(key);
    if (dot == std::string::npos) break;
    start = dot + 1;
    require(node->is_object(), ErrKind::config, "config: '" + walked + "' is not a section");
  }
  require(!node->is_object(), ErrKind::config, "config: cannot assign to section '" + path + "'");

  json parsed;
  try {
    parsed = json::parse(raw);
  } catch (const json::exception&) {
    parsed = raw;
  }
  require(detail::same_json_kind(*node, parsed), ErrKind::config,
          "config: wrong type for key '" + path + "'");
  *node = parsed;
}

inline fs::path config_home(const json& cfg) {
  (void)cfg;
  if (const char* env = std::getenv("SODGAN_HOME")) return fs::path(env);
  return fs::path(".");
}

inline int config_threads(const json& cfg) {
  const int t = cfg.at("threads").get<int>();
  return t > 0 ? t : 0;  // 0 -> resolved by callers via default_threads()
}

}  // namespace sodgan
