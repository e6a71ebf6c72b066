#include "atgan/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace atgan {

using nlohmann::json;

void RunConfig::validate() const {
  train.validate();
  if (model.embed_dim < 1 || model.hidden_dim < 1 || model.attn_dim < 1 ||
      model.critic_embed_dim < 1 || model.critic_filters < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (model.t_max < 3) throw std::invalid_argument("t_max must be >= 3 (begin + token + end)");
  if (model.critic_windows.empty()) throw std::invalid_argument("critic needs at least one window size");
  for (int w : model.critic_windows) {
    if (w < 1 || w > model.t_max) {
      throw std::invalid_argument("critic window " + std::to_string(w) + " does not fit t_max=" +
                                  std::to_string(model.t_max));
    }
  }
  if (synth.grid < 1 || synth.region_dim < 1 || synth.captions_per_scene < 1) {
    throw std::invalid_argument("synthesis config must be positive");
  }
  if (synth.noise_sigma < 0.0f) throw std::invalid_argument("noise_sigma must be nonnegative");
}

RunConfig default_run_config() { return RunConfig{}; }

nlohmann::json run_config_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"embed_dim", cfg.model.embed_dim},
                {"hidden_dim", cfg.model.hidden_dim},
                {"attn_dim", cfg.model.attn_dim},
                {"t_max", cfg.model.t_max},
                {"critic_embed_dim", cfg.model.critic_embed_dim},
                {"critic_windows", cfg.model.critic_windows},
                {"critic_filters", cfg.model.critic_filters},
                {"bn_momentum", cfg.model.bn_momentum},
                {"bn_eps", cfg.model.bn_eps}};
  j["train"] = {{"lambda1", cfg.train.lambda1},
                {"lambda2", cfg.train.lambda2},
                {"n_roll", cfg.train.n_roll},
                {"g_steps", cfg.train.g_steps},
                {"d_steps", cfg.train.d_steps},
                {"gen_lr", cfg.train.gen_lr},
                {"disc_lr", cfg.train.disc_lr},
                {"gen_batch", cfg.train.gen_batch},
                {"disc_batch", cfg.train.disc_batch},
                {"clip_bound", cfg.train.clip_bound},
                {"pretrain_gen_epochs", cfg.train.pretrain_gen_epochs},
                {"pretrain_disc_steps", cfg.train.pretrain_disc_steps},
                {"adv_epochs", cfg.train.adv_epochs},
                {"seed", cfg.train.seed},
                {"val_metric", cfg.train.val_metric}};
  j["data"] = {{"grid", cfg.synth.grid},
               {"region_dim", cfg.synth.region_dim},
               {"noise_sigma", cfg.synth.noise_sigma},
               {"captions_per_scene", cfg.synth.captions_per_scene},
               {"factual_train", cfg.synth.factual_train},
               {"factual_val", cfg.synth.factual_val},
               {"factual_test", cfg.synth.factual_test},
               {"styled_train", cfg.synth.styled_train},
               {"styled_val", cfg.synth.styled_val},
               {"styled_test", cfg.synth.styled_test}};
  return j;
}

namespace {

template <typename T>
void read_key(const json& section, const std::string& name, T& target) {
  if (section.contains(name)) target = section.at(name).get<T>();
}

void apply_section(RunConfig& cfg, const std::string& section_name, const json& section) {
  const json known = run_config_json(RunConfig{});
  if (!known.contains(section_name)) {
    throw std::invalid_argument("unknown config section '" + section_name + "'");
  }
  for (const auto& [key, _] : section.items()) {
    if (!known.at(section_name).contains(key)) {
      throw std::invalid_argument("unknown config key '" + section_name + "." + key + "'");
    }
  }
  if (section_name == "model") {
    read_key(section, "embed_dim", cfg.model.embed_dim);
    read_key(section, "hidden_dim", cfg.model.hidden_dim);
    read_key(section, "attn_dim", cfg.model.attn_dim);
    read_key(section, "t_max", cfg.model.t_max);
    read_key(section, "critic_embed_dim", cfg.model.critic_embed_dim);
    read_key(section, "critic_windows", cfg.model.critic_windows);
    read_key(section, "critic_filters", cfg.model.critic_filters);
    read_key(section, "bn_momentum", cfg.model.bn_momentum);
    read_key(section, "bn_eps", cfg.model.bn_eps);
  } else if (section_name == "train") {
    read_key(section, "lambda1", cfg.train.lambda1);
    read_key(section, "lambda2", cfg.train.lambda2);
    read_key(section, "n_roll", cfg.train.n_roll);
    read_key(section, "g_steps", cfg.train.g_steps);
    read_key(section, "d_steps", cfg.train.d_steps);
    read_key(section, "gen_lr", cfg.train.gen_lr);
    read_key(section, "disc_lr", cfg.train.disc_lr);
    read_key(section, "gen_batch", cfg.train.gen_batch);
    read_key(section, "disc_batch", cfg.train.disc_batch);
    read_key(section, "clip_bound", cfg.train.clip_bound);
    read_key(section, "pretrain_gen_epochs", cfg.train.pretrain_gen_epochs);
    read_key(section, "pretrain_disc_steps", cfg.train.pretrain_disc_steps);
    read_key(section, "adv_epochs", cfg.train.adv_epochs);
    read_key(section, "seed", cfg.train.seed);
    read_key(section, "val_metric", cfg.train.val_metric);
  } else if (section_name == "data") {
    read_key(section, "grid", cfg.synth.grid);
    read_key(section, "region_dim", cfg.synth.region_dim);
    read_key(section, "noise_sigma", cfg.synth.noise_sigma);
    read_key(section, "captions_per_scene", cfg.synth.captions_per_scene);
    read_key(section, "factual_train", cfg.synth.factual_train);
    read_key(section, "factual_val", cfg.synth.factual_val);
    read_key(section, "factual_test", cfg.synth.factual_test);
    read_key(section, "styled_train", cfg.synth.styled_train);
    read_key(section, "styled_val", cfg.synth.styled_val);
    read_key(section, "styled_test", cfg.synth.styled_test);
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
  for (const auto& [section, body] : j.items()) apply_section(cfg, section, body);
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw std::invalid_argument("override must look like section.key=value, got '" + assignment + "'");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings stay strings
  }
  json section_json;
  section_json[key] = parsed;
  apply_section(cfg, section, section_json);
}

}  // namespace atgan
