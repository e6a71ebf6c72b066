#pragma once

#include <string>
#include <vector>

#include "atgan/data.hpp"
#include "atgan/trainer.hpp"
#include "json.hpp"

namespace atgan {

/// Full run configuration: model dimensions, training schedule and synthetic
/// corpus shape. Loaded from a JSON file with CLI overrides on top
/// (flag wins); unknown keys are rejected. Echoed into checkpoints and
/// reports.
struct RunConfig {
  struct Model {
    int embed_dim = 32;
    int hidden_dim = 64;
    int attn_dim = 32;
    int t_max = 16;
    int critic_embed_dim = 32;
    std::vector<int> critic_windows = {2, 3, 4, 5};
    int critic_filters = 32;
    float bn_momentum = 0.9f;
    float bn_eps = 1e-5f;
  };

  Model model;
  TrainConfig train;
  SynthConfig synth;

  void validate() const;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);  // empty path -> defaults
/// Applies one "section.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);
nlohmann::json run_config_json(const RunConfig& cfg);

}  // namespace atgan
