#include "atgan/discriminator.hpp"

#include <algorithm>
#include <stdexcept>

namespace atgan {

DiscriminatorParams DiscriminatorParams::init(const DiscriminatorConfig& cfg, Rng& rng) {
  if (cfg.vocab < 5 || cfg.embed_dim < 1 || cfg.filters < 1 || cfg.windows.empty()) {
    throw std::invalid_argument("discriminator config is degenerate");
  }
  for (int w : cfg.windows) {
    if (w < 1 || w > cfg.t_max) {
      throw std::invalid_argument("critic window " + std::to_string(w) +
                                  " does not fit captions of t_max=" + std::to_string(cfg.t_max));
    }
  }
  auto uniform = [&rng, &cfg](Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-cfg.init_bound, cfg.init_bound));
    return t;
  };
  DiscriminatorParams p;
  p.cfg = cfg;
  p.embed = uniform({cfg.vocab, cfg.embed_dim});
  for (int w : cfg.windows) {
    WindowBlock block;
    for (int f = 0; f < cfg.filters; ++f) {
      block.kernels.push_back(uniform({w, cfg.embed_dim}));
      block.biases.push_back(Tensor::zeros({1}, true));
    }
    // gamma starts at the clip bound: the largest scale the WGAN constraint allows
    block.gamma = Tensor::full({cfg.filters}, cfg.init_bound, true);
    block.beta = Tensor::zeros({cfg.filters}, true);
    block.running_mean = Tensor::zeros({cfg.filters});
    block.running_var = Tensor::full({cfg.filters}, 1.0f);
    p.blocks.push_back(std::move(block));
  }
  const int pooled = static_cast<int>(cfg.windows.size()) * cfg.filters;
  p.fc_w = uniform({pooled, 1});
  p.fc_b = Tensor::zeros({1, 1}, true);
  return p;
}

ParamList DiscriminatorParams::named() const {
  ParamList list;
  list.push_back({"disc.embed", embed});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "disc.win" + std::to_string(cfg.windows[b]);
    for (std::size_t f = 0; f < blocks[b].kernels.size(); ++f) {
      list.push_back({prefix + ".kernel" + std::to_string(f), blocks[b].kernels[f]});
      list.push_back({prefix + ".bias" + std::to_string(f), blocks[b].biases[f]});
    }
    list.push_back({prefix + ".gamma", blocks[b].gamma});
    list.push_back({prefix + ".beta", blocks[b].beta});
  }
  list.push_back({"disc.fc.w", fc_w});
  list.push_back({"disc.fc.b", fc_b});
  return list;
}

ParamList DiscriminatorParams::persisted() const {
  ParamList list = named();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "disc.win" + std::to_string(cfg.windows[b]);
    list.push_back({prefix + ".running_mean", blocks[b].running_mean});
    list.push_back({prefix + ".running_var", blocks[b].running_var});
  }
  return list;
}

DiscriminatorParams DiscriminatorParams::clone() const {
  DiscriminatorParams p;
  p.cfg = cfg;
  p.embed = embed.clone();
  for (const auto& b : blocks) {
    WindowBlock block;
    for (const auto& k : b.kernels) block.kernels.push_back(k.clone());
    for (const auto& bias : b.biases) block.biases.push_back(bias.clone());
    block.gamma = b.gamma.clone();
    block.beta = b.beta.clone();
    block.running_mean = b.running_mean.clone();
    block.running_var = b.running_var.clone();
    p.blocks.push_back(std::move(block));
  }
  p.fc_w = fc_w.clone();
  p.fc_b = fc_b.clone();
  return p;
}

std::vector<int> pad_for_critic(const std::vector<int>& tokens, int t_max) {
  if (static_cast<int>(tokens.size()) > t_max) {
    throw std::invalid_argument("caption of " + std::to_string(tokens.size()) +
                                " tokens exceeds the critic's t_max=" + std::to_string(t_max));
  }
  std::vector<int> out = tokens;
  out.resize(static_cast<std::size_t>(t_max), Vocabulary::kPad);
  return out;
}

Tensor embed_caption(Tape* tape, const std::vector<int>& tokens, const DiscriminatorParams& params) {
  if (static_cast<int>(tokens.size()) != params.cfg.t_max) {
    throw std::invalid_argument("embed_caption: expected exactly t_max=" +
                                std::to_string(params.cfg.t_max) + " tokens, got " +
                                std::to_string(tokens.size()));
  }
  return embed_lookup(tape, params.embed, tokens);
}

Tensor score_batch(Tape* tape, const std::vector<std::vector<int>>& captions,
                   DiscriminatorParams& params, BnMode mode) {
  if (captions.empty()) throw std::invalid_argument("score_batch: empty batch");
  const int t_max = params.cfg.t_max;
  for (int w : params.cfg.windows) {
    if (w > t_max) {
      throw std::invalid_argument("score_batch: window " + std::to_string(w) +
                                  " larger than t_max=" + std::to_string(t_max));
    }
  }
  const int batch = static_cast<int>(captions.size());
  std::vector<Tensor> embedded;
  embedded.reserve(captions.size());
  for (const auto& tokens : captions) embedded.push_back(embed_caption(tape, tokens, params));

  std::vector<Tensor> pooled_per_window;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    auto& block = params.blocks[b];
    const int window = params.cfg.windows[b];
    const int l = t_max - window + 1;
    std::vector<Tensor> stacked;
    stacked.reserve(captions.size());
    for (int i = 0; i < batch; ++i) {
      std::vector<Tensor> columns;
      columns.reserve(block.kernels.size());
      for (std::size_t f = 0; f < block.kernels.size(); ++f) {
        Tensor v = conv_time(tape, embedded[static_cast<std::size_t>(i)], block.kernels[f],
                             block.biases[f]);
        columns.push_back(reshape_copy(tape, v, {l, 1}));
      }
      stacked.push_back(concat_cols(tape, columns));  // L x F
    }
    Tensor all = concat_rows(tape, stacked);  // (B*L) x F
    Tensor normed = batch_norm(tape, all, block.gamma, block.beta, mode,
                               block.running_mean, block.running_var,
                               params.cfg.bn_momentum, params.cfg.bn_eps);
    pooled_per_window.push_back(max_pool_rows(tape, relu(tape, normed), l));  // B x F
  }
  Tensor features = concat_cols(tape, pooled_per_window);  // B x (P*F)
  return add_rows(tape, matmul(tape, features, params.fc_w), params.fc_b);  // B x 1
}

float score_caption(const std::vector<int>& tokens, DiscriminatorParams& params) {
  return score_batch(nullptr, {tokens}, params, BnMode::Infer).values()[0];
}

Tensor wgan_loss(Tape* tape, const Tensor& real_scores, const Tensor& fake_scores) {
  if (real_scores.size() == 0 || fake_scores.size() == 0) {
    throw std::invalid_argument("wgan_loss: empty score list");
  }
  return add(tape, mean_all(tape, fake_scores), scale(tape, mean_all(tape, real_scores), -1.0f));
}

DiscUpdateStats disc_update(const std::vector<std::vector<int>>& real_batch,
                            const std::vector<std::vector<int>>& fake_batch,
                            DiscriminatorParams& params, RmspropState& opt, float clip_bound) {
  if (real_batch.empty() || fake_batch.empty()) {
    throw std::invalid_argument("disc_update: batches must be nonempty");
  }
  const ParamList trainable = params.named();
  zero_grads(trainable);
  Tape tape;
  Tensor real_scores = score_batch(&tape, real_batch, params, BnMode::Train);
  Tensor fake_scores = score_batch(&tape, fake_batch, params, BnMode::Train);
  Tensor loss = wgan_loss(&tape, real_scores, fake_scores);
  tape.backward(loss);
  rmsprop_step(trainable, opt);
  clip_params(trainable, clip_bound);

  DiscUpdateStats stats;
  stats.loss = loss.scalar_value();
  double mr = 0.0, mf = 0.0;
  for (float v : real_scores.values()) mr += v;
  for (float v : fake_scores.values()) mf += v;
  stats.mean_real = static_cast<float>(mr / static_cast<double>(real_scores.size()));
  stats.mean_fake = static_cast<float>(mf / static_cast<double>(fake_scores.size()));
  return stats;
}

}  // namespace atgan
