#pragma once

#include <string>
#include <vector>

#include "atgan/data.hpp"
#include "atgan/ops.hpp"
#include "atgan/optim.hpp"
#include "atgan/rng.hpp"
#include "atgan/tensor.hpp"

namespace atgan {

struct DiscriminatorConfig {
  int vocab = 0;
  int embed_dim = 32;
  int t_max = 16;
  std::vector<int> windows = {2, 3, 4, 5};
  int filters = 32;
  float bn_momentum = 0.9f;
  float bn_eps = 1e-5f;
  float init_bound = 0.01f;  // initial weights already inside the clip range
};

/// Convolutional caption critic: embedding, full-width convolutions per
/// window size, batch norm + ReLU, max-over-time pooling, linear score head.
/// Its embedding table is independent of the generator's.
struct DiscriminatorParams {
  DiscriminatorConfig cfg;

  Tensor embed;  // V x M

  struct WindowBlock {
    std::vector<Tensor> kernels;  // filters of C x M
    std::vector<Tensor> biases;   // scalars
    Tensor gamma, beta;           // [F]
    Tensor running_mean, running_var;  // [F], statistics, not clipped
  };
  std::vector<WindowBlock> blocks;

  Tensor fc_w;  // (P*F) x 1
  Tensor fc_b;  // 1 x 1

  static DiscriminatorParams init(const DiscriminatorConfig& cfg, Rng& rng);
  /// Trainable parameters (optimizer + clipping targets).
  ParamList named() const;
  /// Everything persisted in a checkpoint: named() plus running stats.
  ParamList persisted() const;
  DiscriminatorParams clone() const;
};

/// Right-pads (or validates) a token sequence to t_max for the critic:
/// content tokens including eos when present, no bos, pad elsewhere.
std::vector<int> pad_for_critic(const std::vector<int>& tokens, int t_max);

/// Caption matrix S: row t is the embedding of token t. tokens must already
/// have length t_max (pad included).
Tensor embed_caption(Tape* tape, const std::vector<int>& tokens, const DiscriminatorParams& params);

/// Scores a batch of captions (each padded to t_max) -> [B x 1]. Batch norm
/// runs in the given mode; infer mode leaves the running stats untouched and
/// is deterministic in the parameters.
Tensor score_batch(Tape* tape, const std::vector<std::vector<int>>& captions,
                   DiscriminatorParams& params, BnMode mode);

/// Convenience single-caption score in infer mode.
float score_caption(const std::vector<int>& tokens, DiscriminatorParams& params);

/// mean(fake) - mean(real): the critic minimizes this, pushing real scores
/// above fake ones.
Tensor wgan_loss(Tape* tape, const Tensor& real_scores, const Tensor& fake_scores);

struct DiscUpdateStats {
  float loss = 0.0f;
  float mean_real = 0.0f;
  float mean_fake = 0.0f;
};

/// One critic update: train-mode forward on real then fake, backward of the
/// WGAN loss, RMSprop step, then weight clipping on every trainable tensor.
DiscUpdateStats disc_update(const std::vector<std::vector<int>>& real_batch,
                            const std::vector<std::vector<int>>& fake_batch,
                            DiscriminatorParams& params, RmspropState& opt, float clip_bound);

}  // namespace atgan
