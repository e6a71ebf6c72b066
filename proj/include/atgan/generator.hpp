#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atgan/data.hpp"
#include "atgan/ops.hpp"
#include "atgan/optim.hpp"
#include "atgan/rng.hpp"
#include "atgan/tensor.hpp"

namespace atgan {

struct GeneratorConfig {
  int vocab = 0;
  int embed_dim = 32;
  int region_dim = 16;
  int regions = 9;
  int hidden_dim = 64;
  int attn_dim = 32;
  int t_max = 16;
};

/// Attention LSTM captioner parameters. Gate order everywhere is
/// input, forget, modulation, output.
struct GeneratorParams {
  GeneratorConfig cfg;

  Tensor embed;  // V x M

  // LSTM: hidden->gate, embed->gate, context->gate, bias
  Tensor h_gate[4];  // H x H
  Tensor w_gate[4];  // M x H
  Tensor a_gate[4];  // D x H
  Tensor b_gate[4];  // 1 x H

  // soft attention
  Tensor attn_feat;    // D x A
  Tensor attn_hidden;  // H x A
  Tensor attn_vec;     // A x 1

  // output head
  Tensor out_ctx;     // D x V
  Tensor out_hidden;  // H x V
  Tensor out_bias;    // 1 x V

  // initial-state projections from the mean region feature
  Tensor init_h;  // D x H
  Tensor init_c;  // D x H

  static GeneratorParams init(const GeneratorConfig& cfg, Rng& rng);
  ParamList named() const;
  GeneratorParams clone() const;
};

struct GeneratorState {
  Tensor h;  // 1 x H
  Tensor c;  // 1 x H
};

struct Attention {
  Tensor weights;  // 1 x K, nonnegative, sums to 1
  Tensor context;  // 1 x D, convex combination of region features
};

/// h0/c0 from a learned projection of the mean region feature.
GeneratorState init_state(Tape* tape, const Tensor& features, const GeneratorParams& params);

/// Soft attention driven by the previous hidden state: energies
/// w_e' tanh(W_a' a_j + W_h' h_prev), softmax-normalized; the context is the
/// weight-averaged region feature.
Attention attend(Tape* tape, const Tensor& h_prev, const Tensor& features, const GeneratorParams& params);

/// One LSTM step on (previous word embedding, attention context).
GeneratorState lstm_step(Tape* tape, const GeneratorState& state, int prev_word_id,
                         const Tensor& context, const GeneratorParams& params);

/// softmax(context * W_a + h * W_h + b_w) over the vocabulary.
Tensor word_distribution(Tape* tape, const Tensor& context, const Tensor& h,
                         const GeneratorParams& params);

struct CaptionExample {
  Tensor features;       // K x D
  std::vector<int> ids;  // encoded: bos + tokens + eos + padding
};

/// Teacher-forced negative log-likelihood plus the doubly-stochastic
/// attention penalty, averaged over the batch. Targets are every encoded
/// token after bos up to the first pad (eos included when present); padding
/// contributes to neither term.
Tensor mle_loss(Tape* tape, const std::vector<CaptionExample>& batch,
                const GeneratorParams& params, float lambda1);

enum class SampleMode { Multinomial, Greedy };

struct SampledCaption {
  std::vector<int> ids;               // generated tokens; ends with eos unless truncated at t_max
  std::vector<Tensor> step_logprobs;  // scalar log p(x_t), one per token
  std::vector<Tensor> alphas;         // 1 x K per step
  std::vector<Tensor> contexts;       // 1 x D per step
};

/// Autoregressive decoding from the begin token. Multinomial mode draws from
/// the word distribution; greedy takes the argmax (ties -> lowest id).
/// Stops after emitting eos or at t_max tokens. Pass a tape to make the
/// recorded log-probabilities differentiable.
SampledCaption sample_caption(Tape* tape, const Tensor& features, const GeneratorParams& params,
                              SampleMode mode, int t_max, Rng& rng);

/// Re-runs the prefix teacher-forced, then completes it multinomially.
/// A prefix that already ends with eos or has t_max tokens is returned
/// unchanged.
std::vector<int> rollout(const std::vector<int>& prefix, const Tensor& features,
                         const GeneratorParams& params, int t_max, Rng& rng);

/// Greedy token accuracy of the generator against gold captions:
/// position-wise matches divided by total gold length (eos included).
double greedy_token_accuracy(const Dataset& dataset, const std::vector<TrainItem>& items,
                             const GeneratorParams& params, const Vocabulary& vocab);

}  // namespace atgan
