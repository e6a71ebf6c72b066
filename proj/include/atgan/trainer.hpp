#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atgan/data.hpp"
#include "atgan/discriminator.hpp"
#include "atgan/generator.hpp"
#include "atgan/metrics.hpp"
#include "atgan/optim.hpp"
#include "atgan/rng.hpp"

namespace atgan {

struct TrainConfig {
  float lambda1 = 1.0f;   // doubly-stochastic attention weight
  float lambda2 = 0.1f;   // policy-gradient weight in the combined loss
  int n_roll = 5;         // MC completions per prefix
  int g_steps = 1;
  int d_steps = 3;
  float gen_lr = 1e-4f;   // Adam
  float disc_lr = 5e-5f;  // RMSprop
  int gen_batch = 64;
  int disc_batch = 80;
  float clip_bound = 0.01f;
  int pretrain_gen_epochs = 30;
  int pretrain_disc_steps = 150;
  int adv_epochs = 20;
  std::uint64_t seed = 1;
  std::string val_metric = "cider";  // cider | bleu4 | rouge_l

  void validate() const;
};

struct TrainLogRow {
  long long step = 0;
  int epoch = 0;
  std::string phase;
  // NaN renders as an empty CSV cell.
  double l1 = std::nan(""), l2 = std::nan(""), combined = std::nan("");
  double critic_loss = std::nan(""), mean_real = std::nan(""), mean_fake = std::nan("");
  double val_metric = std::nan("");
};

class TrainLog {
 public:
  void append(TrainLogRow row) { rows_.push_back(std::move(row)); }
  const std::vector<TrainLogRow>& rows() const { return rows_; }
  static std::string header();
  static std::string format_row(const TrainLogRow& row);
  std::string to_csv() const;
  void write_csv(const std::string& path) const;

 private:
  std::vector<TrainLogRow> rows_;
};

/// Reward source for MC rollouts. The critic implements this with
/// infer-mode scoring; tests may substitute oracles.
struct CaptionScorer {
  virtual ~CaptionScorer() = default;
  virtual std::vector<float> score_captions(const std::vector<std::vector<int>>& captions) const = 0;
};

class CriticScorer : public CaptionScorer {
 public:
  explicit CriticScorer(DiscriminatorParams& params) : params_(&params) {}
  std::vector<float> score_captions(const std::vector<std::vector<int>>& captions) const override;

 private:
  DiscriminatorParams* params_;
};

/// Per-batch, per-position reward estimates; masked positions carry 0.
struct RewardMatrix {
  int batch = 0;
  int t_max = 0;
  std::vector<float> z;
  std::vector<std::uint8_t> mask;

  static RewardMatrix zeros(int batch, int t_max);
  float& at(int b, int t) { return z[static_cast<std::size_t>(b) * t_max + t]; }
  float at(int b, int t) const { return z[static_cast<std::size_t>(b) * t_max + t]; }
  bool valid(int b, int t) const { return mask[static_cast<std::size_t>(b) * t_max + t] != 0; }
};

/// Eq-style average rollout rewards: position t of sequence b gets the mean
/// scorer value over n_roll multinomial completions of the prefix x_{1:t};
/// the final position gets the score of the full sequence itself. Every
/// completion consumes an rng substream derived from (stream_seed, b, t, n),
/// so results do not depend on evaluation order.
RewardMatrix mc_rewards(const std::vector<SampledCaption>& sampled,
                        const std::vector<Tensor>& features, const GeneratorParams& gen,
                        const CaptionScorer& scorer, int n_roll, int t_max,
                        std::uint64_t stream_seed);

/// REINFORCE objective: -(1/B) sum_b sum_t logp(x_t) * Z[b,t] over unmasked
/// positions. Rewards are constants; gradients flow through the
/// log-probabilities only.
Tensor pg_loss(Tape* tape, const std::vector<SampledCaption>& sampled, const RewardMatrix& rewards);

/// lambda2 * l1 + l2.
Tensor combined_generator_loss(Tape* tape, const Tensor& l1, const Tensor& l2, float lambda2);

std::vector<CaptionExample> encode_batch(const Dataset& data, const Vocabulary& vocab,
                                         const std::vector<TrainItem>& items, int t_max);

/// Critic view of an encoded caption: begin token dropped, right-padded.
std::vector<int> critic_view(const std::vector<int>& encoded, int t_max);

/// Greedy-decodes one caption per distinct image of the split/filter and
/// scores it against that image's gold captions with the named metric.
double validation_metric(const GeneratorParams& params, const Dataset& data,
                         const Vocabulary& vocab, Split split, StyleFilter filter,
                         const std::string& metric_name);

struct CheckpointCandidate {
  GeneratorParams params;
  int epoch = 0;
};

struct SelectionResult {
  int index = 0;
  int epoch = 0;
  std::vector<double> metrics;
};

/// Evaluates every candidate on the validation split; returns the argmax,
/// ties resolved toward the earliest epoch.
SelectionResult select_best(const std::vector<CheckpointCandidate>& candidates, const Dataset& data,
                            const Vocabulary& vocab, Split split, StyleFilter filter,
                            const std::string& metric_name);

struct GenTrainState {
  GeneratorParams params;
  AdamState adam;
  Rng rng{0};
  long long step = 0;
  int epoch = 0;  // next epoch to run
};

struct DiscTrainState {
  DiscriminatorParams params;
  RmspropState rms;
  Rng rng{0};
  long long step = 0;
};

struct TrainedGenerator {
  GeneratorParams best;
  int best_epoch = 0;
  double best_metric = 0.0;
};

using GenEpochHook = std::function<void(const GenTrainState& state, double val)>;
using AdvEpochHook = std::function<void(const GenTrainState& gst, const DiscTrainState& dst, double val)>;

/// MLE pretraining on the factual training split, Adam-optimized, one log
/// row per step plus a validation row per epoch. Returns the best-validation
/// snapshot (running evaluation; ties keep the earlier epoch).
TrainedGenerator pretrain_generator(GenTrainState& st, const Dataset& data, const Vocabulary& vocab,
                                    const TrainConfig& tc, TrainLog& log,
                                    const GenEpochHook& on_epoch = {});

/// Critic pretraining against the frozen generator on factual data:
/// alternating disc_update over (gold, freshly sampled) batches.
void pretrain_discriminator(DiscTrainState& st, const GeneratorParams& gen, const Dataset& data,
                            const Vocabulary& vocab, const TrainConfig& tc, TrainLog& log);

/// Adversarial alternation on the styled training split: g_steps of
/// sample -> mc_rewards -> combined loss -> Adam, then d_steps of critic
/// updates, for the configured epochs. scorer_override replaces the critic
/// as the reward source (the critic is still the d-step target). A non-finite
/// loss aborts with a diagnostic log row. With lambda2 == 0 the g-step
/// reduces to MLE fine-tuning and no rollouts are run.
TrainedGenerator adversarial_train(GenTrainState& gst, DiscTrainState& dst, const Dataset& data,
                                   const Vocabulary& vocab, const TrainConfig& tc, TrainLog& log,
                                   const CaptionScorer* scorer_override = nullptr,
                                   const AdvEpochHook& on_epoch = {});

}  // namespace atgan
