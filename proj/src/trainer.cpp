#include "atgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace atgan {

namespace {

// Stage tags mixed into the shuffle seed so stages draw distinct orders.
constexpr std::uint64_t kShufflePretrainGen = 0x11;
constexpr std::uint64_t kShuffleAdvG = 0x22;
constexpr std::uint64_t kShuffleAdvD = 0x33;
constexpr std::uint64_t kShufflePretrainDisc = 0x44;

}  // namespace

void TrainConfig::validate() const {
  if (lambda1 < 0.0f || lambda2 < 0.0f) throw std::invalid_argument("lambda1/lambda2 must be nonnegative");
  if (n_roll < 1) throw std::invalid_argument("n_roll must be >= 1");
  if (g_steps < 0 || d_steps < 0) throw std::invalid_argument("g_steps/d_steps must be nonnegative");
  if (gen_batch < 1 || disc_batch < 1) throw std::invalid_argument("batch sizes must be positive");
  if (!(clip_bound > 0.0f)) throw std::invalid_argument("clip_bound must be positive");
  if (pretrain_gen_epochs < 0 || pretrain_disc_steps < 0 || adv_epochs < 0) {
    throw std::invalid_argument("epoch/step counts must be nonnegative");
  }
  if (val_metric != "cider" && val_metric != "bleu4" && val_metric != "rouge_l") {
    throw std::invalid_argument("unknown validation metric '" + val_metric + "'");
  }
}

std::string TrainLog::header() {
  return "step,epoch,phase,L1,L2,combined,critic_loss,mean_real,mean_fake,val_metric";
}

static std::string cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string TrainLog::format_row(const TrainLogRow& r) {
  std::ostringstream os;
  os << r.step << "," << r.epoch << "," << r.phase << "," << cell(r.l1) << "," << cell(r.l2) << ","
     << cell(r.combined) << "," << cell(r.critic_loss) << "," << cell(r.mean_real) << ","
     << cell(r.mean_fake) << "," << cell(r.val_metric);
  return os.str();
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << header() << "\n";
  for (const auto& row : rows_) os << format_row(row) << "\n";
  return os.str();
}

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write train log '" + path + "'");
  out << to_csv();
}

std::vector<float> CriticScorer::score_captions(const std::vector<std::vector<int>>& captions) const {
  Tensor scores = score_batch(nullptr, captions, *params_, BnMode::Infer);
  return scores.values();
}

RewardMatrix RewardMatrix::zeros(int batch, int t_max) {
  RewardMatrix m;
  m.batch = batch;
  m.t_max = t_max;
  m.z.assign(static_cast<std::size_t>(batch) * static_cast<std::size_t>(t_max), 0.0f);
  m.mask.assign(m.z.size(), 0);
  return m;
}

RewardMatrix mc_rewards(const std::vector<SampledCaption>& sampled,
                        const std::vector<Tensor>& features, const GeneratorParams& gen,
                        const CaptionScorer& scorer, int n_roll, int t_max,
                        std::uint64_t stream_seed) {
  if (n_roll < 1) throw std::invalid_argument("mc_rewards: n_roll must be >= 1");
  if (sampled.size() != features.size()) {
    throw std::invalid_argument("mc_rewards: " + std::to_string(sampled.size()) + " captions vs " +
                                std::to_string(features.size()) + " feature sets");
  }
  RewardMatrix rewards = RewardMatrix::zeros(static_cast<int>(sampled.size()), t_max);
  for (int b = 0; b < rewards.batch; ++b) {
    const auto& ids = sampled[static_cast<std::size_t>(b)].ids;
    const int seq_len = static_cast<int>(ids.size());
    if (seq_len == 0 || seq_len > t_max) {
      throw std::invalid_argument("mc_rewards: sampled sequence " + std::to_string(b) +
                                  " has invalid length " + std::to_string(seq_len));
    }
    // Replay the sampled tokens once, snapshotting the state after each
    // position; rollout continuations restart from those states.
    const Tensor& feats = features[static_cast<std::size_t>(b)];
    std::vector<GeneratorState> states;
    states.reserve(static_cast<std::size_t>(seq_len));
    GeneratorState state = init_state(nullptr, feats, gen);
    int prev = Vocabulary::kBos;
    for (int t = 0; t < seq_len; ++t) {
      Attention att = attend(nullptr, state.h, feats, gen);
      state = lstm_step(nullptr, state, prev, att.context, gen);
      prev = ids[static_cast<std::size_t>(t)];
      states.push_back(state);
    }
    for (int t = 1; t <= seq_len; ++t) {
      if (t == seq_len) {
        std::vector<int> full(ids.begin(), ids.end());
        const float score = scorer.score_captions({pad_for_critic(full, t_max)})[0];
        rewards.at(b, t - 1) = score;
        rewards.mask[static_cast<std::size_t>(b) * t_max + (t - 1)] = 1;
        continue;
      }
      std::vector<std::vector<int>> completions;
      completions.reserve(static_cast<std::size_t>(n_roll));
      for (int n = 0; n < n_roll; ++n) {
        const std::uint64_t sub = Rng::mix(Rng::mix(Rng::mix(stream_seed, static_cast<std::uint64_t>(b)),
                                                    static_cast<std::uint64_t>(t)),
                                           static_cast<std::uint64_t>(n));
        Rng rng(sub);
        std::vector<int> full(ids.begin(), ids.begin() + t);
        GeneratorState s = states[static_cast<std::size_t>(t - 1)];
        int last = ids[static_cast<std::size_t>(t - 1)];
        while (static_cast<int>(full.size()) < t_max && full.back() != Vocabulary::kEos) {
          Attention att = attend(nullptr, s.h, feats, gen);
          s = lstm_step(nullptr, s, last, att.context, gen);
          Tensor dist = word_distribution(nullptr, att.context, s.h, gen);
          const auto& p = dist.values();
          const double u = rng.uniform();
          double cum = 0.0;
          int id = static_cast<int>(p.size()) - 1;
          for (std::size_t i = 0; i < p.size(); ++i) {
            cum += static_cast<double>(p[i]);
            if (u < cum) {
              id = static_cast<int>(i);
              break;
            }
          }
          full.push_back(id);
          last = id;
        }
        completions.push_back(pad_for_critic(full, t_max));
      }
      const std::vector<float> scores = scorer.score_captions(completions);
      double acc = 0.0;
      for (float s : scores) acc += s;
      rewards.at(b, t - 1) = static_cast<float>(acc / static_cast<double>(n_roll));
      rewards.mask[static_cast<std::size_t>(b) * t_max + (t - 1)] = 1;
    }
  }
  return rewards;
}

Tensor pg_loss(Tape* tape, const std::vector<SampledCaption>& sampled, const RewardMatrix& rewards) {
  if (static_cast<int>(sampled.size()) != rewards.batch) {
    throw std::invalid_argument("pg_loss: batch mismatch: " + std::to_string(sampled.size()) + " vs " +
                                std::to_string(rewards.batch));
  }
  const float inv_b = 1.0f / static_cast<float>(sampled.size());
  Tensor total;
  for (int b = 0; b < rewards.batch; ++b) {
    const auto& cap = sampled[static_cast<std::size_t>(b)];
    if (static_cast<int>(cap.ids.size()) > rewards.t_max) {
      throw std::invalid_argument("pg_loss: sequence longer than the reward matrix");
    }
    for (int t = 0; t < static_cast<int>(cap.ids.size()); ++t) {
      if (!rewards.valid(b, t)) {
        throw std::invalid_argument("pg_loss: reward masked at a sampled position");
      }
      Tensor term = scale(tape, cap.step_logprobs[static_cast<std::size_t>(t)],
                          -rewards.at(b, t) * inv_b);
      total = total.valid() ? add(tape, total, term) : term;
    }
  }
  return total.valid() ? total : Tensor::scalar(0.0f);
}

Tensor combined_generator_loss(Tape* tape, const Tensor& l1, const Tensor& l2, float lambda2) {
  if (lambda2 < 0.0f) throw std::invalid_argument("combined_generator_loss: lambda2 must be nonnegative");
  return add(tape, scale(tape, l1, lambda2), l2);
}

std::vector<CaptionExample> encode_batch(const Dataset& data, const Vocabulary& vocab,
                                         const std::vector<TrainItem>& items, int t_max) {
  std::vector<CaptionExample> batch;
  batch.reserve(items.size());
  for (const auto& item : items) {
    const auto& img = data.images[static_cast<std::size_t>(item.image_index)];
    const auto& cap = img.captions[static_cast<std::size_t>(item.caption_index)];
    batch.push_back(CaptionExample{img.features, encode_caption(cap.tokens, vocab, t_max)});
  }
  return batch;
}

std::vector<int> critic_view(const std::vector<int>& encoded, int t_max) {
  if (encoded.empty() || encoded[0] != Vocabulary::kBos) {
    throw std::invalid_argument("critic_view: expected an encoded caption starting with bos");
  }
  std::vector<int> content(encoded.begin() + 1, encoded.end());
  while (!content.empty() && content.back() == Vocabulary::kPad) content.pop_back();
  return pad_for_critic(content, t_max);
}

namespace {

EvalCorpus greedy_eval_corpus(const GeneratorParams& params, const Dataset& data,
                              const Vocabulary& vocab, Split split, StyleFilter filter) {
  EvalCorpus corpus;
  const auto items = collect_items(data, split, filter);
  std::set<int> image_indices;
  for (const auto& item : items) image_indices.insert(item.image_index);
  Rng unused(0);
  for (int idx : image_indices) {
    const auto& img = data.images[static_cast<std::size_t>(idx)];
    EvalItem ev;
    ev.image_id = img.image_id;
    SampledCaption sc =
        sample_caption(nullptr, img.features, params, SampleMode::Greedy, params.cfg.t_max, unused);
    ev.candidate = decode_caption(sc.ids, vocab);
    if (ev.candidate.empty()) ev.candidate.push_back("<none>");
    for (const auto& cap : img.captions) {
      if (cap.split == split) ev.references.push_back(cap.tokens);
    }
    corpus.push_back(std::move(ev));
  }
  return corpus;
}

double metric_by_name(const EvalCorpus& corpus, const std::string& metric_name) {
  if (metric_name == "cider") return cider_d(corpus);
  if (metric_name == "bleu4") return bleu(corpus, 4)[3];
  if (metric_name == "rouge_l") return rouge_l(corpus);
  throw std::invalid_argument("unknown validation metric '" + metric_name + "'");
}

}  // namespace

double validation_metric(const GeneratorParams& params, const Dataset& data,
                         const Vocabulary& vocab, Split split, StyleFilter filter,
                         const std::string& metric_name) {
  const EvalCorpus corpus = greedy_eval_corpus(params, data, vocab, split, filter);
  if (corpus.empty()) {
    throw std::invalid_argument("validation_metric: no images in the requested split");
  }
  return metric_by_name(corpus, metric_name);
}

SelectionResult select_best(const std::vector<CheckpointCandidate>& candidates, const Dataset& data,
                            const Vocabulary& vocab, Split split, StyleFilter filter,
                            const std::string& metric_name) {
  if (candidates.empty()) throw std::invalid_argument("select_best: no checkpoints");
  SelectionResult result;
  double best = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double m =
        validation_metric(candidates[i].params, data, vocab, split, filter, metric_name);
    result.metrics.push_back(m);
    if (m > best) {
      best = m;
      result.index = static_cast<int>(i);
      result.epoch = candidates[i].epoch;
    }
  }
  return result;
}

TrainedGenerator pretrain_generator(GenTrainState& st, const Dataset& data, const Vocabulary& vocab,
                                    const TrainConfig& tc, TrainLog& log,
                                    const GenEpochHook& on_epoch) {
  tc.validate();
  const auto items = collect_items(data, Split::Train, StyleFilter::FactualOnly);
  if (items.empty()) throw std::invalid_argument("pretrain_generator: no factual training captions");
  st.adam.lr = tc.gen_lr;

  TrainedGenerator result;
  result.best_metric = -1.0;
  for (; st.epoch < tc.pretrain_gen_epochs; ) {
    const auto batches =
        make_batches(items, tc.gen_batch, Rng::mix(tc.seed, kShufflePretrainGen), st.epoch);
    for (const auto& batch : batches) {
      const auto examples = encode_batch(data, vocab, batch, st.params.cfg.t_max);
      Tape tape;
      zero_grads(st.params.named());
      Tensor loss = mle_loss(&tape, examples, st.params, tc.lambda1);
      if (!std::isfinite(loss.scalar_value())) {
        log.append({st.step, st.epoch, "abort", std::nan(""), loss.scalar_value(), std::nan(""),
                    std::nan(""), std::nan(""), std::nan(""), std::nan("")});
        throw std::runtime_error("pretrain_generator: non-finite loss at step " + std::to_string(st.step));
      }
      tape.backward(loss);
      adam_step(st.params.named(), st.adam);
      TrainLogRow row;
      row.step = st.step++;
      row.epoch = st.epoch;
      row.phase = "pretrain-gen";
      row.l2 = loss.scalar_value();
      row.combined = loss.scalar_value();
      log.append(row);
    }
    const double val =
        validation_metric(st.params, data, vocab, Split::Val, StyleFilter::FactualOnly, tc.val_metric);
    TrainLogRow vrow;
    vrow.step = st.step;
    vrow.epoch = st.epoch;
    vrow.phase = "pretrain-gen-val";
    vrow.val_metric = val;
    log.append(vrow);
    if (val > result.best_metric) {
      result.best_metric = val;
      result.best = st.params.clone();
      result.best_epoch = st.epoch;
    }
    st.epoch += 1;
    if (on_epoch) on_epoch(st, val);
  }
  if (!result.best.embed.valid()) {
    // No epochs ran (already complete or zero configured): current params win.
    result.best = st.params.clone();
    result.best_epoch = st.epoch;
    result.best_metric = 0.0;
  }
  return result;
}

void pretrain_discriminator(DiscTrainState& st, const GeneratorParams& gen, const Dataset& data,
                            const Vocabulary& vocab, const TrainConfig& tc, TrainLog& log) {
  tc.validate();
  const auto items = collect_items(data, Split::Train, StyleFilter::FactualOnly);
  if (items.empty()) throw std::invalid_argument("pretrain_discriminator: no factual training captions");
  st.rms.lr = tc.disc_lr;
  const int t_max = gen.cfg.t_max;

  int epoch = 0;
  std::vector<std::vector<TrainItem>> batches;
  std::size_t cursor = 0;
  for (long long s = 0; s < tc.pretrain_disc_steps; ++s) {
    if (cursor == batches.size()) {
      batches = make_batches(items, tc.disc_batch, Rng::mix(tc.seed, kShufflePretrainDisc), epoch++);
      cursor = 0;
    }
    const auto& batch = batches[cursor++];
    std::vector<std::vector<int>> real, fake;
    for (const auto& item : batch) {
      const auto& img = data.images[static_cast<std::size_t>(item.image_index)];
      const auto& cap = img.captions[static_cast<std::size_t>(item.caption_index)];
      real.push_back(critic_view(encode_caption(cap.tokens, vocab, t_max), t_max));
      SampledCaption sc =
          sample_caption(nullptr, img.features, gen, SampleMode::Multinomial, t_max, st.rng);
      fake.push_back(pad_for_critic(sc.ids, t_max));
    }
    const DiscUpdateStats stats = disc_update(real, fake, st.params, st.rms, tc.clip_bound);
    TrainLogRow row;
    row.step = st.step++;
    row.epoch = epoch - 1;
    row.phase = "pretrain-disc";
    row.critic_loss = stats.loss;
    row.mean_real = stats.mean_real;
    row.mean_fake = stats.mean_fake;
    log.append(row);
  }
}

TrainedGenerator adversarial_train(GenTrainState& gst, DiscTrainState& dst, const Dataset& data,
                                   const Vocabulary& vocab, const TrainConfig& tc, TrainLog& log,
                                   const CaptionScorer* scorer_override, const AdvEpochHook& on_epoch) {
  tc.validate();
  const auto items = collect_items(data, Split::Train, StyleFilter::StyledOnly);
  if (items.empty()) throw std::invalid_argument("adversarial_train: no styled training captions");
  gst.adam.lr = tc.gen_lr;
  dst.rms.lr = tc.disc_lr;
  const int t_max = gst.params.cfg.t_max;
  CriticScorer critic_scorer(dst.params);
  const CaptionScorer& scorer = scorer_override ? *scorer_override : critic_scorer;

  // The d-batch stream restarts at every epoch so that resuming from an
  // epoch-boundary checkpoint replays the identical schedule.
  std::vector<std::vector<TrainItem>> d_batches;
  std::size_t d_cursor = 0;
  int d_subepoch = 0;
  auto reset_d_stream = [&]() {
    d_batches.clear();
    d_cursor = 0;
    d_subepoch = 0;
  };
  auto next_d_batch = [&]() -> const std::vector<TrainItem>& {
    if (d_cursor == d_batches.size()) {
      const std::uint64_t epoch_seed =
          Rng::mix(Rng::mix(tc.seed, kShuffleAdvD), static_cast<std::uint64_t>(gst.epoch));
      d_batches = make_batches(items, tc.disc_batch, epoch_seed, d_subepoch++);
      d_cursor = 0;
    }
    return d_batches[d_cursor++];
  };

  auto do_g_step = [&](const std::vector<TrainItem>& batch) {
    const auto examples = encode_batch(data, vocab, batch, t_max);
    Tape tape;
    zero_grads(gst.params.named());
    Tensor l1;
    if (tc.lambda2 > 0.0f) {
      std::vector<SampledCaption> sampled;
      std::vector<Tensor> feats;
      sampled.reserve(batch.size());
      feats.reserve(batch.size());
      for (const auto& item : batch) {
        const auto& img = data.images[static_cast<std::size_t>(item.image_index)];
        sampled.push_back(
            sample_caption(&tape, img.features, gst.params, SampleMode::Multinomial, t_max, gst.rng));
        feats.push_back(img.features);
      }
      const std::uint64_t stream_seed = gst.rng.next_u64();
      const RewardMatrix rewards =
          mc_rewards(sampled, feats, gst.params, scorer, tc.n_roll, t_max, stream_seed);
      l1 = pg_loss(&tape, sampled, rewards);
    } else {
      l1 = Tensor::scalar(0.0f);
    }
    Tensor l2 = mle_loss(&tape, examples, gst.params, tc.lambda1);
    Tensor loss = combined_generator_loss(&tape, l1, l2, tc.lambda2);
    if (!std::isfinite(loss.scalar_value())) {
      log.append({gst.step, gst.epoch, "abort", l1.scalar_value(), l2.scalar_value(),
                  loss.scalar_value(), std::nan(""), std::nan(""), std::nan(""), std::nan("")});
      throw std::runtime_error("adversarial_train: non-finite generator loss at step " +
                               std::to_string(gst.step));
    }
    tape.backward(loss);
    adam_step(gst.params.named(), gst.adam);
    TrainLogRow row;
    row.step = gst.step++;
    row.epoch = gst.epoch;
    row.phase = "adv-g";
    row.l1 = l1.scalar_value();
    row.l2 = l2.scalar_value();
    row.combined = loss.scalar_value();
    log.append(row);
  };

  auto do_d_step = [&](const std::vector<TrainItem>& batch) {
    std::vector<std::vector<int>> real, fake;
    for (const auto& item : batch) {
      const auto& img = data.images[static_cast<std::size_t>(item.image_index)];
      const auto& cap = img.captions[static_cast<std::size_t>(item.caption_index)];
      real.push_back(critic_view(encode_caption(cap.tokens, vocab, t_max), t_max));
      SampledCaption sc =
          sample_caption(nullptr, img.features, gst.params, SampleMode::Multinomial, t_max, dst.rng);
      fake.push_back(pad_for_critic(sc.ids, t_max));
    }
    const DiscUpdateStats stats = disc_update(real, fake, dst.params, dst.rms, tc.clip_bound);
    if (!std::isfinite(stats.loss)) {
      log.append({dst.step, gst.epoch, "abort", std::nan(""), std::nan(""), std::nan(""),
                  stats.loss, stats.mean_real, stats.mean_fake, std::nan("")});
      throw std::runtime_error("adversarial_train: non-finite critic loss at step " +
                               std::to_string(dst.step));
    }
    TrainLogRow row;
    row.step = dst.step++;
    row.epoch = gst.epoch;
    row.phase = "adv-d";
    row.critic_loss = stats.loss;
    row.mean_real = stats.mean_real;
    row.mean_fake = stats.mean_fake;
    log.append(row);
  };

  TrainedGenerator result;
  result.best_metric = -1.0;
  for (; gst.epoch < tc.adv_epochs; ) {
    reset_d_stream();
    if (tc.g_steps > 0) {
      const auto g_batches =
          make_batches(items, tc.gen_batch, Rng::mix(tc.seed, kShuffleAdvG), gst.epoch);
      std::size_t i = 0;
      while (i < g_batches.size()) {
        for (int k = 0; k < tc.g_steps && i < g_batches.size(); ++k, ++i) do_g_step(g_batches[i]);
        for (int k = 0; k < tc.d_steps; ++k) do_d_step(next_d_batch());
      }
    } else if (tc.d_steps > 0) {
      const auto batches =
          make_batches(items, tc.disc_batch, Rng::mix(tc.seed, kShuffleAdvD), gst.epoch);
      for (const auto& batch : batches) do_d_step(batch);
    }
    const double val =
        validation_metric(gst.params, data, vocab, Split::Val, StyleFilter::StyledOnly, tc.val_metric);
    TrainLogRow vrow;
    vrow.step = gst.step;
    vrow.epoch = gst.epoch;
    vrow.phase = "adv-val";
    vrow.val_metric = val;
    log.append(vrow);
    if (val > result.best_metric) {
      result.best_metric = val;
      result.best = gst.params.clone();
      result.best_epoch = gst.epoch;
    }
    gst.epoch += 1;
    if (on_epoch) on_epoch(gst, dst, val);
  }
  if (!result.best.embed.valid()) {
    result.best = gst.params.clone();
    result.best_epoch = gst.epoch;
    result.best_metric = 0.0;
  }
  return result;
}

}  // namespace atgan
