#include "atgan/generator.hpp"

#include <cmath>
#include <stdexcept>

namespace atgan {

namespace {

Tensor uniform_init(Shape shape, float bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

float fan_in_bound(int fan_in) { return 1.0f / std::sqrt(static_cast<float>(fan_in)); }

const char* kGateNames[4] = {"i", "f", "g", "o"};

}  // namespace

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, Rng& rng) {
  if (cfg.vocab < 5 || cfg.embed_dim < 1 || cfg.region_dim < 1 || cfg.regions < 1 ||
      cfg.hidden_dim < 1 || cfg.attn_dim < 1 || cfg.t_max < 3) {
    throw std::invalid_argument("generator config is degenerate (vocab needs the reserved ids, t_max >= 3)");
  }
  GeneratorParams p;
  p.cfg = cfg;
  p.embed = uniform_init({cfg.vocab, cfg.embed_dim}, 0.08f, rng);
  for (int g = 0; g < 4; ++g) {
    p.h_gate[g] = uniform_init({cfg.hidden_dim, cfg.hidden_dim}, fan_in_bound(cfg.hidden_dim), rng);
    p.w_gate[g] = uniform_init({cfg.embed_dim, cfg.hidden_dim}, fan_in_bound(cfg.embed_dim), rng);
    p.a_gate[g] = uniform_init({cfg.region_dim, cfg.hidden_dim}, fan_in_bound(cfg.region_dim), rng);
    p.b_gate[g] = Tensor::zeros({1, cfg.hidden_dim}, true);
  }
  p.attn_feat = uniform_init({cfg.region_dim, cfg.attn_dim}, fan_in_bound(cfg.region_dim), rng);
  p.attn_hidden = uniform_init({cfg.hidden_dim, cfg.attn_dim}, fan_in_bound(cfg.hidden_dim), rng);
  p.attn_vec = uniform_init({cfg.attn_dim, 1}, fan_in_bound(cfg.attn_dim), rng);
  p.out_ctx = uniform_init({cfg.region_dim, cfg.vocab}, fan_in_bound(cfg.region_dim), rng);
  p.out_hidden = uniform_init({cfg.hidden_dim, cfg.vocab}, fan_in_bound(cfg.hidden_dim), rng);
  p.out_bias = Tensor::zeros({1, cfg.vocab}, true);
  p.init_h = uniform_init({cfg.region_dim, cfg.hidden_dim}, fan_in_bound(cfg.region_dim), rng);
  p.init_c = uniform_init({cfg.region_dim, cfg.hidden_dim}, fan_in_bound(cfg.region_dim), rng);
  return p;
}

ParamList GeneratorParams::named() const {
  ParamList list;
  list.push_back({"gen.embed", embed});
  for (int g = 0; g < 4; ++g) {
    const std::string suffix = kGateNames[g];
    list.push_back({"gen.lstm.h_" + suffix, h_gate[g]});
    list.push_back({"gen.lstm.w_" + suffix, w_gate[g]});
    list.push_back({"gen.lstm.a_" + suffix, a_gate[g]});
    list.push_back({"gen.lstm.b_" + suffix, b_gate[g]});
  }
  list.push_back({"gen.attn.feat", attn_feat});
  list.push_back({"gen.attn.hidden", attn_hidden});
  list.push_back({"gen.attn.vec", attn_vec});
  list.push_back({"gen.out.ctx", out_ctx});
  list.push_back({"gen.out.hidden", out_hidden});
  list.push_back({"gen.out.bias", out_bias});
  list.push_back({"gen.init.h", init_h});
  list.push_back({"gen.init.c", init_c});
  return list;
}

GeneratorParams GeneratorParams::clone() const {
  GeneratorParams p;
  p.cfg = cfg;
  p.embed = embed.clone();
  for (int g = 0; g < 4; ++g) {
    p.h_gate[g] = h_gate[g].clone();
    p.w_gate[g] = w_gate[g].clone();
    p.a_gate[g] = a_gate[g].clone();
    p.b_gate[g] = b_gate[g].clone();
  }
  p.attn_feat = attn_feat.clone();
  p.attn_hidden = attn_hidden.clone();
  p.attn_vec = attn_vec.clone();
  p.out_ctx = out_ctx.clone();
  p.out_hidden = out_hidden.clone();
  p.out_bias = out_bias.clone();
  p.init_h = init_h.clone();
  p.init_c = init_c.clone();
  return p;
}

static void check_features(const Tensor& features, const GeneratorParams& params) {
  if (features.ndim() != 2 || features.dim(1) != params.cfg.region_dim) {
    throw std::invalid_argument("region features " + shape_str(features.shape()) +
                                " do not match region_dim=" + std::to_string(params.cfg.region_dim));
  }
}

GeneratorState init_state(Tape* tape, const Tensor& features, const GeneratorParams& params) {
  check_features(features, params);
  Tensor mean = mean_rows(tape, features);
  GeneratorState s;
  s.h = tanh_ew(tape, matmul(tape, mean, params.init_h));
  s.c = tanh_ew(tape, matmul(tape, mean, params.init_c));
  return s;
}

Attention attend(Tape* tape, const Tensor& h_prev, const Tensor& features,
                 const GeneratorParams& params) {
  check_features(features, params);
  Tensor proj_feat = matmul(tape, features, params.attn_feat);        // K x A
  Tensor proj_hidden = matmul(tape, h_prev, params.attn_hidden);      // 1 x A
  Tensor energies = matmul(tape, tanh_ew(tape, add_rows(tape, proj_feat, proj_hidden)),
                           params.attn_vec);                          // K x 1
  Attention att;
  att.weights = softmax_rows(tape, reshape_copy(tape, energies, {1, features.dim(0)}));
  att.context = matmul(tape, att.weights, features);                  // 1 x D
  return att;
}

GeneratorState lstm_step(Tape* tape, const GeneratorState& state, int prev_word_id,
                         const Tensor& context, const GeneratorParams& params) {
  Tensor emb = embed_lookup(tape, params.embed, {prev_word_id});  // 1 x M
  Tensor pre[4];
  for (int g = 0; g < 4; ++g) {
    pre[g] = add(tape,
                 add(tape, matmul(tape, state.h, params.h_gate[g]),
                     matmul(tape, emb, params.w_gate[g])),
                 add(tape, matmul(tape, context, params.a_gate[g]), params.b_gate[g]));
  }
  Tensor gate_i = sigmoid(tape, pre[0]);
  Tensor gate_f = sigmoid(tape, pre[1]);
  Tensor gate_g = tanh_ew(tape, pre[2]);
  Tensor gate_o = sigmoid(tape, pre[3]);
  GeneratorState next;
  next.c = add(tape, mul(tape, gate_f, state.c), mul(tape, gate_i, gate_g));
  next.h = mul(tape, gate_o, tanh_ew(tape, next.c));
  return next;
}

Tensor word_distribution(Tape* tape, const Tensor& context, const Tensor& h,
                         const GeneratorParams& params) {
  Tensor logits = add(tape,
                      add(tape, matmul(tape, context, params.out_ctx),
                          matmul(tape, h, params.out_hidden)),
                      params.out_bias);
  return softmax_rows(tape, logits);
}

Tensor mle_loss(Tape* tape, const std::vector<CaptionExample>& batch,
                const GeneratorParams& params, float lambda1) {
  if (batch.empty()) throw std::invalid_argument("mle_loss: empty batch");
  if (lambda1 < 0.0f) throw std::invalid_argument("mle_loss: lambda1 must be nonnegative");
  Tensor total;
  for (const auto& ex : batch) {
    if (ex.ids.empty() || ex.ids[0] != Vocabulary::kBos) {
      throw std::invalid_argument("mle_loss: caption must start with the begin token");
    }
    if (static_cast<int>(ex.ids.size()) > params.cfg.t_max) {
      throw std::invalid_argument("mle_loss: caption of " + std::to_string(ex.ids.size()) +
                                  " ids exceeds t_max=" + std::to_string(params.cfg.t_max));
    }
    // Targets: everything after bos through the first eos; padding and
    // anything past eos contribute nothing.
    std::size_t end = ex.ids.size();
    for (std::size_t i = 1; i < ex.ids.size(); ++i) {
      if (ex.ids[i] == Vocabulary::kPad) {
        end = i;
        break;
      }
      if (ex.ids[i] == Vocabulary::kEos) {
        end = i + 1;
        break;
      }
    }
    const std::size_t steps = end - 1;
    if (steps == 0) throw std::invalid_argument("mle_loss: empty caption");

    GeneratorState state = init_state(tape, ex.features, params);
    Tensor alpha_sum;
    Tensor nll;
    for (std::size_t t = 0; t < steps; ++t) {
      Attention att = attend(tape, state.h, ex.features, params);
      state = lstm_step(tape, state, ex.ids[t], att.context, params);
      Tensor dist = word_distribution(tape, att.context, state.h, params);
      Tensor logp = log_ew(tape, pick(tape, dist, static_cast<std::size_t>(ex.ids[t + 1])));
      nll = nll.valid() ? add(tape, nll, logp) : logp;
      alpha_sum = alpha_sum.valid() ? add(tape, alpha_sum, att.weights) : att.weights;
    }
    Tensor loss = scale(tape, nll, -1.0f);
    if (lambda1 > 0.0f) {
      Tensor ones = Tensor::full({1, ex.features.dim(0)}, 1.0f);
      Tensor deficit = add(tape, ones, scale(tape, alpha_sum, -1.0f));
      Tensor penalty = sum_all(tape, mul(tape, deficit, deficit));
      loss = add(tape, loss, scale(tape, penalty, lambda1));
    }
    total = total.valid() ? add(tape, total, loss) : loss;
  }
  return scale(tape, total, 1.0f / static_cast<float>(batch.size()));
}

namespace {

int draw_token(const Tensor& dist, SampleMode mode, Rng& rng) {
  const auto& p = dist.values();
  if (mode == SampleMode::Greedy) {
    int best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (p[i] > p[best]) best = static_cast<int>(i);
    }
    return best;
  }
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cum += static_cast<double>(p[i]);
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

SampledCaption sample_caption(Tape* tape, const Tensor& features, const GeneratorParams& params,
                              SampleMode mode, int t_max, Rng& rng) {
  if (t_max < 1) throw std::invalid_argument("sample_caption: t_max must be >= 1");
  SampledCaption cap;
  GeneratorState state = init_state(tape, features, params);
  int prev = Vocabulary::kBos;
  for (int t = 0; t < t_max; ++t) {
    Attention att = attend(tape, state.h, features, params);
    state = lstm_step(tape, state, prev, att.context, params);
    Tensor dist = word_distribution(tape, att.context, state.h, params);
    const int id = draw_token(dist, mode, rng);
    cap.ids.push_back(id);
    cap.step_logprobs.push_back(log_ew(tape, pick(tape, dist, static_cast<std::size_t>(id))));
    cap.alphas.push_back(att.weights);
    cap.contexts.push_back(att.context);
    prev = id;
    if (id == Vocabulary::kEos) break;
  }
  return cap;
}

std::vector<int> rollout(const std::vector<int>& prefix, const Tensor& features,
                         const GeneratorParams& params, int t_max, Rng& rng) {
  if (prefix.empty()) throw std::invalid_argument("rollout: prefix must have at least one token");
  if (static_cast<int>(prefix.size()) > t_max) {
    throw std::invalid_argument("rollout: prefix longer than t_max");
  }
  for (int id : prefix) {
    if (id < 0 || id >= params.cfg.vocab) {
      throw std::out_of_range("rollout: prefix token " + std::to_string(id) + " outside vocabulary");
    }
  }
  if (prefix.back() == Vocabulary::kEos || static_cast<int>(prefix.size()) == t_max) {
    return prefix;
  }
  GeneratorState state = init_state(nullptr, features, params);
  int prev = Vocabulary::kBos;
  for (int id : prefix) {
    Attention att = attend(nullptr, state.h, features, params);
    state = lstm_step(nullptr, state, prev, att.context, params);
    prev = id;
  }
  std::vector<int> full = prefix;
  while (static_cast<int>(full.size()) < t_max) {
    Attention att = attend(nullptr, state.h, features, params);
    state = lstm_step(nullptr, state, prev, att.context, params);
    Tensor dist = word_distribution(nullptr, att.context, state.h, params);
    const int id = draw_token(dist, SampleMode::Multinomial, rng);
    full.push_back(id);
    prev = id;
    if (id == Vocabulary::kEos) break;
  }
  return full;
}

double greedy_token_accuracy(const Dataset& dataset, const std::vector<TrainItem>& items,
                             const GeneratorParams& params, const Vocabulary& vocab) {
  long long matched = 0, total = 0;
  Rng unused(0);
  for (const auto& item : items) {
    const auto& img = dataset.images[static_cast<std::size_t>(item.image_index)];
    const auto& gold_tokens = img.captions[static_cast<std::size_t>(item.caption_index)].tokens;
    std::vector<int> gold;
    for (const auto& tok : gold_tokens) gold.push_back(vocab.id_of(tok));
    gold.push_back(Vocabulary::kEos);
    SampledCaption sc = sample_caption(nullptr, img.features, params, SampleMode::Greedy,
                                       params.cfg.t_max, unused);
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (i < sc.ids.size() && sc.ids[i] == gold[i]) ++matched;
    }
    total += static_cast<long long>(gold.size());
  }
  return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
}

}  // namespace atgan
