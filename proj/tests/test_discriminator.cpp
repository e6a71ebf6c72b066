#include <cmath>
#include <vector>

#include "atgan/discriminator.hpp"
#include "atgan/gradcheck.hpp"
#include "doctest.h"

using namespace atgan;

namespace {

DiscriminatorConfig tiny_config() {
  DiscriminatorConfig cfg;
  cfg.vocab = 9;
  cfg.embed_dim = 5;
  cfg.t_max = 7;
  cfg.windows = {2, 3};
  cfg.filters = 3;
  return cfg;
}

// ---- independent reference forward pass (double precision loops) ----

double oracle_score(const DiscriminatorParams& p, const std::vector<std::vector<int>>& batch,
                    std::size_t which, bool train_mode) {
  const int t_max = p.cfg.t_max;
  const int m = p.cfg.embed_dim;
  const int b = static_cast<int>(batch.size());
  std::vector<double> pooled_features;
  for (std::size_t blk = 0; blk < p.blocks.size(); ++blk) {
    const auto& block = p.blocks[blk];
    const int c = p.cfg.windows[blk];
    const int l = t_max - c + 1;
    const int f = static_cast<int>(block.kernels.size());
    // conv[bi][j][fi]
    std::vector<std::vector<std::vector<double>>> conv(
        static_cast<std::size_t>(b),
        std::vector<std::vector<double>>(static_cast<std::size_t>(l),
                                         std::vector<double>(static_cast<std::size_t>(f), 0.0)));
    for (int bi = 0; bi < b; ++bi) {
      for (int fi = 0; fi < f; ++fi) {
        for (int j = 0; j < l; ++j) {
          double acc = block.biases[static_cast<std::size_t>(fi)].values()[0];
          for (int cc = 0; cc < c; ++cc) {
            const int token = batch[static_cast<std::size_t>(bi)][static_cast<std::size_t>(j + cc)];
            for (int mm = 0; mm < m; ++mm) {
              acc += static_cast<double>(p.embed.row(token)[mm]) *
                     block.kernels[static_cast<std::size_t>(fi)].row(cc)[mm];
            }
          }
          conv[static_cast<std::size_t>(bi)][static_cast<std::size_t>(j)][static_cast<std::size_t>(fi)] = acc;
        }
      }
    }
    for (int fi = 0; fi < f; ++fi) {
      double mean, inv;
      if (train_mode) {
        double mu = 0.0;
        for (int bi = 0; bi < b; ++bi) {
          for (int j = 0; j < l; ++j) mu += conv[static_cast<std::size_t>(bi)][static_cast<std::size_t>(j)][static_cast<std::size_t>(fi)];
        }
        mu /= b * l;
        double var = 0.0;
        for (int bi = 0; bi < b; ++bi) {
          for (int j = 0; j < l; ++j) {
            const double d = conv[static_cast<std::size_t>(bi)][static_cast<std::size_t>(j)][static_cast<std::size_t>(fi)] - mu;
            var += d * d;
          }
        }
        var /= b * l;
        mean = mu;
        inv = 1.0 / std::sqrt(var + static_cast<double>(p.cfg.bn_eps));
      } else {
        mean = block.running_mean.values()[static_cast<std::size_t>(fi)];
        inv = 1.0 / std::sqrt(static_cast<double>(block.running_var.values()[static_cast<std::size_t>(fi)]) +
                              static_cast<double>(p.cfg.bn_eps));
      }
      double best = -1e300;
      for (int j = 0; j < l; ++j) {
        double y = block.gamma.values()[static_cast<std::size_t>(fi)] *
                       ((conv[which][static_cast<std::size_t>(j)][static_cast<std::size_t>(fi)] - mean) * inv) +
                   block.beta.values()[static_cast<std::size_t>(fi)];
        y = y > 0.0 ? y : 0.0;  // relu
        best = std::max(best, y);
      }
      pooled_features.push_back(best);
    }
  }
  double score = p.fc_b.values()[0];
  for (std::size_t i = 0; i < pooled_features.size(); ++i) {
    score += pooled_features[i] * p.fc_w.values()[i];
  }
  return score;
}

}  // namespace

TEST_CASE("pad_for_critic") {
  CHECK(pad_for_critic({4, 5}, 4) == std::vector<int>{4, 5, 0, 0});
  CHECK(pad_for_critic({4, 5, 6, 7}, 4) == std::vector<int>{4, 5, 6, 7});
  CHECK_THROWS_AS(pad_for_critic({4, 5, 6, 7, 8}, 4), std::invalid_argument);
}

TEST_CASE("embed_caption") {
  Rng rng(1);
  DiscriminatorParams p = DiscriminatorParams::init(tiny_config(), rng);

  const std::vector<int> all_pad(static_cast<std::size_t>(p.cfg.t_max), Vocabulary::kPad);
  Tensor s = embed_caption(nullptr, all_pad, p);
  for (int t = 0; t < p.cfg.t_max; ++t) {
    for (int m = 0; m < p.cfg.embed_dim; ++m) {
      CHECK(s.row(t)[m] == p.embed.row(Vocabulary::kPad)[m]);
    }
  }

  std::vector<int> one = all_pad;
  one[0] = 6;
  Tensor s2 = embed_caption(nullptr, one, p);
  for (int m = 0; m < p.cfg.embed_dim; ++m) CHECK(s2.row(0)[m] == p.embed.row(6)[m]);

  CHECK_THROWS_AS(embed_caption(nullptr, {4, 5}, p), std::invalid_argument);
  std::vector<int> bad = all_pad;
  bad[2] = p.cfg.vocab;
  CHECK_THROWS_AS(embed_caption(nullptr, bad, p), std::out_of_range);
}

TEST_CASE("score is zero under all-zero parameters") {
  Rng rng(2);
  DiscriminatorParams p = DiscriminatorParams::init(tiny_config(), rng);
  for (auto& named : p.named()) {
    Tensor t = named.tensor;
    std::fill(t.values().begin(), t.values().end(), 0.0f);
  }
  Tensor scores = score_batch(nullptr, {pad_for_critic({4, 5, 6}, p.cfg.t_max),
                                        pad_for_critic({7, 8}, p.cfg.t_max)},
                              p, BnMode::Infer);
  for (float v : scores.values()) CHECK(v == 0.0f);
}

TEST_CASE("infer-mode scoring is deterministic") {
  Rng rng(3);
  DiscriminatorParams p = DiscriminatorParams::init(tiny_config(), rng);
  const auto caption = pad_for_critic({4, 5, 6, 4}, p.cfg.t_max);
  const float a = score_caption(caption, p);
  const float b = score_caption(caption, p);
  CHECK(a == b);  // bitwise
  Tensor both = score_batch(nullptr, {caption, caption}, p, BnMode::Infer);
  CHECK(both.values()[0] == both.values()[1]);
}

TEST_CASE("score matches the loop-based reference forward") {
  DiscriminatorConfig cfg = tiny_config();
  cfg.init_bound = 0.5f;  // larger weights give scores of testable magnitude
  Rng rng(4);
  DiscriminatorParams p = DiscriminatorParams::init(cfg, rng);
  // nontrivial running stats for the infer path
  for (auto& block : p.blocks) {
    for (auto& v : block.running_mean.values()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    for (auto& v : block.running_var.values()) v = static_cast<float>(rng.uniform(0.5, 2.0));
  }
  const std::vector<std::vector<int>> batch = {
      pad_for_critic({4, 5, 6, 7, 8}, cfg.t_max),
      pad_for_critic({8, 7, 6}, cfg.t_max),
      pad_for_critic({5, 5, 5, 5, 5, 5, 5}, cfg.t_max),
  };

  Tensor infer_scores = score_batch(nullptr, batch, p, BnMode::Infer);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(infer_scores.values()[i] ==
          doctest::Approx(oracle_score(p, batch, i, false)).epsilon(1e-5));
  }

  DiscriminatorParams pt = p.clone();
  Tensor train_scores = score_batch(nullptr, batch, pt, BnMode::Train);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(train_scores.values()[i] ==
          doctest::Approx(oracle_score(p, batch, i, true)).epsilon(1e-5));
  }
}

TEST_CASE("critic forward gradient-checks against finite differences") {
  DiscriminatorConfig cfg = tiny_config();
  cfg.init_bound = 0.3f;
  Rng rng(5);
  DiscriminatorParams p = DiscriminatorParams::init(cfg, rng);
  const std::vector<std::vector<int>> batch = {
      pad_for_critic({4, 5, 6}, cfg.t_max),
      pad_for_critic({7, 8, 4, 5}, cfg.t_max),
  };
  const std::vector<float> rm0 = p.blocks[0].running_mean.values();
  const std::vector<float> rv0 = p.blocks[0].running_var.values();
  const std::vector<float> rm1 = p.blocks[1].running_mean.values();
  const std::vector<float> rv1 = p.blocks[1].running_var.values();

  auto loss_through = [&](Tape* tape, BnMode mode) {
    // keep the running stats fixed so repeated evaluations agree
    p.blocks[0].running_mean.values() = rm0;
    p.blocks[0].running_var.values() = rv0;
    p.blocks[1].running_mean.values() = rm1;
    p.blocks[1].running_var.values() = rv1;
    Tensor scores = score_batch(tape, batch, p, mode);
    return sum_all(tape, scores);
  };

  const double e_embed = gradient_check(
      [&](Tape* tape, Tensor&) { return loss_through(tape, BnMode::Train); }, p.embed);
  CHECK(e_embed < 1e-3);
  const double e_kernel = gradient_check(
      [&](Tape* tape, Tensor&) { return loss_through(tape, BnMode::Train); }, p.blocks[0].kernels[1]);
  CHECK(e_kernel < 1e-3);
  const double e_gamma = gradient_check(
      [&](Tape* tape, Tensor&) { return loss_through(tape, BnMode::Train); }, p.blocks[1].gamma);
  CHECK(e_gamma < 1e-3);
  const double e_fc = gradient_check(
      [&](Tape* tape, Tensor&) { return loss_through(tape, BnMode::Infer); }, p.fc_w);
  CHECK(e_fc < 1e-3);
}

TEST_CASE("wgan_loss arithmetic") {
  Tensor r1 = Tensor::from_values({1, 1}, {1.0f});
  Tensor f1 = Tensor::from_values({1, 1}, {1.0f});
  CHECK(wgan_loss(nullptr, r1, f1).scalar_value() == 0.0f);

  Tensor r2 = Tensor::from_values({1, 1}, {2.0f});
  Tensor f2 = Tensor::from_values({1, 1}, {0.0f});
  CHECK(wgan_loss(nullptr, r2, f2).scalar_value() == -2.0f);

  Rng rng(6);
  Tensor ra = Tensor::zeros({4, 1});
  Tensor fa = Tensor::zeros({3, 1});
  for (auto& v : ra.values()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  for (auto& v : fa.values()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  const float ab = wgan_loss(nullptr, ra, fa).scalar_value();
  const float ba = wgan_loss(nullptr, fa, ra).scalar_value();
  CHECK(ab == -ba);  // exact antisymmetry
}

TEST_CASE("disc_update clips and handles identical batches") {
  Rng rng(7);
  DiscriminatorParams p = DiscriminatorParams::init(tiny_config(), rng);
  RmspropState rms;
  rms.lr = 5e-5f;
  const std::vector<std::vector<int>> batch = {
      pad_for_critic({4, 5, 6}, p.cfg.t_max),
      pad_for_critic({7, 8}, p.cfg.t_max),
  };
  const DiscUpdateStats stats = disc_update(batch, batch, p, rms, 0.01f);
  CHECK(stats.loss == 0.0f);
  for (const auto& named : p.named()) {
    for (float v : named.tensor.values()) CHECK(std::abs(v) <= 0.01f);
  }
  CHECK_THROWS_AS(disc_update({}, batch, p, rms, 0.01f), std::invalid_argument);
}

TEST_CASE("critic separates trivially separable data") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    DiscriminatorParams p = DiscriminatorParams::init(tiny_config(), rng);
    RmspropState rms;
    rms.lr = 5e-5f;
    const int t_max = p.cfg.t_max;
    std::vector<std::vector<int>> real, fake;
    for (int i = 0; i < 8; ++i) {
      real.push_back(pad_for_critic({4, 4, 4, Vocabulary::kEos}, t_max));
      fake.push_back(pad_for_critic({5, 5, 5, Vocabulary::kEos}, t_max));
    }
    DiscUpdateStats last{};
    for (int step = 0; step < 200; ++step) {
      last = disc_update(real, fake, p, rms, 0.01f);
      for (const auto& named : p.named()) {
        for (float v : named.tensor.values()) REQUIRE(std::abs(v) <= 0.01f);
      }
    }
    const float real_score = score_caption(real[0], p);
    const float fake_score = score_caption(fake[0], p);
    CHECK(real_score - fake_score > 0.0f);
    CHECK(last.mean_real > last.mean_fake);
  }
}
