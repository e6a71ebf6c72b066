#include <cstdio>
#include <filesystem>
#include <fstream>

#include "atgan/checkpoint.hpp"
#include "atgan/metrics.hpp"
#include "atgan/pipeline.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace atgan;

namespace {

struct TempDir {
  std::filesystem::path dir;
  TempDir() {
    dir = std::filesystem::temp_directory_path() / "atgan_pipeline_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
  }
  ~TempDir() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.model.embed_dim = 8;
  cfg.model.hidden_dim = 10;
  cfg.model.attn_dim = 8;
  cfg.model.t_max = 12;
  cfg.model.critic_embed_dim = 8;
  cfg.model.critic_windows = {2, 3};
  cfg.model.critic_filters = 4;
  cfg.train.gen_batch = 8;
  cfg.train.disc_batch = 8;
  cfg.train.pretrain_gen_epochs = 2;
  cfg.train.pretrain_disc_steps = 4;
  cfg.train.adv_epochs = 1;
  cfg.train.n_roll = 2;
  cfg.train.seed = 17;
  cfg.synth.grid = 2;
  cfg.synth.captions_per_scene = 2;
  cfg.synth.factual_train = 6;
  cfg.synth.factual_val = 2;
  cfg.synth.factual_test = 2;
  cfg.synth.styled_train = 4;
  cfg.synth.styled_val = 2;
  cfg.synth.styled_test = 2;
  return cfg;
}

}  // namespace

TEST_CASE("synth is byte-identical per seed") {
  TempDir tmp;
  const RunConfig cfg = tiny_run_config();
  SynthArgs args;
  args.out = tmp.path("a.jsonl");
  cmd_synth(cfg, args);
  args.out = tmp.path("b.jsonl");
  cmd_synth(cfg, args);
  CHECK(read_file(tmp.path("a.jsonl")) == read_file(tmp.path("b.jsonl")));

  RunConfig other = cfg;
  other.train.seed = 18;
  args.out = tmp.path("c.jsonl");
  cmd_synth(other, args);
  CHECK(read_file(tmp.path("a.jsonl")) != read_file(tmp.path("c.jsonl")));
}

TEST_CASE("evaluate on candidates equal to references reports the maxima") {
  TempDir tmp;
  const RunConfig cfg = tiny_run_config();
  SynthArgs synth;
  synth.out = tmp.path("data.jsonl");
  synth.lexicon_out = tmp.path("lexicon.json");
  cmd_synth(cfg, synth);

  // candidates: the first test-split caption of every test image
  const Dataset ds = load_jsonl(tmp.path("data.jsonl"));
  std::ofstream cand(tmp.path("cands.jsonl"));
  int written = 0;
  for (const auto& img : ds.images) {
    for (const auto& capn : img.captions) {
      if (capn.split == Split::Test) {
        nlohmann::json j;
        j["image_id"] = img.image_id;
        j["tokens"] = capn.tokens;
        cand << j.dump() << "\n";
        ++written;
        break;
      }
    }
  }
  cand.close();
  REQUIRE(written >= 2);

  EvaluateArgs eval;
  eval.candidates = tmp.path("cands.jsonl");
  eval.references = tmp.path("data.jsonl");
  eval.lexicon = tmp.path("lexicon.json");
  eval.report = tmp.path("report.json");
  cmd_evaluate(cfg, eval);

  const MetricReport report = MetricReport::from_json(nlohmann::json::parse(read_file(eval.report)));
  CHECK(report.bleu[0] == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(report.bleu[3] == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(report.rouge_l == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(report.n_images == written);
}

TEST_CASE("full pipeline through the command layer") {
  TempDir tmp;
  const RunConfig cfg = tiny_run_config();
  SynthArgs synth;
  synth.out = tmp.path("data.jsonl");
  cmd_synth(cfg, synth);

  PretrainGenArgs pg;
  pg.data = tmp.path("data.jsonl");
  pg.out_dir = tmp.path("gen");
  cmd_pretrain_gen(cfg, pg);
  CHECK(std::filesystem::exists(tmp.path("gen") + "/gen_best.ckpt"));
  CHECK(std::filesystem::exists(tmp.path("gen") + "/gen_last.ckpt"));
  CHECK(std::filesystem::exists(tmp.path("gen") + "/train_log.csv"));

  PretrainDiscArgs pd;
  pd.data = tmp.path("data.jsonl");
  pd.gen_checkpoint = tmp.path("gen") + "/gen_best.ckpt";
  pd.out_dir = tmp.path("disc");
  cmd_pretrain_disc(cfg, pd);
  CHECK(std::filesystem::exists(tmp.path("disc") + "/disc.ckpt"));

  AdversarialArgs adv;
  adv.data = tmp.path("data.jsonl");
  adv.gen_checkpoint = tmp.path("gen") + "/gen_best.ckpt";
  adv.disc_checkpoint = tmp.path("disc") + "/disc.ckpt";
  adv.out_dir = tmp.path("adv");
  cmd_adversarial(cfg, adv);
  CHECK(std::filesystem::exists(tmp.path("adv") + "/adv_gen_best.ckpt"));
  CHECK(std::filesystem::exists(tmp.path("adv") + "/adv_disc.ckpt"));
  CHECK(std::filesystem::exists(tmp.path("adv") + "/adv_train_log.csv"));

  SampleArgs sample;
  sample.checkpoint = tmp.path("adv") + "/adv_gen_best.ckpt";
  sample.data = tmp.path("data.jsonl");
  sample.mode = "greedy";
  sample.out = tmp.path("samples.jsonl");
  cmd_sample(cfg, sample);
  CHECK(std::filesystem::exists(tmp.path("samples.jsonl")));

  // greedy sampling is deterministic: rerun gives identical bytes
  sample.out = tmp.path("samples2.jsonl");
  cmd_sample(cfg, sample);
  CHECK(read_file(tmp.path("samples.jsonl")) == read_file(tmp.path("samples2.jsonl")));

  EvaluateArgs eval;
  eval.candidates = tmp.path("samples.jsonl");
  eval.references = tmp.path("data.jsonl");
  eval.report = tmp.path("report.json");
  cmd_evaluate(cfg, eval);
  const nlohmann::json report = nlohmann::json::parse(read_file(eval.report));
  CHECK(report.contains("bleu"));
  CHECK(report.contains("style_entropy_bits"));

  // multinomial sampling honors per-image counts
  SampleArgs multi;
  multi.checkpoint = tmp.path("adv") + "/adv_gen_best.ckpt";
  multi.data = tmp.path("data.jsonl");
  multi.mode = "multinomial";
  multi.per_image = 2;
  multi.out = tmp.path("multi.jsonl");
  cmd_sample(cfg, multi);
  int lines = 0;
  {
    std::ifstream in(tmp.path("multi.jsonl"));
    for (std::string line; std::getline(in, line);) lines += line.empty() ? 0 : 1;
  }
  const Dataset ds = load_jsonl(tmp.path("data.jsonl"));
  int test_images = 0;
  for (const auto& img : ds.images) {
    for (const auto& capn : img.captions) {
      if (capn.split == Split::Test) {
        ++test_images;
        break;
      }
    }
  }
  CHECK(lines == 2 * test_images);
}

TEST_CASE("command validation failures") {
  const RunConfig cfg = tiny_run_config();
  SynthArgs bad_synth;
  CHECK_THROWS_AS(cmd_synth(cfg, bad_synth), std::invalid_argument);  // missing --out
  SynthArgs bad_style;
  bad_style.out = "/tmp/atgan_unused.jsonl";
  bad_style.style = "sarcastic";
  CHECK_THROWS_AS(cmd_synth(cfg, bad_style), std::invalid_argument);

  SampleArgs bad_sample;
  bad_sample.checkpoint = "x";
  bad_sample.data = "y";
  bad_sample.out = "z";
  bad_sample.mode = "beam";
  CHECK_THROWS_AS(cmd_sample(cfg, bad_sample), std::invalid_argument);

  EvaluateArgs bad_eval;
  CHECK_THROWS_AS(cmd_evaluate(cfg, bad_eval), std::invalid_argument);
}
