#include <cstdio>
#include <filesystem>
#include <fstream>

#include "atgan/checkpoint.hpp"
#include "atgan/config.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace atgan;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Dataset small_dataset(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.grid = 2;
  cfg.region_dim = 16;
  cfg.captions_per_scene = 2;
  cfg.factual_train = 4;
  cfg.factual_val = 2;
  cfg.factual_test = 2;
  cfg.styled_train = 2;
  cfg.styled_val = 2;
  cfg.styled_test = 2;
  return synth_dataset(cfg, StyleLexicon::builtin(), seed);
}

GenTrainState trained_state(const Dataset& ds, const Vocabulary& vocab, int epochs,
                            std::uint64_t seed, TrainLog* log_out) {
  GeneratorConfig gcfg;
  gcfg.vocab = vocab.size();
  gcfg.embed_dim = 6;
  gcfg.region_dim = ds.region_dim;
  gcfg.regions = ds.regions;
  gcfg.hidden_dim = 8;
  gcfg.attn_dim = 6;
  gcfg.t_max = 12;
  Rng rng(seed);
  GenTrainState st;
  st.params = GeneratorParams::init(gcfg, rng);
  st.rng = Rng(seed + 1);
  TrainConfig tc;
  tc.pretrain_gen_epochs = epochs;
  tc.gen_batch = 4;
  tc.seed = seed;
  TrainLog local;
  TrainLog& log = log_out ? *log_out : local;
  pretrain_generator(st, ds, vocab, tc, log);
  return st;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

// Rewrites the header JSON of a checkpoint file, preserving the payload.
void tamper_header(const std::string& path, const std::function<void(nlohmann::json&)>& edit) {
  std::string data = read_file(path);
  REQUIRE(data.size() > 14);
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) {
    header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[6 + i])) << (8 * i);
  }
  nlohmann::json header = nlohmann::json::parse(data.substr(14, header_len));
  edit(header);
  const std::string new_header = header.dump();
  std::string out = data.substr(0, 6);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((new_header.size() >> (8 * i)) & 0xFF));
  }
  out += new_header;
  out += data.substr(14 + header_len);
  write_file(path, out);
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
  const Dataset ds = small_dataset(7);
  const Vocabulary vocab = build_vocab(ds);
  GenTrainState st = trained_state(ds, vocab, 2, 7, nullptr);
  st.rng.next_u64();  // advance so a nontrivial stream state is stored

  const nlohmann::json echo = run_config_json(default_run_config());
  const std::string path = temp_path("atgan_ckpt_roundtrip.ckpt");
  save_checkpoint(pack_generator(st, vocab, echo), path);

  Vocabulary vocab2;
  GenTrainState back = unpack_generator(load_checkpoint(path), &vocab2);
  CHECK(vocab2.id_to_token == vocab.id_to_token);
  const ParamList a = st.params.named(), b = back.params.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tensor.values() == b[i].tensor.values());  // bitwise
  }
  CHECK(back.adam.step == st.adam.step);
  CHECK(back.adam.lr == st.adam.lr);
  for (const auto& [name, buf] : st.adam.m) {
    REQUIRE(back.adam.m.count(name) == 1);
    CHECK(back.adam.m.at(name) == buf);
  }
  for (const auto& [name, buf] : st.adam.v) CHECK(back.adam.v.at(name) == buf);
  CHECK(back.rng.serialize() == st.rng.serialize());
  CHECK(back.step == st.step);
  CHECK(back.epoch == st.epoch);
  std::remove(path.c_str());
}

TEST_CASE("discriminator checkpoint round trip") {
  const Dataset ds = small_dataset(8);
  const Vocabulary vocab = build_vocab(ds);
  DiscriminatorConfig dcfg;
  dcfg.vocab = vocab.size();
  dcfg.embed_dim = 6;
  dcfg.t_max = 12;
  dcfg.windows = {2, 3};
  dcfg.filters = 4;
  Rng rng(3);
  DiscTrainState st;
  st.params = DiscriminatorParams::init(dcfg, rng);
  st.rng = Rng(4);
  // one update so RMSprop state and running stats are nontrivial
  TrainConfig tc;
  tc.pretrain_disc_steps = 3;
  tc.disc_batch = 4;
  tc.seed = 8;
  GenTrainState gen = trained_state(ds, vocab, 1, 8, nullptr);
  TrainLog log;
  pretrain_discriminator(st, gen.params, ds, vocab, tc, log);

  const std::string path = temp_path("atgan_ckpt_disc.ckpt");
  save_checkpoint(pack_discriminator(st, vocab, nlohmann::json::object()), path);
  DiscTrainState back = unpack_discriminator(load_checkpoint(path), nullptr);
  const ParamList a = st.params.persisted(), b = back.params.persisted();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tensor.values() == b[i].tensor.values());
  }
  for (const auto& [name, buf] : st.rms.sq) CHECK(back.rms.sq.at(name) == buf);
  CHECK(back.rng.serialize() == st.rng.serialize());
  std::remove(path.c_str());
}

TEST_CASE("checkpoint corruption is rejected with specific errors") {
  const Dataset ds = small_dataset(9);
  const Vocabulary vocab = build_vocab(ds);
  GenTrainState st = trained_state(ds, vocab, 1, 9, nullptr);
  const std::string path = temp_path("atgan_ckpt_corrupt.ckpt");
  const nlohmann::json echo = nlohmann::json::object();

  // corrupted magic
  save_checkpoint(pack_generator(st, vocab, echo), path);
  {
    std::string data = read_file(path);
    data[0] = 'X';
    write_file(path, data);
    try {
      load_checkpoint(path);
      FAIL("expected a magic error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
  }

  // wrong version
  save_checkpoint(pack_generator(st, vocab, echo), path);
  tamper_header(path, [](nlohmann::json& h) { h["version"] = 99; });
  try {
    load_checkpoint(path);
    FAIL("expected a version error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  // tampered tensor shape
  save_checkpoint(pack_generator(st, vocab, echo), path);
  tamper_header(path, [](nlohmann::json& h) {
    h["manifest"][0]["shape"] = std::vector<int>{1, 1};
  });
  try {
    unpack_generator(load_checkpoint(path), nullptr);
    FAIL("expected a shape error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    const bool names_tensor = msg.find("gen.embed") != std::string::npos ||
                              msg.find("shape") != std::string::npos;
    CHECK(names_tensor);
  }

  // truncated payload
  save_checkpoint(pack_generator(st, vocab, echo), path);
  {
    std::string data = read_file(path);
    data.resize(data.size() - 16);
    write_file(path, data);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }

  // trailing garbage
  save_checkpoint(pack_generator(st, vocab, echo), path);
  {
    std::string data = read_file(path);
    data += "junk";
    write_file(path, data);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }

  // manifest offsets must partition the payload
  save_checkpoint(pack_generator(st, vocab, echo), path);
  tamper_header(path, [](nlohmann::json& h) {
    h["manifest"][1]["offset"] = h["manifest"][1]["offset"].get<std::uint64_t>() + 4;
  });
  try {
    load_checkpoint(path);
    FAIL("expected an offset error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("partition") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("resume after save matches the uninterrupted run") {
  const Dataset ds = small_dataset(10);
  const Vocabulary vocab = build_vocab(ds);

  TrainLog full_log;
  GenTrainState full = trained_state(ds, vocab, 4, 10, &full_log);

  // same run, interrupted at epoch 2
  TrainLog first_log;
  GenTrainState half = trained_state(ds, vocab, 2, 10, &first_log);
  const std::string path = temp_path("atgan_ckpt_resume.ckpt");
  save_checkpoint(pack_generator(half, vocab, nlohmann::json::object()), path);

  GenTrainState resumed = unpack_generator(load_checkpoint(path), nullptr);
  TrainConfig tc;
  tc.pretrain_gen_epochs = 4;
  tc.gen_batch = 4;
  tc.seed = 10;
  TrainLog resume_log;
  pretrain_generator(resumed, ds, vocab, tc, resume_log);

  // the resumed rows equal the tail of the uninterrupted log
  const auto& full_rows = full_log.rows();
  const auto& tail_rows = resume_log.rows();
  REQUIRE(first_log.rows().size() + tail_rows.size() == full_rows.size());
  for (std::size_t i = 0; i < tail_rows.size(); ++i) {
    CHECK(TrainLog::format_row(tail_rows[i]) ==
          TrainLog::format_row(full_rows[first_log.rows().size() + i]));
  }

  // and the final parameters are bitwise identical
  const ParamList a = full.params.named(), b = resumed.params.named();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tensor.values() == b[i].tensor.values());
  }
  std::remove(path.c_str());
}

TEST_CASE("run config loading, overrides and rejection") {
  RunConfig defaults = default_run_config();
  CHECK(defaults.train.lambda1 == 1.0f);
  CHECK(defaults.train.lambda2 == 0.1f);
  CHECK(defaults.train.gen_lr == 1e-4f);
  CHECK(defaults.train.disc_lr == 5e-5f);
  CHECK(defaults.train.gen_batch == 64);
  CHECK(defaults.train.disc_batch == 80);
  CHECK(defaults.train.n_roll == 5);
  CHECK(defaults.train.adv_epochs == 20);
  CHECK(defaults.model.critic_windows == std::vector<int>{2, 3, 4, 5});
  defaults.validate();

  const std::string path = temp_path("atgan_config.json");
  {
    std::ofstream out(path);
    out << R"({"train": {"gen_lr": 0.001, "seed": 42}, "model": {"hidden_dim": 24}})";
  }
  RunConfig loaded = load_run_config(path);
  CHECK(loaded.train.gen_lr == doctest::Approx(0.001));
  CHECK(loaded.train.seed == 42);
  CHECK(loaded.model.hidden_dim == 24);
  CHECK(loaded.train.lambda1 == 1.0f);  // untouched default
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << R"({"train": {"learning_rate": 0.001}})";  // unknown key
  }
  CHECK_THROWS_AS(load_run_config(path), std::invalid_argument);
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << R"({"optimizer": {}})";  // unknown section
  }
  CHECK_THROWS_AS(load_run_config(path), std::invalid_argument);
  std::remove(path.c_str());

  RunConfig cfg = default_run_config();
  apply_override(cfg, "train.lambda2=0");
  CHECK(cfg.train.lambda2 == 0.0f);
  apply_override(cfg, "model.critic_windows=[2,3]");
  CHECK(cfg.model.critic_windows == std::vector<int>{2, 3});
  apply_override(cfg, "train.val_metric=bleu4");
  CHECK(cfg.train.val_metric == "bleu4");
  CHECK_THROWS_AS(apply_override(cfg, "no_equals_sign"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(cfg, "train.nonsense=1"), std::invalid_argument);

  cfg.model.critic_windows = {40};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
