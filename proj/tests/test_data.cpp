#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "atgan/data.hpp"
#include "doctest.h"

using namespace atgan;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Dataset tiny_corpus() {
  Dataset ds;
  ds.regions = 1;
  ds.region_dim = 2;
  ImageRecord img;
  img.image_id = "img-0";
  img.features = Tensor::from_values({1, 2}, {0.5f, -0.5f});
  img.captions.push_back({{"a", "b"}, Style::Factual, Split::Train});
  img.captions.push_back({{"a"}, Style::Factual, Split::Train});
  ds.images.push_back(img);
  return ds;
}

}  // namespace

TEST_CASE("vocabulary ordering and round trip") {
  const Dataset ds = tiny_corpus();
  const Vocabulary vocab = build_vocab(ds);
  CHECK(vocab.size() == 6);
  CHECK(vocab.id_of("a") == 4);  // frequency 2 beats frequency 1
  CHECK(vocab.id_of("b") == 5);
  CHECK(vocab.id_of("missing") == Vocabulary::kUnk);

  const Vocabulary again = build_vocab(ds);
  CHECK(again.id_to_token == vocab.id_to_token);

  for (const auto& img : ds.images) {
    for (const auto& cap : img.captions) {
      const auto ids = encode_caption(cap.tokens, vocab, 8);
      CHECK(decode_caption(ids, vocab) == cap.tokens);
    }
  }
}

TEST_CASE("encode_caption shapes and errors") {
  const Vocabulary vocab = build_vocab(tiny_corpus());
  const auto empty = encode_caption({}, vocab, 5);
  CHECK(empty == std::vector<int>{Vocabulary::kBos, Vocabulary::kEos, Vocabulary::kPad,
                                  Vocabulary::kPad, Vocabulary::kPad});
  const auto unk = encode_caption({"zzz"}, vocab, 4);
  CHECK(unk[1] == Vocabulary::kUnk);
  CHECK_THROWS_AS(encode_caption({"a", "b", "a", "b"}, vocab, 5), std::invalid_argument);
}

TEST_CASE("scene features are exact at sigma zero") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0f;
  Scene scene;
  scene.grid = 3;
  scene.id = "s";
  scene.objects.push_back({2, 1, 4});  // triangle, green, center cell
  Rng rng(1);
  Tensor feats = scene_features(scene, cfg, rng);
  REQUIRE(feats.shape() == Shape{9, 16});
  // center cell: shape one-hot at 2, color one-hot at 6+1, position (0.5, 0.5)
  const float* row = feats.row(4);
  CHECK(row[2] == 1.0f);
  CHECK(row[6 + 1] == 1.0f);
  CHECK(row[14] == 0.5f);
  CHECK(row[15] == 0.5f);
  // empty cell 0 has only the position code
  const float* bg = feats.row(0);
  for (int j = 0; j < 14; ++j) CHECK(bg[j] == 0.0f);

  // changing one object changes exactly that region's rows
  Scene scene2 = scene;
  scene2.objects[0].color = 3;
  Rng rng2(1);
  Tensor feats2 = scene_features(scene2, cfg, rng2);
  for (int k = 0; k < 9; ++k) {
    bool differs = false;
    for (int j = 0; j < 16; ++j) differs = differs || feats.row(k)[j] != feats2.row(k)[j];
    CHECK(differs == (k == 4));
  }

  SynthConfig small = cfg;
  small.region_dim = 8;
  Rng rng3(1);
  CHECK_THROWS_AS(scene_features(scene, small, rng3), std::invalid_argument);
}

TEST_CASE("synth_scenes determinism") {
  SynthConfig cfg;
  auto a = synth_scenes(4, cfg, 77, "x");
  auto b = synth_scenes(4, cfg, 77, "x");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first.id == b[i].first.id);
    CHECK(a[i].second.values() == b[i].second.values());
  }
  auto c = synth_scenes(4, cfg, 78, "x");
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    any_diff = any_diff || a[i].second.values() != c[i].second.values();
  }
  CHECK(any_diff);
}

TEST_CASE("synth_captions style purity") {
  const StyleLexicon lexicon = StyleLexicon::builtin();
  SynthConfig cfg;
  auto scenes = synth_scenes(6, cfg, 5, "p");
  Rng rng(9);
  for (const auto& [scene, feats] : scenes) {
    for (const auto& cap : synth_captions(scene, Style::Factual, lexicon, 3, rng)) {
      for (const auto& tok : cap) CHECK(!lexicon.contains(tok));
    }
    for (const auto& cap : synth_captions(scene, Style::Positive, lexicon, 3, rng)) {
      int positive = 0, negative = 0;
      for (const auto& tok : cap) {
        positive += lexicon.is_positive(tok) ? 1 : 0;
        negative += lexicon.is_negative(tok) ? 1 : 0;
      }
      CHECK(positive >= 1);
      CHECK(negative == 0);
    }
    for (const auto& cap : synth_captions(scene, Style::Negative, lexicon, 3, rng)) {
      int negative = 0;
      for (const auto& tok : cap) negative += lexicon.is_negative(tok) ? 1 : 0;
      CHECK(negative >= 1);
    }
  }

  // byte-identical regeneration under the same stream
  Rng r1(4), r2(4);
  const auto c1 = synth_captions(scenes[0].first, Style::Positive, lexicon, 3, r1);
  const auto c2 = synth_captions(scenes[0].first, Style::Positive, lexicon, 3, r2);
  CHECK(c1 == c2);
}

TEST_CASE("synth_dataset splits are disjoint and deterministic") {
  SynthConfig cfg;
  cfg.factual_train = 6;
  cfg.factual_val = 2;
  cfg.factual_test = 2;
  cfg.styled_train = 3;
  cfg.styled_val = 2;
  cfg.styled_test = 2;
  cfg.captions_per_scene = 2;
  const StyleLexicon lexicon = StyleLexicon::builtin();
  const Dataset ds = synth_dataset(cfg, lexicon, 11);
  CHECK(ds.images.size() == 6 + 2 + 2 + 3 * 2 + 2 * 2 + 2 * 2);

  std::set<std::string> ids;
  for (const auto& img : ds.images) {
    CHECK(ids.insert(img.image_id).second);  // unique ids
    REQUIRE(!img.captions.empty());
    const Split split = img.captions[0].split;
    for (const auto& cap : img.captions) CHECK(cap.split == split);
  }

  const Dataset again = synth_dataset(cfg, lexicon, 11);
  REQUIRE(again.images.size() == ds.images.size());
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(again.images[i].image_id == ds.images[i].image_id);
    CHECK(again.images[i].features.values() == ds.images[i].features.values());
  }

  CHECK_THROWS_AS(synth_dataset(cfg, lexicon, 11, "sideways"), std::invalid_argument);
}

TEST_CASE("jsonl round trip and validation") {
  SynthConfig cfg;
  cfg.factual_train = 3;
  cfg.factual_val = 2;
  cfg.factual_test = 2;
  cfg.styled_train = 2;
  cfg.styled_val = 2;
  cfg.styled_test = 2;
  const Dataset ds = synth_dataset(cfg, StyleLexicon::builtin(), 3);
  const std::string path = temp_path("atgan_test_roundtrip.jsonl");
  save_jsonl(ds, path);
  const Dataset loaded = load_jsonl(path);
  REQUIRE(loaded.images.size() == ds.images.size());
  CHECK(loaded.regions == ds.regions);
  CHECK(loaded.region_dim == ds.region_dim);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(loaded.images[i].image_id == ds.images[i].image_id);
    CHECK(loaded.images[i].features.values() == ds.images[i].features.values());  // bitwise
    REQUIRE(loaded.images[i].captions.size() == ds.images[i].captions.size());
    for (std::size_t c = 0; c < ds.images[i].captions.size(); ++c) {
      CHECK(loaded.images[i].captions[c].tokens == ds.images[i].captions[c].tokens);
      CHECK(loaded.images[i].captions[c].style == ds.images[i].captions[c].style);
      CHECK(loaded.images[i].captions[c].split == ds.images[i].captions[c].split);
    }
  }
  std::remove(path.c_str());

  const std::string empty_path = temp_path("atgan_test_empty.jsonl");
  { std::ofstream out(empty_path); }
  CHECK(load_jsonl(empty_path).images.empty());
  std::remove(empty_path.c_str());

  const std::string bad_path = temp_path("atgan_test_bad.jsonl");
  {
    std::ofstream out(bad_path);
    out << R"({"image_id":"a","features":[[1,2]],"captions":[{"tokens":["x"],"style":"factual","split":"train"}]})" << "\n";
    out << R"({"image_id":"b","features":[[1,2],[3,4]],"captions":[{"tokens":["x"],"style":"factual","split":"train"}]})" << "\n";
  }
  try {
    load_jsonl(bad_path);
    FAIL("expected a shape error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2:") != std::string::npos);  // line number
    CHECK(msg.find("2x2") != std::string::npos);  // offending shape
  }
  std::remove(bad_path.c_str());

  const std::string bad_style = temp_path("atgan_test_style.jsonl");
  {
    std::ofstream out(bad_style);
    out << R"({"image_id":"a","features":[[1,2]],"captions":[{"tokens":["x"],"style":"snarky","split":"train"}]})" << "\n";
  }
  CHECK_THROWS_AS(load_jsonl(bad_style), std::runtime_error);
  std::remove(bad_style.c_str());
}

TEST_CASE("batches partition deterministically") {
  Dataset ds;
  ds.regions = 1;
  ds.region_dim = 2;
  for (int i = 0; i < 7; ++i) {
    ImageRecord img;
    img.image_id = "i" + std::to_string(i);
    img.features = Tensor::zeros({1, 2});
    img.captions.push_back({{"a"}, Style::Factual, Split::Train});
    ds.images.push_back(img);
  }
  const auto items = collect_items(ds, Split::Train, StyleFilter::FactualOnly);
  REQUIRE(items.size() == 7);

  const auto one = make_batches(items, 100, 1, 0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 7);

  const auto a = make_batches(items, 3, 9, 2);
  const auto b = make_batches(items, 3, 9, 2);
  REQUIRE(a.size() == 3);  // 3 + 3 + 1, partial batch kept
  CHECK(a.back().size() == 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].size() == b[i].size());
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      CHECK(a[i][j].image_index == b[i][j].image_index);
      CHECK(a[i][j].caption_index == b[i][j].caption_index);
    }
  }

  std::set<int> seen;
  for (const auto& batch : a) {
    for (const auto& item : batch) CHECK(seen.insert(item.image_index).second);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("lexicon io") {
  const StyleLexicon lexicon = StyleLexicon::builtin();
  CHECK(!lexicon.positive.empty());
  CHECK(!lexicon.negative.empty());
  for (const auto& [adj, _] : lexicon.positive) CHECK(!lexicon.is_negative(adj));

  const std::string path = temp_path("atgan_test_lexicon.json");
  lexicon.save(path);
  const StyleLexicon loaded = StyleLexicon::load(path);
  CHECK(loaded.positive == lexicon.positive);
  CHECK(loaded.negative == lexicon.negative);
  std::remove(path.c_str());

  const std::string bad = temp_path("atgan_test_lexicon_bad.json");
  {
    std::ofstream out(bad);
    out << R"({"positive":{"nice":["circle"]},"negative":{"nice":["circle"]}})";
  }
  CHECK_THROWS_AS(StyleLexicon::load(bad), std::runtime_error);
  std::remove(bad.c_str());
}

TEST_CASE("feature identifiability at sigma zero") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0f;
  auto scenes = synth_scenes(12, cfg, 21, "d");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (std::size_t j = i + 1; j < scenes.size(); ++j) {
      if (scenes[i].second.values() == scenes[j].second.values()) {
        // identical features imply identical scenes
        const auto& a = scenes[i].first.objects;
        const auto& b = scenes[j].first.objects;
        REQUIRE(a.size() == b.size());
      }
    }
  }
}
