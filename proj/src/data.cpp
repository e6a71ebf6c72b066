#include "atgan/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace atgan {

using nlohmann::json;

const std::vector<std::string> kShapeNames = {"circle", "square", "triangle", "star", "diamond", "ring"};
const std::vector<std::string> kColorNames = {"red", "green", "blue", "yellow", "purple", "orange", "black", "white"};
const std::vector<std::string> kRelationNames = {"next to", "above", "below", "beside"};

std::string style_name(Style s) {
  switch (s) {
    case Style::Factual: return "factual";
    case Style::Positive: return "positive";
    case Style::Negative: return "negative";
  }
  return "factual";
}

Style style_from(const std::string& s) {
  if (s == "factual") return Style::Factual;
  if (s == "positive") return Style::Positive;
  if (s == "negative") return Style::Negative;
  throw std::invalid_argument("unknown style label '" + s + "'");
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split label '" + s + "'");
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range (V=" +
                            std::to_string(size()) + ")");
  }
  return id_to_token[static_cast<std::size_t>(id)];
}

Vocabulary vocab_from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.id_to_token = std::move(tokens);
  for (int i = 0; i < v.size(); ++i) {
    if (!v.token_to_id.emplace(v.id_to_token[static_cast<std::size_t>(i)], i).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + v.id_to_token[static_cast<std::size_t>(i)] + "'");
    }
  }
  if (v.size() < 4 || v.id_to_token[0] != "<pad>" || v.id_to_token[1] != "<bos>" ||
      v.id_to_token[2] != "<eos>" || v.id_to_token[3] != "<unk>") {
    throw std::invalid_argument("vocabulary is missing the reserved tokens at ids 0-3");
  }
  return v;
}

Vocabulary build_vocab(const Dataset& corpus) {
  if (corpus.images.empty()) {
    throw std::invalid_argument("build_vocab: empty corpus");
  }
  std::map<std::string, long long> counts;
  for (const auto& img : corpus.images) {
    for (const auto& cap : img.captions) {
      for (const auto& tok : cap.tokens) counts[tok] += 1;
    }
  }
  std::vector<std::pair<std::string, long long>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& [tok, cnt] : ordered) tokens.push_back(tok);
  return vocab_from_tokens(std::move(tokens));
}

std::vector<int> encode_caption(const std::vector<std::string>& tokens, const Vocabulary& vocab, int t_max) {
  if (static_cast<int>(tokens.size()) > t_max - 2) {
    throw std::invalid_argument("caption of " + std::to_string(tokens.size()) +
                                " tokens does not fit t_max=" + std::to_string(t_max) +
                                " with begin/end tokens");
  }
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(t_max));
  ids.push_back(Vocabulary::kBos);
  for (const auto& tok : tokens) ids.push_back(vocab.id_of(tok));
  ids.push_back(Vocabulary::kEos);
  while (static_cast<int>(ids.size()) < t_max) ids.push_back(Vocabulary::kPad);
  return ids;
}

std::vector<std::string> decode_caption(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kBos || id == Vocabulary::kPad) continue;
    if (id == Vocabulary::kEos) break;
    out.push_back(vocab.token(id));
  }
  return out;
}

// ---- lexicon ----

bool StyleLexicon::contains(const std::string& token) const {
  return is_positive(token) || is_negative(token);
}

StyleLexicon StyleLexicon::builtin() {
  StyleLexicon lex;
  const std::vector<std::string> all(kShapeNames.begin(), kShapeNames.end());
  for (const auto& adj : {"bright", "charming", "cheerful", "fine", "great", "happy",
                          "lovely", "nice", "pretty", "sweet"}) {
    lex.positive[adj] = all;
  }
  lex.positive["shiny"] = {"ring", "star", "diamond"};
  lex.positive["splendid"] = {"circle", "star", "diamond", "ring"};
  for (const auto& adj : {"bleak", "cold", "dirty", "dull", "gloomy", "grim",
                          "nasty", "rough", "sad", "ugly"}) {
    lex.negative[adj] = all;
  }
  lex.negative["broken"] = {"ring", "square", "triangle"};
  lex.negative["weary"] = {"circle", "star", "square"};
  return lex;
}

static std::map<std::string, std::vector<std::string>> lexicon_side(const json& j, const std::string& key) {
  std::map<std::string, std::vector<std::string>> side;
  if (!j.contains(key)) throw std::runtime_error("lexicon file is missing the '" + key + "' object");
  for (const auto& [adj, nouns] : j.at(key).items()) {
    side[adj] = nouns.get<std::vector<std::string>>();
  }
  return side;
}

StyleLexicon StyleLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file '" + path + "'");
  json j = json::parse(in);
  StyleLexicon lex;
  lex.positive = lexicon_side(j, "positive");
  lex.negative = lexicon_side(j, "negative");
  for (const auto& [adj, _] : lex.positive) {
    if (lex.negative.count(adj)) {
      throw std::runtime_error("lexicon adjective '" + adj + "' appears in both polarities");
    }
  }
  if (lex.positive.empty() || lex.negative.empty()) {
    throw std::runtime_error("lexicon polarity sets must be nonempty");
  }
  return lex;
}

void StyleLexicon::save(const std::string& path) const {
  json j;
  j["positive"] = positive;
  j["negative"] = negative;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write lexicon file '" + path + "'");
  out << j.dump(2) << "\n";
}

// ---- scenes and captions ----

Tensor scene_features(const Scene& scene, const SynthConfig& cfg, Rng& rng) {
  const int k = cfg.grid * cfg.grid;
  const int shape_dims = static_cast<int>(kShapeNames.size());
  const int color_dims = static_cast<int>(kColorNames.size());
  const int needed = shape_dims + color_dims + 2;
  if (cfg.region_dim < needed) {
    throw std::invalid_argument("region_dim=" + std::to_string(cfg.region_dim) +
                                " too small for the scene encoding (needs " + std::to_string(needed) + ")");
  }
  Tensor feats = Tensor::zeros({k, cfg.region_dim});
  const int denom = std::max(1, scene.grid - 1);
  for (int cell = 0; cell < k; ++cell) {
    float* row = feats.row(cell);
    row[shape_dims + color_dims] = static_cast<float>(cell / scene.grid) / static_cast<float>(denom);
    row[shape_dims + color_dims + 1] = static_cast<float>(cell % scene.grid) / static_cast<float>(denom);
  }
  for (const auto& obj : scene.objects) {
    float* row = feats.row(obj.cell);
    row[obj.shape] = 1.0f;
    row[shape_dims + obj.color] = 1.0f;
  }
  if (cfg.noise_sigma > 0.0f) {
    for (auto& v : feats.values()) v += cfg.noise_sigma * static_cast<float>(rng.normal());
  }
  return feats;
}

std::vector<std::pair<Scene, Tensor>> synth_scenes(int count, const SynthConfig& cfg,
                                                   std::uint64_t seed, const std::string& id_prefix) {
  if (count < 1) throw std::invalid_argument("synth_scenes: count must be >= 1");
  std::vector<std::pair<Scene, Tensor>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i) + 0x5ce9e5u));
    Scene scene;
    scene.grid = cfg.grid;
    scene.id = id_prefix + "-" + std::to_string(i);
    const int cells = cfg.grid * cfg.grid;
    std::vector<int> order(static_cast<std::size_t>(cells));
    for (int c = 0; c < cells; ++c) order[static_cast<std::size_t>(c)] = c;
    for (int c = cells - 1; c > 0; --c) std::swap(order[static_cast<std::size_t>(c)],
                                                  order[static_cast<std::size_t>(rng.uniform_int(c + 1))]);
    const int n_objects = 1 + rng.uniform_int(std::min(4, cells));
    for (int o = 0; o < n_objects; ++o) {
      SceneObject obj;
      obj.cell = order[static_cast<std::size_t>(o)];
      obj.shape = rng.uniform_int(static_cast<int>(kShapeNames.size()));
      obj.color = rng.uniform_int(static_cast<int>(kColorNames.size()));
      scene.objects.push_back(obj);
    }
    Tensor feats = scene_features(scene, cfg, rng);
    out.emplace_back(std::move(scene), std::move(feats));
  }
  return out;
}

namespace {

// Weighted pick with 1/(1+rank) weights: frequent-head, long-tail usage.
const std::string& pick_skewed(const std::vector<std::string>& options, Rng& rng) {
  double total = 0.0;
  for (std::size_t r = 0; r < options.size(); ++r) total += 1.0 / (1.0 + static_cast<double>(r));
  double u = rng.uniform() * total;
  for (std::size_t r = 0; r < options.size(); ++r) {
    u -= 1.0 / (1.0 + static_cast<double>(r));
    if (u < 0.0) return options[r];
  }
  return options.back();
}

std::vector<std::string> adjectives_for(const std::map<std::string, std::vector<std::string>>& side,
                                        const std::string& noun) {
  std::vector<std::string> out;
  for (const auto& [adj, nouns] : side) {
    if (std::find(nouns.begin(), nouns.end(), noun) != nouns.end()) out.push_back(adj);
  }
  return out;
}

void append_phrase(std::vector<std::string>& tokens, const SceneObject& obj, Style style,
                   const StyleLexicon& lexicon, bool force_adjective, Rng& rng, bool* styled) {
  tokens.push_back(rng.uniform() < 0.3 ? "the" : "a");
  if (style != Style::Factual) {
    const auto& side = style == Style::Positive ? lexicon.positive : lexicon.negative;
    const std::string& noun = kShapeNames[static_cast<std::size_t>(obj.shape)];
    auto allowed = adjectives_for(side, noun);
    const bool want = force_adjective || rng.uniform() < 0.35;
    if (want && !allowed.empty()) {
      tokens.push_back(pick_skewed(allowed, rng));
      if (styled != nullptr) *styled = true;
    }
  }
  tokens.push_back(kColorNames[static_cast<std::size_t>(obj.color)]);
  tokens.push_back(kShapeNames[static_cast<std::size_t>(obj.shape)]);
}

}  // namespace

std::vector<std::vector<std::string>> synth_captions(const Scene& scene, Style style,
                                                     const StyleLexicon& lexicon, int count, Rng& rng) {
  if (scene.objects.empty()) throw std::invalid_argument("synth_captions: scene has no objects");
  if (style != Style::Factual) {
    const auto& side = style == Style::Positive ? lexicon.positive : lexicon.negative;
    bool any = false;
    for (const auto& obj : scene.objects) {
      if (!adjectives_for(side, kShapeNames[static_cast<std::size_t>(obj.shape)]).empty()) any = true;
    }
    if (!any) {
      throw std::invalid_argument("lexicon has no " + style_name(style) +
                                  " adjective for any noun in scene " + scene.id);
    }
  }
  std::vector<std::vector<std::string>> captions;
  for (int n = 0; n < count; ++n) {
    std::vector<std::string> tokens;
    bool styled = false;
    // Retry until the styled constraint is met; factual always succeeds.
    for (int attempt = 0; attempt < 16 && tokens.empty(); ++attempt) {
      std::vector<std::string> cand;
      styled = false;
      // Objects are described in reading order (lowest cell first), so the
      // image-to-caption mapping stays learnable; variety comes from the
      // grammar and style choices.
      std::vector<const SceneObject*> ordered;
      for (const auto& obj : scene.objects) ordered.push_back(&obj);
      std::sort(ordered.begin(), ordered.end(),
                [](const SceneObject* a, const SceneObject* b) { return a->cell < b->cell; });
      const int n_obj = static_cast<int>(ordered.size());
      const auto& first = *ordered[0];
      append_phrase(cand, first, style, lexicon, true, rng, &styled);
      if (n_obj > 1 && rng.uniform() < 0.6) {
        const auto& second = *ordered[1];
        const std::string& rel = kRelationNames[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(kRelationNames.size())))];
        std::istringstream rel_words(rel);
        for (std::string w; rel_words >> w;) cand.push_back(w);
        append_phrase(cand, second, style, lexicon, false, rng, &styled);
      }
      if (style == Style::Factual || styled) tokens = std::move(cand);
    }
    if (tokens.empty()) {
      throw std::runtime_error("failed to generate a styled caption for scene " + scene.id);
    }
    captions.push_back(std::move(tokens));
  }
  return captions;
}

static void add_split(Dataset& ds, const SynthConfig& cfg, const StyleLexicon& lexicon,
                      std::uint64_t seed, Style style, Split split, int count,
                      const std::string& prefix) {
  if (count <= 0) return;
  const std::uint64_t section_seed =
      Rng::mix(seed, Rng::mix(static_cast<std::uint64_t>(style), static_cast<std::uint64_t>(split) + 17));
  auto scenes = synth_scenes(count, cfg, section_seed, prefix);
  Rng cap_rng(Rng::mix(section_seed, 0xca97));
  for (auto& [scene, feats] : scenes) {
    ImageRecord img;
    img.image_id = scene.id;
    img.features = feats;
    for (auto& tokens : synth_captions(scene, style, lexicon, cfg.captions_per_scene, cap_rng)) {
      img.captions.push_back(CaptionEntry{std::move(tokens), style, split});
    }
    ds.images.push_back(std::move(img));
  }
}

Dataset synth_dataset(const SynthConfig& cfg, const StyleLexicon& lexicon, std::uint64_t seed,
                      const std::string& which) {
  if (which != "all" && which != "factual" && which != "positive" && which != "negative") {
    throw std::invalid_argument("synth_dataset: unknown style selector '" + which + "'");
  }
  Dataset ds;
  ds.regions = cfg.grid * cfg.grid;
  ds.region_dim = cfg.region_dim;
  const bool factual = which == "all" || which == "factual";
  const bool positive = which == "all" || which == "positive";
  const bool negative = which == "all" || which == "negative";
  if (factual) {
    add_split(ds, cfg, lexicon, seed, Style::Factual, Split::Train, cfg.factual_train, "fact-train");
    add_split(ds, cfg, lexicon, seed, Style::Factual, Split::Val, cfg.factual_val, "fact-val");
    add_split(ds, cfg, lexicon, seed, Style::Factual, Split::Test, cfg.factual_test, "fact-test");
  }
  if (positive) {
    add_split(ds, cfg, lexicon, seed, Style::Positive, Split::Train, cfg.styled_train, "pos-train");
    add_split(ds, cfg, lexicon, seed, Style::Positive, Split::Val, cfg.styled_val, "pos-val");
    add_split(ds, cfg, lexicon, seed, Style::Positive, Split::Test, cfg.styled_test, "pos-test");
  }
  if (negative) {
    add_split(ds, cfg, lexicon, seed, Style::Negative, Split::Train, cfg.styled_train, "neg-train");
    add_split(ds, cfg, lexicon, seed, Style::Negative, Split::Val, cfg.styled_val, "neg-val");
    add_split(ds, cfg, lexicon, seed, Style::Negative, Split::Test, cfg.styled_test, "neg-test");
  }
  return ds;
}

// ---- jsonl ----

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");
  Dataset ds;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    try {
      ImageRecord img;
      img.image_id = j.at("image_id").get<std::string>();
      const auto& feats = j.at("features");
      if (!feats.is_array() || feats.empty()) throw std::runtime_error("features must be a nonempty matrix");
      const int k = static_cast<int>(feats.size());
      const int d = static_cast<int>(feats.at(0).size());
      if (ds.regions == 0) {
        ds.regions = k;
        ds.region_dim = d;
      } else if (k != ds.regions || d != ds.region_dim) {
        throw std::runtime_error("feature shape [" + std::to_string(k) + "x" + std::to_string(d) +
                                 "] does not match the dataset's [" + std::to_string(ds.regions) + "x" +
                                 std::to_string(ds.region_dim) + "]");
      }
      std::vector<float> values;
      values.reserve(static_cast<std::size_t>(k) * static_cast<std::size_t>(d));
      for (const auto& row : feats) {
        if (static_cast<int>(row.size()) != d) {
          throw std::runtime_error("ragged feature row (expected " + std::to_string(d) + " values)");
        }
        for (const auto& v : row) values.push_back(v.get<float>());
      }
      img.features = Tensor::from_values({k, d}, std::move(values));
      for (const auto& cap : j.at("captions")) {
        CaptionEntry entry;
        entry.tokens = cap.at("tokens").get<std::vector<std::string>>();
        entry.style = style_from(cap.at("style").get<std::string>());
        entry.split = split_from(cap.at("split").get<std::string>());
        img.captions.push_back(std::move(entry));
      }
      ds.images.push_back(std::move(img));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ds;
}

void save_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file '" + path + "'");
  for (const auto& img : dataset.images) {
    json j;
    j["image_id"] = img.image_id;
    json feats = json::array();
    for (int k = 0; k < img.features.dim(0); ++k) {
      json row = json::array();
      for (int d = 0; d < img.features.dim(1); ++d) row.push_back(img.features.row(k)[d]);
      feats.push_back(std::move(row));
    }
    j["features"] = std::move(feats);
    json caps = json::array();
    for (const auto& cap : img.captions) {
      caps.push_back({{"tokens", cap.tokens}, {"style", style_name(cap.style)}, {"split", split_name(cap.split)}});
    }
    j["captions"] = std::move(caps);
    out << j.dump() << "\n";
  }
}

std::vector<TrainItem> collect_items(const Dataset& dataset, Split split, StyleFilter filter) {
  std::vector<TrainItem> items;
  for (int i = 0; i < static_cast<int>(dataset.images.size()); ++i) {
    const auto& caps = dataset.images[static_cast<std::size_t>(i)].captions;
    for (int c = 0; c < static_cast<int>(caps.size()); ++c) {
      const auto& cap = caps[static_cast<std::size_t>(c)];
      if (cap.split != split) continue;
      const bool ok = filter == StyleFilter::Any ||
                      (filter == StyleFilter::FactualOnly && cap.style == Style::Factual) ||
                      (filter == StyleFilter::StyledOnly && cap.style != Style::Factual) ||
                      (filter == StyleFilter::PositiveOnly && cap.style == Style::Positive) ||
                      (filter == StyleFilter::NegativeOnly && cap.style == Style::Negative);
      if (ok) items.push_back(TrainItem{i, c});
    }
  }
  return items;
}

std::vector<std::vector<TrainItem>> make_batches(std::vector<TrainItem> items, int batch_size,
                                                 std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch) + 0x9d5f));
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
  std::vector<std::vector<TrainItem>> out;
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(start),
                     items.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace atgan
