#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atgan/rng.hpp"
#include "atgan/tensor.hpp"

namespace atgan {

enum class Style { Factual, Positive, Negative };
enum class Split { Train, Val, Test };

std::string style_name(Style s);
Style style_from(const std::string& s);
std::string split_name(Split s);
Split split_from(const std::string& s);

struct CaptionEntry {
  std::vector<std::string> tokens;
  Style style = Style::Factual;
  Split split = Split::Train;
};

struct ImageRecord {
  std::string image_id;
  Tensor features;  // K x D
  std::vector<CaptionEntry> captions;
};

struct Dataset {
  int regions = 0;
  int region_dim = 0;
  std::vector<ImageRecord> images;
};

/// Token <-> id bijection with four reserved ids.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_token;
  std::map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id_of(const std::string& token) const;
  const std::string& token(int id) const;
};

/// Ids ordered by corpus frequency (descending), then lexicographically.
Vocabulary build_vocab(const Dataset& corpus);
/// Rebuilds a vocabulary from a stored token list (checkpoint load).
Vocabulary vocab_from_tokens(std::vector<std::string> tokens);

/// [bos] + ids + [eos], right-padded with pad to t_max. Unknown tokens map
/// to unk; captions longer than t_max - 2 are rejected, never truncated.
std::vector<int> encode_caption(const std::vector<std::string>& tokens, const Vocabulary& vocab, int t_max);
/// Inverse on the content portion: strips bos/pad, stops at eos.
std::vector<std::string> decode_caption(const std::vector<int>& ids, const Vocabulary& vocab);

/// Two disjoint polarity sets of style adjectives, each mapped to the shape
/// nouns it may modify.
struct StyleLexicon {
  std::map<std::string, std::vector<std::string>> positive;
  std::map<std::string, std::vector<std::string>> negative;

  bool contains(const std::string& token) const;
  bool is_positive(const std::string& token) const { return positive.count(token) > 0; }
  bool is_negative(const std::string& token) const { return negative.count(token) > 0; }

  static StyleLexicon builtin();
  static StyleLexicon load(const std::string& path);
  void save(const std::string& path) const;
};

extern const std::vector<std::string> kShapeNames;
extern const std::vector<std::string> kColorNames;
extern const std::vector<std::string> kRelationNames;  // multi-word relations, space separated

struct SceneObject {
  int shape = 0;
  int color = 0;
  int cell = 0;  // row-major cell in the grid
};

struct Scene {
  std::string id;
  int grid = 3;
  std::vector<SceneObject> objects;
};

struct SynthConfig {
  int grid = 3;  // regions K = grid*grid
  int region_dim = 16;
  float noise_sigma = 0.05f;
  int captions_per_scene = 3;
  int factual_train = 400;
  int factual_val = 50;
  int factual_test = 50;
  int styled_train = 100;  // per polarity
  int styled_val = 25;
  int styled_test = 40;
};

/// Region features: per cell, one-hot shape ++ one-hot color ++ (row, col)
/// position code, plus Gaussian noise of the configured sigma. Empty cells
/// carry only the position code. region_dim must fit the encoding.
Tensor scene_features(const Scene& scene, const SynthConfig& cfg, Rng& rng);

std::vector<std::pair<Scene, Tensor>> synth_scenes(int count, const SynthConfig& cfg,
                                                   std::uint64_t seed, const std::string& id_prefix);

/// Grammar-generated descriptions of a scene. Styled captions carry at least
/// one lexicon adjective of the requested polarity; factual captions none.
std::vector<std::vector<std::string>> synth_captions(const Scene& scene, Style style,
                                                     const StyleLexicon& lexicon, int count, Rng& rng);

/// Full corpus: factual train/val/test plus styled splits per polarity.
/// which limits generation: "all", "factual", "positive" or "negative".
Dataset synth_dataset(const SynthConfig& cfg, const StyleLexicon& lexicon, std::uint64_t seed,
                      const std::string& which = "all");

Dataset load_jsonl(const std::string& path);
void save_jsonl(const Dataset& dataset, const std::string& path);

struct TrainItem {
  int image_index = 0;
  int caption_index = 0;
};

enum class StyleFilter { Any, FactualOnly, StyledOnly, PositiveOnly, NegativeOnly };

std::vector<TrainItem> collect_items(const Dataset& dataset, Split split, StyleFilter filter);

/// Epoch-deterministic shuffle keyed by (seed, epoch); the final partial
/// batch is kept.
std::vector<std::vector<TrainItem>> make_batches(std::vector<TrainItem> items, int batch_size,
                                                 std::uint64_t seed, int epoch);

}  // namespace atgan
