#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "atgan/data.hpp"
#include "json.hpp"

namespace atgan {

struct EvalItem {
  std::string image_id;
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;
};
using EvalCorpus = std::vector<EvalItem>;

/// Corpus-level BLEU-1..max_n (x100): clipped modified n-gram precision,
/// uniform geometric mean over orders, brevity penalty from the
/// closest-length reference (ties -> shorter).
std::vector<double> bleu(const EvalCorpus& corpus, int max_n = 4);

/// Mean over images of the best-reference LCS F-measure (beta = 1.2), x100.
double rouge_l(const EvalCorpus& corpus, double beta = 1.2);

/// CIDEr-D: tf-idf n-gram cosine (orders 1..4) with candidate-count
/// clipping and a Gaussian length penalty (sigma = 6), averaged over orders
/// and references; reported x100 of the unit similarity. Needs >= 2 images
/// for the idf document set.
double cider_d(const EvalCorpus& corpus, int max_n = 4, double sigma = 6.0);

struct StyleUsage {
  std::map<std::string, long long> counts;
  long long total = 0;
  std::size_t unique() const { return counts.size(); }
};

/// Counts every token that is a lexicon adjective of either polarity.
StyleUsage extract_style_adjectives(const std::vector<std::vector<std::string>>& captions,
                                    const StyleLexicon& lexicon);

/// Shannon entropy (bits) of the adjective usage distribution; 0 when empty.
double style_entropy(const StyleUsage& usage);

/// Probability mass (percent) of the k most frequent adjectives
/// (ties: count order then lexicographic). 100 when U <= k.
double top_k_mass(const StyleUsage& usage, int k = 4);

std::vector<std::pair<std::string, long long>> top_adjectives(const StyleUsage& usage, int k = 10);

struct MetricReport {
  std::vector<double> bleu;  // x100
  double rouge_l = 0.0;      // x100
  double cider = 0.0;        // x100
  double entropy_bits = 0.0;
  double top4_mass = 0.0;  // percent
  std::vector<std::pair<std::string, long long>> top_adjectives;
  int n_images = 0;
  int n_references = 0;
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

MetricReport evaluate_corpus(const EvalCorpus& corpus, const StyleLexicon& lexicon,
                             nlohmann::json config_echo = nlohmann::json::object());

/// Fixed-column text rendering for standard output.
std::string report_table(const MetricReport& report);

}  // namespace atgan
