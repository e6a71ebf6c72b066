#include "atgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace atgan {

namespace {

using Counts = std::map<std::string, long long>;

std::string ngram_key(const std::vector<std::string>& tokens, std::size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key.push_back('\x1f');
    key += tokens[start + static_cast<std::size_t>(i)];
  }
  return key;
}

Counts ngram_counts(const std::vector<std::string>& tokens, int n) {
  Counts counts;
  if (static_cast<int>(tokens.size()) >= n) {
    for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= tokens.size(); ++s) {
      counts[ngram_key(tokens, s, n)] += 1;
    }
  }
  return counts;
}

void validate_corpus(const EvalCorpus& corpus, const char* op) {
  if (corpus.empty()) throw std::invalid_argument(std::string(op) + ": empty corpus");
  for (const auto& item : corpus) {
    if (item.candidate.empty()) {
      throw std::invalid_argument(std::string(op) + ": empty candidate for image '" + item.image_id + "'");
    }
    if (item.references.empty()) {
      throw std::invalid_argument(std::string(op) + ": image '" + item.image_id + "' has no references");
    }
  }
}

}  // namespace

std::vector<double> bleu(const EvalCorpus& corpus, int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  validate_corpus(corpus, "bleu");
  std::vector<double> clipped(static_cast<std::size_t>(max_n), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(max_n), 0.0);
  long long cand_len = 0, eff_ref_len = 0;
  for (const auto& item : corpus) {
    const long long c = static_cast<long long>(item.candidate.size());
    cand_len += c;
    long long best_ref = static_cast<long long>(item.references[0].size());
    for (const auto& ref : item.references) {
      const long long r = static_cast<long long>(ref.size());
      const long long d_new = std::llabs(r - c), d_old = std::llabs(best_ref - c);
      if (d_new < d_old || (d_new == d_old && r < best_ref)) best_ref = r;
    }
    eff_ref_len += best_ref;
    for (int n = 1; n <= max_n; ++n) {
      const Counts cand = ngram_counts(item.candidate, n);
      Counts max_ref;
      for (const auto& ref : item.references) {
        for (const auto& [key, cnt] : ngram_counts(ref, n)) {
          max_ref[key] = std::max(max_ref[key], cnt);
        }
      }
      for (const auto& [key, cnt] : cand) {
        totals[static_cast<std::size_t>(n - 1)] += static_cast<double>(cnt);
        auto it = max_ref.find(key);
        if (it != max_ref.end()) {
          clipped[static_cast<std::size_t>(n - 1)] += static_cast<double>(std::min(cnt, it->second));
        }
      }
    }
  }
  const double bp = cand_len > eff_ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(eff_ref_len) / static_cast<double>(cand_len));
  std::vector<double> scores;
  for (int n = 1; n <= max_n; ++n) {
    double log_sum = 0.0;
    bool zero = false;
    for (int i = 1; i <= n; ++i) {
      const double p = totals[static_cast<std::size_t>(i - 1)] > 0.0
                           ? clipped[static_cast<std::size_t>(i - 1)] / totals[static_cast<std::size_t>(i - 1)]
                           : 0.0;
      if (p <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(p) / static_cast<double>(n);
    }
    scores.push_back(zero ? 0.0 : 100.0 * bp * std::exp(log_sum));
  }
  return scores;
}

namespace {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double rouge_l(const EvalCorpus& corpus, double beta) {
  validate_corpus(corpus, "rouge_l");
  const double b2 = beta * beta;
  double total = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    for (const auto& ref : item.references) {
      const double l = static_cast<double>(lcs_length(item.candidate, ref));
      if (l == 0.0) continue;
      const double p = l / static_cast<double>(item.candidate.size());
      const double r = l / static_cast<double>(ref.size());
      const double f = (1.0 + b2) * p * r / (r + b2 * p);
      best = std::max(best, f);
    }
    total += best;
  }
  return 100.0 * total / static_cast<double>(corpus.size());
}

double cider_d(const EvalCorpus& corpus, int max_n, double sigma) {
  validate_corpus(corpus, "cider_d");
  if (corpus.size() < 2) {
    throw std::invalid_argument("cider_d: needs at least 2 images for the idf document set, got " +
                                std::to_string(corpus.size()));
  }
  // Document frequency: an n-gram counts once per image when it appears in
  // any of that image's references.
  Counts doc_freq;
  for (const auto& item : corpus) {
    std::map<std::string, bool> seen;
    for (const auto& ref : item.references) {
      for (int n = 1; n <= max_n; ++n) {
        for (const auto& [key, cnt] : ngram_counts(ref, n)) seen[key] = true;
      }
    }
    for (const auto& [key, _] : seen) doc_freq[key] += 1;
  }
  const double log_docs = std::log(static_cast<double>(corpus.size()));

  struct TfIdf {
    std::vector<std::map<std::string, double>> vec;
    std::vector<double> norm;
    long long length = 0;
  };
  auto to_vec = [&](const std::vector<std::string>& tokens) {
    TfIdf out;
    out.vec.resize(static_cast<std::size_t>(max_n));
    out.norm.assign(static_cast<std::size_t>(max_n), 0.0);
    out.length = static_cast<long long>(tokens.size());
    for (int n = 1; n <= max_n; ++n) {
      for (const auto& [key, cnt] : ngram_counts(tokens, n)) {
        auto df_it = doc_freq.find(key);
        const double df = df_it == doc_freq.end() ? 0.0 : static_cast<double>(df_it->second);
        const double idf = log_docs - std::log(std::max(1.0, df));
        const double w = static_cast<double>(cnt) * idf;
        out.vec[static_cast<std::size_t>(n - 1)][key] = w;
        out.norm[static_cast<std::size_t>(n - 1)] += w * w;
      }
      out.norm[static_cast<std::size_t>(n - 1)] = std::sqrt(out.norm[static_cast<std::size_t>(n - 1)]);
    }
    return out;
  };

  double corpus_score = 0.0;
  for (const auto& item : corpus) {
    const TfIdf hyp = to_vec(item.candidate);
    double image_score = 0.0;
    for (const auto& ref : item.references) {
      const TfIdf rv = to_vec(ref);
      const double delta = static_cast<double>(hyp.length - rv.length);
      const double len_penalty = std::exp(-delta * delta / (2.0 * sigma * sigma));
      for (int n = 0; n < max_n; ++n) {
        double dot = 0.0;
        for (const auto& [key, hw] : hyp.vec[static_cast<std::size_t>(n)]) {
          auto it = rv.vec[static_cast<std::size_t>(n)].find(key);
          if (it != rv.vec[static_cast<std::size_t>(n)].end()) {
            dot += std::min(hw, it->second) * it->second;
          }
        }
        double val = 0.0;
        if (hyp.norm[static_cast<std::size_t>(n)] != 0.0 && rv.norm[static_cast<std::size_t>(n)] != 0.0) {
          val = dot / (hyp.norm[static_cast<std::size_t>(n)] * rv.norm[static_cast<std::size_t>(n)]);
        }
        image_score += val * len_penalty;
      }
    }
    image_score /= static_cast<double>(max_n) * static_cast<double>(item.references.size());
    corpus_score += image_score;
  }
  return 100.0 * corpus_score / static_cast<double>(corpus.size());
}

StyleUsage extract_style_adjectives(const std::vector<std::vector<std::string>>& captions,
                                    const StyleLexicon& lexicon) {
  StyleUsage usage;
  for (const auto& caption : captions) {
    for (const auto& token : caption) {
      if (lexicon.contains(token)) {
        usage.counts[token] += 1;
        usage.total += 1;
      }
    }
  }
  return usage;
}

double style_entropy(const StyleUsage& usage) {
  if (usage.total <= 0) return 0.0;
  double h = 0.0;
  for (const auto& [_, cnt] : usage.counts) {
    if (cnt <= 0) continue;
    const double p = static_cast<double>(cnt) / static_cast<double>(usage.total);
    h -= p * std::log2(p);
  }
  return h;
}

std::vector<std::pair<std::string, long long>> top_adjectives(const StyleUsage& usage, int k) {
  std::vector<std::pair<std::string, long long>> items(usage.counts.begin(), usage.counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(items.size()) > k) items.resize(static_cast<std::size_t>(k));
  return items;
}

double top_k_mass(const StyleUsage& usage, int k) {
  if (k < 1) throw std::invalid_argument("top_k_mass: k must be >= 1");
  if (usage.unique() <= static_cast<std::size_t>(k)) return 100.0;
  long long head = 0;
  for (const auto& [_, cnt] : top_adjectives(usage, k)) head += cnt;
  return 100.0 * static_cast<double>(head) / static_cast<double>(usage.total);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["bleu"] = bleu;
  j["rouge_l"] = rouge_l;
  j["cider_d"] = cider;
  j["style_entropy_bits"] = entropy_bits;
  j["top4_mass_percent"] = top4_mass;
  nlohmann::json adjs = nlohmann::json::array();
  for (const auto& [adj, cnt] : top_adjectives) adjs.push_back({{"adjective", adj}, {"count", cnt}});
  j["top_adjectives"] = std::move(adjs);
  j["n_images"] = n_images;
  j["n_references"] = n_references;
  j["config"] = config_echo;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.bleu = j.at("bleu").get<std::vector<double>>();
  r.rouge_l = j.at("rouge_l").get<double>();
  r.cider = j.at("cider_d").get<double>();
  r.entropy_bits = j.at("style_entropy_bits").get<double>();
  r.top4_mass = j.at("top4_mass_percent").get<double>();
  for (const auto& e : j.at("top_adjectives")) {
    r.top_adjectives.emplace_back(e.at("adjective").get<std::string>(), e.at("count").get<long long>());
  }
  r.n_images = j.at("n_images").get<int>();
  r.n_references = j.at("n_references").get<int>();
  r.config_echo = j.value("config", nlohmann::json::object());
  return r;
}

MetricReport evaluate_corpus(const EvalCorpus& corpus, const StyleLexicon& lexicon,
                             nlohmann::json config_echo) {
  validate_corpus(corpus, "evaluate_corpus");
  MetricReport report;
  report.bleu = bleu(corpus, 4);
  report.rouge_l = rouge_l(corpus);
  report.cider = cider_d(corpus);
  std::vector<std::vector<std::string>> candidates;
  candidates.reserve(corpus.size());
  int refs = 0;
  for (const auto& item : corpus) {
    candidates.push_back(item.candidate);
    refs += static_cast<int>(item.references.size());
  }
  const StyleUsage usage = extract_style_adjectives(candidates, lexicon);
  report.entropy_bits = style_entropy(usage);
  report.top4_mass = top_k_mass(usage, 4);
  report.top_adjectives = top_adjectives(usage, 10);
  report.n_images = static_cast<int>(corpus.size());
  report.n_references = refs;
  report.config_echo = std::move(config_echo);
  return report;
}

std::string report_table(const MetricReport& report) {
  std::ostringstream os;
  char line[128];
  os << "metric            value\n";
  os << "----------------  ----------\n";
  for (std::size_t n = 0; n < report.bleu.size(); ++n) {
    std::snprintf(line, sizeof(line), "%-16s  %10.4f\n", ("BLEU-" + std::to_string(n + 1)).c_str(),
                  report.bleu[n]);
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-16s  %10.4f\n", "ROUGE-L", report.rouge_l);
  os << line;
  std::snprintf(line, sizeof(line), "%-16s  %10.4f\n", "CIDEr-D", report.cider);
  os << line;
  std::snprintf(line, sizeof(line), "%-16s  %10.4f\n", "entropy(bits)", report.entropy_bits);
  os << line;
  std::snprintf(line, sizeof(line), "%-16s  %10.2f\n", "top4 mass(%)", report.top4_mass);
  os << line;
  os << "top adjectives: ";
  for (std::size_t i = 0; i < report.top_adjectives.size(); ++i) {
    if (i) os << ", ";
    os << report.top_adjectives[i].first << "(" << report.top_adjectives[i].second << ")";
  }
  os << "\n";
  return os.str();
}

}  // namespace atgan
