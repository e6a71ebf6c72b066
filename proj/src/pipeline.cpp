#include "atgan/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include "atgan/checkpoint.hpp"
#include "atgan/metrics.hpp"

namespace atgan {

namespace {

constexpr std::uint64_t kGenInitTag = 0x67;
constexpr std::uint64_t kGenStreamTag = 0x68;
constexpr std::uint64_t kDiscInitTag = 0x64;
constexpr std::uint64_t kDiscStreamTag = 0x65;
constexpr std::uint64_t kAdvGenStreamTag = 0xa1;
constexpr std::uint64_t kAdvDiscStreamTag = 0xa2;
constexpr std::uint64_t kSampleTag = 0x5a;

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("output directory is required");
  std::filesystem::create_directories(dir);
}

Dataset load_dataset_checked(const std::string& path, int t_max) {
  Dataset ds = load_jsonl(path);
  if (ds.images.empty()) throw std::runtime_error("dataset '" + path + "' has no images");
  for (const auto& img : ds.images) {
    for (const auto& cap : img.captions) {
      if (static_cast<int>(cap.tokens.size()) > t_max - 2) {
        throw std::runtime_error("caption of " + std::to_string(cap.tokens.size()) +
                                 " tokens for image '" + img.image_id + "' does not fit t_max=" +
                                 std::to_string(t_max));
      }
    }
  }
  return ds;
}

GeneratorConfig make_generator_config(const RunConfig& cfg, const Dataset& ds, const Vocabulary& vocab) {
  GeneratorConfig g;
  g.vocab = vocab.size();
  g.embed_dim = cfg.model.embed_dim;
  g.region_dim = ds.region_dim;
  g.regions = ds.regions;
  g.hidden_dim = cfg.model.hidden_dim;
  g.attn_dim = cfg.model.attn_dim;
  g.t_max = cfg.model.t_max;
  return g;
}

DiscriminatorConfig make_discriminator_config(const RunConfig& cfg, const Vocabulary& vocab, int t_max) {
  DiscriminatorConfig d;
  d.vocab = vocab.size();
  d.embed_dim = cfg.model.critic_embed_dim;
  d.t_max = t_max;
  d.windows = cfg.model.critic_windows;
  d.filters = cfg.model.critic_filters;
  d.bn_momentum = cfg.model.bn_momentum;
  d.bn_eps = cfg.model.bn_eps;
  d.init_bound = cfg.train.clip_bound;
  return d;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, const SynthArgs& args) {
  cfg.validate();
  if (args.out.empty()) throw std::invalid_argument("synth: --out is required");
  SynthConfig synth = cfg.synth;
  if (args.scenes > 0) {
    const int n = args.scenes;
    synth.factual_train = n;
    synth.factual_val = std::max(2, n / 8);
    synth.factual_test = std::max(2, n / 8);
    synth.styled_train = std::max(2, n / 4);
    synth.styled_val = std::max(2, n / 16);
    synth.styled_test = std::max(2, n / 10);
  }
  const StyleLexicon lexicon = StyleLexicon::builtin();
  const Dataset ds = synth_dataset(synth, lexicon, cfg.train.seed, args.style);
  save_jsonl(ds, args.out);
  if (!args.lexicon_out.empty()) lexicon.save(args.lexicon_out);
  std::cout << "wrote " << ds.images.size() << " images to " << args.out << "\n";
}

void cmd_pretrain_gen(const RunConfig& cfg, const PretrainGenArgs& args) {
  cfg.validate();
  if (args.data.empty() || args.out_dir.empty()) {
    throw std::invalid_argument("pretrain-gen: --data and --out-dir are required");
  }
  const Dataset ds = load_dataset_checked(args.data, cfg.model.t_max);
  ensure_dir(args.out_dir);

  Vocabulary vocab;
  GenTrainState gst;
  if (!args.resume.empty()) {
    gst = unpack_generator(load_checkpoint(args.resume), &vocab);
  } else {
    vocab = build_vocab(ds);
    Rng init_rng(Rng::mix(cfg.train.seed, kGenInitTag));
    gst.params = GeneratorParams::init(make_generator_config(cfg, ds, vocab), init_rng);
    gst.adam.lr = cfg.train.gen_lr;
    gst.rng = Rng(Rng::mix(cfg.train.seed, kGenStreamTag));
  }

  TrainLog log;
  const nlohmann::json echo = run_config_json(cfg);
  const auto on_epoch = [&](const GenTrainState& st, double) {
    save_checkpoint(pack_generator(st, vocab, echo), args.out_dir + "/gen_last.ckpt");
  };
  const TrainedGenerator result = pretrain_generator(gst, ds, vocab, cfg.train, log, on_epoch);

  GenTrainState best_state;
  best_state.params = result.best;
  best_state.adam = gst.adam;
  best_state.rng = gst.rng;
  best_state.step = gst.step;
  best_state.epoch = result.best_epoch;
  save_checkpoint(pack_generator(best_state, vocab, echo), args.out_dir + "/gen_best.ckpt");
  log.write_csv(args.out_dir + "/train_log.csv");
  std::cout << "pretrain-gen done: best epoch " << result.best_epoch << " (" << cfg.train.val_metric
            << "=" << result.best_metric << ")\n";
}

void cmd_pretrain_disc(const RunConfig& cfg, const PretrainDiscArgs& args) {
  cfg.validate();
  if (args.data.empty() || args.gen_checkpoint.empty() || args.out_dir.empty()) {
    throw std::invalid_argument("pretrain-disc: --data, --gen-checkpoint and --out-dir are required");
  }
  Vocabulary vocab;
  const GenTrainState gen = unpack_generator(load_checkpoint(args.gen_checkpoint), &vocab);
  const Dataset ds = load_dataset_checked(args.data, gen.params.cfg.t_max);
  ensure_dir(args.out_dir);

  DiscTrainState dst;
  Rng init_rng(Rng::mix(cfg.train.seed, kDiscInitTag));
  dst.params = DiscriminatorParams::init(
      make_discriminator_config(cfg, vocab, gen.params.cfg.t_max), init_rng);
  dst.rms.lr = cfg.train.disc_lr;
  dst.rng = Rng(Rng::mix(cfg.train.seed, kDiscStreamTag));

  TrainLog log;
  pretrain_discriminator(dst, gen.params, ds, vocab, cfg.train, log);
  save_checkpoint(pack_discriminator(dst, vocab, run_config_json(cfg)), args.out_dir + "/disc.ckpt");
  log.write_csv(args.out_dir + "/disc_train_log.csv");
  std::cout << "pretrain-disc done: " << cfg.train.pretrain_disc_steps << " steps\n";
}

void cmd_adversarial(const RunConfig& cfg, const AdversarialArgs& args) {
  cfg.validate();
  if (args.out_dir.empty()) throw std::invalid_argument("adversarial: --out-dir is required");
  const bool resuming = !args.resume_gen.empty();
  if (resuming != !args.resume_disc.empty()) {
    throw std::invalid_argument("adversarial: --resume-gen and --resume-disc go together");
  }
  if (!resuming && (args.data.empty() || args.gen_checkpoint.empty() || args.disc_checkpoint.empty())) {
    throw std::invalid_argument(
        "adversarial: --data, --gen-checkpoint and --disc-checkpoint are required");
  }

  Vocabulary vocab;
  GenTrainState gst;
  DiscTrainState dst;
  if (resuming) {
    gst = unpack_generator(load_checkpoint(args.resume_gen), &vocab);
    dst = unpack_discriminator(load_checkpoint(args.resume_disc), nullptr);
  } else {
    gst = unpack_generator(load_checkpoint(args.gen_checkpoint), &vocab);
    dst = unpack_discriminator(load_checkpoint(args.disc_checkpoint), nullptr);
    gst.adam = AdamState{};
    gst.adam.lr = cfg.train.gen_lr;
    gst.rng = Rng(Rng::mix(cfg.train.seed, kAdvGenStreamTag));
    gst.step = 0;
    gst.epoch = 0;
    dst.rng = Rng(Rng::mix(cfg.train.seed, kAdvDiscStreamTag));
    dst.step = 0;
  }
  const Dataset ds = load_dataset_checked(args.data, gst.params.cfg.t_max);

  ensure_dir(args.out_dir);
  TrainLog log;
  const nlohmann::json echo = run_config_json(cfg);
  const auto on_epoch = [&](const GenTrainState& g, const DiscTrainState& d, double) {
    save_checkpoint(pack_generator(g, vocab, echo), args.out_dir + "/adv_gen_last.ckpt");
    save_checkpoint(pack_discriminator(d, vocab, echo), args.out_dir + "/adv_disc_last.ckpt");
  };
  const TrainedGenerator result =
      adversarial_train(gst, dst, ds, vocab, cfg.train, log, nullptr, on_epoch);

  GenTrainState best_state;
  best_state.params = result.best;
  best_state.adam = gst.adam;
  best_state.rng = gst.rng;
  best_state.step = gst.step;
  best_state.epoch = result.best_epoch;
  save_checkpoint(pack_generator(best_state, vocab, echo), args.out_dir + "/adv_gen_best.ckpt");
  save_checkpoint(pack_discriminator(dst, vocab, echo), args.out_dir + "/adv_disc.ckpt");
  log.write_csv(args.out_dir + "/adv_train_log.csv");
  std::cout << "adversarial done: best epoch " << result.best_epoch << " (" << cfg.train.val_metric
            << "=" << result.best_metric << ")\n";
}

void cmd_sample(const RunConfig& cfg, const SampleArgs& args) {
  cfg.validate();
  if (args.checkpoint.empty() || args.data.empty() || args.out.empty()) {
    throw std::invalid_argument("sample: --checkpoint, --data and --out are required");
  }
  if (args.mode != "greedy" && args.mode != "multinomial") {
    throw std::invalid_argument("sample: mode must be greedy or multinomial, got '" + args.mode + "'");
  }
  if (args.per_image < 1) throw std::invalid_argument("sample: --per-image must be >= 1");
  Vocabulary vocab;
  const GenTrainState gen = unpack_generator(load_checkpoint(args.checkpoint), &vocab);
  const Dataset ds = load_jsonl(args.data);
  const Split split = split_from(args.split);

  std::set<int> image_indices;
  for (const auto& item : collect_items(ds, split, StyleFilter::Any)) {
    image_indices.insert(item.image_index);
  }
  if (image_indices.empty()) {
    throw std::runtime_error("sample: no images with captions in split '" + args.split + "'");
  }
  const SampleMode mode = args.mode == "greedy" ? SampleMode::Greedy : SampleMode::Multinomial;
  Rng rng(Rng::mix(cfg.train.seed, kSampleTag));
  std::ofstream out(args.out);
  if (!out) throw std::runtime_error("cannot write samples to '" + args.out + "'");
  long long written = 0;
  for (int idx : image_indices) {
    const auto& img = ds.images[static_cast<std::size_t>(idx)];
    const int copies = mode == SampleMode::Greedy ? 1 : args.per_image;
    for (int c = 0; c < copies; ++c) {
      SampledCaption sc =
          sample_caption(nullptr, img.features, gen.params, mode, gen.params.cfg.t_max, rng);
      nlohmann::json j;
      j["image_id"] = img.image_id;
      j["tokens"] = decode_caption(sc.ids, vocab);
      out << j.dump() << "\n";
      ++written;
    }
  }
  std::cout << "wrote " << written << " captions to " << args.out << "\n";
}

void cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args) {
  cfg.validate();
  if (args.candidates.empty() || args.references.empty() || args.report.empty()) {
    throw std::invalid_argument("evaluate: --candidates, --references and --report are required");
  }
  std::ifstream cand_in(args.candidates);
  if (!cand_in) throw std::runtime_error("cannot open candidates file '" + args.candidates + "'");
  std::vector<std::pair<std::string, std::vector<std::string>>> candidates;
  std::set<std::string> seen;
  std::string line;
  long long line_no = 0;
  while (std::getline(cand_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(args.candidates + ":" + std::to_string(line_no) +
                               ": malformed JSON: " + e.what());
    }
    const std::string id = j.at("image_id").get<std::string>();
    if (!seen.insert(id).second) {
      throw std::runtime_error("evaluate: duplicate candidate for image '" + id +
                               "' (one candidate per image required)");
    }
    candidates.emplace_back(id, j.at("tokens").get<std::vector<std::string>>());
  }
  const Dataset refs = load_jsonl(args.references);
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& img : refs.images) by_id[img.image_id] = &img;

  EvalCorpus corpus;
  for (auto& [id, tokens] : candidates) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::runtime_error("evaluate: candidate image '" + id + "' has no reference record");
    }
    EvalItem item;
    item.image_id = id;
    item.candidate = std::move(tokens);
    for (const auto& cap : it->second->captions) item.references.push_back(cap.tokens);
    corpus.push_back(std::move(item));
  }
  const StyleLexicon lexicon =
      args.lexicon.empty() ? StyleLexicon::builtin() : StyleLexicon::load(args.lexicon);
  const MetricReport report = evaluate_corpus(corpus, lexicon, run_config_json(cfg));
  std::ofstream out(args.report);
  if (!out) throw std::runtime_error("cannot write report '" + args.report + "'");
  out << report.to_json().dump(2) << "\n";
  std::cout << report_table(report);
}

}  // namespace atgan
