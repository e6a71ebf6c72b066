#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "atgan/pipeline.hpp"
#include "json.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

atgan::RunConfig resolve_config(const GlobalOpts& opts) {
  atgan::RunConfig cfg = atgan::load_run_config(opts.config_path);
  for (const auto& assignment : opts.overrides) atgan::apply_override(cfg, assignment);
  if (opts.seed_set) cfg.train.seed = opts.seed;
  cfg.validate();
  return cfg;
}

void add_global(CLI::App* app, GlobalOpts& opts) {
  app->add_option("--config", opts.config_path, "JSON config file");
  app->add_option("--set", opts.overrides, "config override, section.key=value (flag wins)");
  app->add_option("--seed", opts.seed, "run seed (overrides config)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stylized-caption GAN pipeline"};
  app.require_subcommand(1);

  GlobalOpts g_synth, g_pgen, g_pdisc, g_adv, g_sample, g_eval;
  atgan::SynthArgs synth_args;
  atgan::PretrainGenArgs pgen_args;
  atgan::PretrainDiscArgs pdisc_args;
  atgan::AdversarialArgs adv_args;
  atgan::SampleArgs sample_args;
  atgan::EvaluateArgs eval_args;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_global(synth, g_synth);
  synth->add_option("--out", synth_args.out, "output dataset (jsonl)")->required();
  synth->add_option("--scenes", synth_args.scenes, "scene count knob (scales all sections)");
  synth->add_option("--style", synth_args.style, "all|factual|positive|negative");
  synth->add_option("--lexicon-out", synth_args.lexicon_out, "also write the built-in lexicon here");

  CLI::App* pgen = app.add_subcommand("pretrain-gen", "MLE-pretrain the caption generator");
  add_global(pgen, g_pgen);
  pgen->add_option("--data", pgen_args.data, "dataset (jsonl)")->required();
  pgen->add_option("--out-dir", pgen_args.out_dir, "checkpoint/log directory")->required();
  pgen->add_option("--resume", pgen_args.resume, "continue from a saved generator checkpoint");

  CLI::App* pdisc = app.add_subcommand("pretrain-disc", "pretrain the caption critic");
  add_global(pdisc, g_pdisc);
  pdisc->add_option("--data", pdisc_args.data, "dataset (jsonl)")->required();
  pdisc->add_option("--gen-checkpoint", pdisc_args.gen_checkpoint, "pretrained generator")->required();
  pdisc->add_option("--out-dir", pdisc_args.out_dir, "checkpoint/log directory")->required();

  CLI::App* adv = app.add_subcommand("adversarial", "adversarial fine-tuning on styled data");
  add_global(adv, g_adv);
  adv->add_option("--data", adv_args.data, "dataset (jsonl)")->required();
  adv->add_option("--gen-checkpoint", adv_args.gen_checkpoint, "pretrained generator");
  adv->add_option("--disc-checkpoint", adv_args.disc_checkpoint, "pretrained critic");
  adv->add_option("--out-dir", adv_args.out_dir, "checkpoint/log directory")->required();
  adv->add_option("--resume-gen", adv_args.resume_gen, "mid-stage generator checkpoint");
  adv->add_option("--resume-disc", adv_args.resume_disc, "mid-stage critic checkpoint");

  CLI::App* sample = app.add_subcommand("sample", "decode captions from a checkpoint");
  add_global(sample, g_sample);
  sample->add_option("--checkpoint", sample_args.checkpoint, "generator checkpoint")->required();
  sample->add_option("--data", sample_args.data, "dataset (jsonl)")->required();
  sample->add_option("--mode", sample_args.mode, "greedy|multinomial");
  sample->add_option("--out", sample_args.out, "output captions (jsonl)")->required();
  sample->add_option("--split", sample_args.split, "train|val|test (default test)");
  sample->add_option("--per-image", sample_args.per_image, "samples per image (multinomial mode)");

  CLI::App* eval = app.add_subcommand("evaluate", "score candidate captions against references");
  add_global(eval, g_eval);
  eval->add_option("--candidates", eval_args.candidates, "candidate captions (jsonl)")->required();
  eval->add_option("--references", eval_args.references, "reference dataset (jsonl)")->required();
  eval->add_option("--lexicon", eval_args.lexicon, "style lexicon (json); built-in when omitted");
  eval->add_option("--report", eval_args.report, "output report (json)")->required();

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (synth->parsed()) {
      atgan::cmd_synth(resolve_config(g_synth), synth_args);
    } else if (pgen->parsed()) {
      atgan::cmd_pretrain_gen(resolve_config(g_pgen), pgen_args);
    } else if (pdisc->parsed()) {
      atgan::cmd_pretrain_disc(resolve_config(g_pdisc), pdisc_args);
    } else if (adv->parsed()) {
      atgan::cmd_adversarial(resolve_config(g_adv), adv_args);
    } else if (sample->parsed()) {
      atgan::cmd_sample(resolve_config(g_sample), sample_args);
    } else if (eval->parsed()) {
      atgan::cmd_evaluate(resolve_config(g_eval), eval_args);
    }
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    err["command"] = command;
    std::cerr << err.dump() << std::endl;
    return 1;
  }
  return 0;
}
