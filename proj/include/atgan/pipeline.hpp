#pragma once

#include <cstdint>
#include <string>

#include "atgan/config.hpp"

namespace atgan {

/// Subcommand implementations behind the CLI. Each validates its inputs
/// before touching the filesystem and throws on error; the binary turns
/// exceptions into a one-line machine-parseable error and a nonzero exit.

struct SynthArgs {
  std::string out;
  int scenes = 0;  // 0: counts straight from config; >0: scale the sections
  std::string style = "all";
  std::string lexicon_out;  // optional: also write the built-in lexicon
};
void cmd_synth(const RunConfig& cfg, const SynthArgs& args);

struct PretrainGenArgs {
  std::string data;
  std::string out_dir;
  std::string resume;  // optional checkpoint to continue from
};
void cmd_pretrain_gen(const RunConfig& cfg, const PretrainGenArgs& args);

struct PretrainDiscArgs {
  std::string data;
  std::string gen_checkpoint;
  std::string out_dir;
};
void cmd_pretrain_disc(const RunConfig& cfg, const PretrainDiscArgs& args);

struct AdversarialArgs {
  std::string data;
  std::string gen_checkpoint;
  std::string disc_checkpoint;
  std::string out_dir;
  std::string resume_gen;   // optional mid-stage resume pair
  std::string resume_disc;
};
void cmd_adversarial(const RunConfig& cfg, const AdversarialArgs& args);

struct SampleArgs {
  std::string checkpoint;
  std::string data;
  std::string mode = "greedy";  // greedy | multinomial
  std::string out;
  std::string split = "test";
  int per_image = 1;
};
void cmd_sample(const RunConfig& cfg, const SampleArgs& args);

struct EvaluateArgs {
  std::string candidates;
  std::string references;
  std::string lexicon;  // empty: built-in
  std::string report;
};
void cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args);

}  // namespace atgan
