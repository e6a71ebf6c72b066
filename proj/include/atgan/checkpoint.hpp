#pragma once

#include <string>
#include <utility>
#include <vector>

#include "atgan/data.hpp"
#include "atgan/discriminator.hpp"
#include "atgan/tensor.hpp"
#include "atgan/trainer.hpp"
#include "json.hpp"

namespace atgan {

/// Checkpoint file layout:
///   bytes 0..5   magic "ATGAN1"
///   bytes 6..13  little-endian u64 header length
///   header       JSON: version, config echo, vocabulary, extra state,
///                tensor manifest (name, shape, byte offset, element count)
///   payload      raw little-endian float32 values in manifest order
/// Offsets partition the payload exactly; loads validate magic, version,
/// manifest consistency and payload size.
struct CheckpointData {
  static constexpr int kVersion = 1;
  static constexpr const char* kMagic = "ATGAN1";

  int version = kVersion;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> vocab_tokens;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const CheckpointData& data, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

// Stage-state packing. Generator checkpoints carry the parameters, Adam
// state, rng stream, step/epoch counters and the vocabulary; discriminator
// checkpoints carry the critic parameters (running stats included) and
// RMSprop state.
CheckpointData pack_generator(const GenTrainState& state, const Vocabulary& vocab,
                              const nlohmann::json& config_echo);
GenTrainState unpack_generator(const CheckpointData& data, Vocabulary* vocab_out);

CheckpointData pack_discriminator(const DiscTrainState& state, const Vocabulary& vocab,
                                  const nlohmann::json& config_echo);
DiscTrainState unpack_discriminator(const CheckpointData& data, Vocabulary* vocab_out);

}  // namespace atgan
