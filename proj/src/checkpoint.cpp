#include "atgan/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace atgan {

using nlohmann::json;

namespace {

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint truncated in the header length field");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ostream& out, const std::vector<float>& values) {
  std::vector<unsigned char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    buf[4 * i] = static_cast<unsigned char>(bits & 0xFF);
    buf[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xFF);
    buf[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xFF);
    buf[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count) {
  std::vector<unsigned char> buf(count * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw std::runtime_error("checkpoint payload truncated");
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) |
                               (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    std::memcpy(&values[i], &bits, 4);
  }
  return values;
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const CheckpointData& data, const std::string& path) {
  json header;
  header["version"] = data.version;
  header["config"] = data.config;
  header["vocabulary"] = data.vocab_tokens;
  header["extra"] = data.extra;
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : data.tensors) {
    manifest.push_back({{"name", name},
                        {"shape", tensor.shape()},
                        {"offset", offset},
                        {"count", tensor.size()}});
    offset += static_cast<std::uint64_t>(tensor.size()) * 4;
  }
  header["manifest"] = std::move(manifest);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(CheckpointData::kMagic, 6);
  write_u64_le(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, tensor] : data.tensors) write_f32_le(out, tensor.values());
  if (!out) throw std::runtime_error("I/O failure writing checkpoint '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, CheckpointData::kMagic, 6) != 0) {
    throw std::runtime_error("bad checkpoint magic '" + std::string(magic, in ? 6 : 0) +
                             "' (expected '" + CheckpointData::kMagic + "')");
  }
  const std::uint64_t header_len = read_u64_le(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
    throw std::runtime_error("checkpoint header truncated");
  }
  json header = json::parse(header_text);

  CheckpointData data;
  data.version = header.at("version").get<int>();
  if (data.version != CheckpointData::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(data.version) +
                             " (expected " + std::to_string(CheckpointData::kVersion) + ")");
  }
  data.config = header.value("config", json::object());
  data.vocab_tokens = header.at("vocabulary").get<std::vector<std::string>>();
  data.extra = header.value("extra", json::object());

  std::uint64_t expected_offset = 0;
  for (const auto& entry : header.at("manifest")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    if (offset != expected_offset) {
      throw std::runtime_error("manifest offsets do not partition the payload at tensor '" + name + "'");
    }
    if (shape_numel(shape) != count) {
      throw std::runtime_error("manifest count " + std::to_string(count) + " does not match shape " +
                               shape_str(shape) + " for tensor '" + name + "'");
    }
    expected_offset += static_cast<std::uint64_t>(count) * 4;
    data.tensors.emplace_back(name, Tensor::from_values(shape, read_f32_le(in, count)));
  }
  // Nothing may trail the payload.
  char probe;
  if (in.read(&probe, 1)) {
    throw std::runtime_error("checkpoint has trailing bytes after the declared payload");
  }
  return data;
}

namespace {

void pack_optimizer_moments(CheckpointData& out, const std::string& prefix,
                            const std::map<std::string, std::vector<float>>& store,
                            const ParamList& params) {
  for (const auto& p : params) {
    auto it = store.find(p.name);
    if (it == store.end()) continue;
    out.tensors.emplace_back(prefix + p.name,
                             Tensor::from_values(p.tensor.shape(), it->second));
  }
}

class TensorTaker {
 public:
  explicit TensorTaker(const CheckpointData& data) : data_(data) {}

  Tensor take(const std::string& name, const Shape& expected, bool requires_grad) const {
    const Tensor* t = data_.find(name);
    if (t == nullptr) throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
    if (t->shape() != expected) {
      throw std::runtime_error("tensor '" + name + "' has shape " + shape_str(t->shape()) +
                               ", expected " + shape_str(expected));
    }
    Tensor copy = t->clone();
    copy.set_requires_grad(requires_grad);
    return copy;
  }

  bool has(const std::string& name) const { return data_.find(name) != nullptr; }

 private:
  const CheckpointData& data_;
};

void unpack_optimizer_moments(const CheckpointData& data, const std::string& prefix,
                              std::map<std::string, std::vector<float>>& store,
                              const ParamList& params) {
  store.clear();
  TensorTaker taker(data);
  for (const auto& p : params) {
    const std::string key = prefix + p.name;
    if (taker.has(key)) store[p.name] = taker.take(key, p.tensor.shape(), false).values();
  }
}

json generator_config_json(const GeneratorConfig& c) {
  return {{"vocab", c.vocab},   {"embed_dim", c.embed_dim}, {"region_dim", c.region_dim},
          {"regions", c.regions}, {"hidden_dim", c.hidden_dim}, {"attn_dim", c.attn_dim},
          {"t_max", c.t_max}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.vocab = j.at("vocab").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.region_dim = j.at("region_dim").get<int>();
  c.regions = j.at("regions").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.attn_dim = j.at("attn_dim").get<int>();
  c.t_max = j.at("t_max").get<int>();
  return c;
}

json discriminator_config_json(const DiscriminatorConfig& c) {
  return {{"vocab", c.vocab},     {"embed_dim", c.embed_dim},   {"t_max", c.t_max},
          {"windows", c.windows}, {"filters", c.filters},       {"bn_momentum", c.bn_momentum},
          {"bn_eps", c.bn_eps},   {"init_bound", c.init_bound}};
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  c.vocab = j.at("vocab").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.t_max = j.at("t_max").get<int>();
  c.windows = j.at("windows").get<std::vector<int>>();
  c.filters = j.at("filters").get<int>();
  c.bn_momentum = j.at("bn_momentum").get<float>();
  c.bn_eps = j.at("bn_eps").get<float>();
  c.init_bound = j.at("init_bound").get<float>();
  return c;
}

json adam_json(const AdamState& s) {
  return {{"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}, {"step", s.step}};
}

json rmsprop_json(const RmspropState& s) {
  return {{"lr", s.lr}, {"rho", s.rho}, {"eps", s.eps}};
}

}  // namespace

CheckpointData pack_generator(const GenTrainState& state, const Vocabulary& vocab,
                              const nlohmann::json& config_echo) {
  CheckpointData data;
  data.config = config_echo;
  data.vocab_tokens = vocab.id_to_token;
  data.extra["kind"] = "generator";
  data.extra["generator_config"] = generator_config_json(state.params.cfg);
  data.extra["adam"] = adam_json(state.adam);
  data.extra["rng"] = state.rng.serialize();
  data.extra["step"] = state.step;
  data.extra["epoch"] = state.epoch;
  const ParamList params = state.params.named();
  for (const auto& p : params) data.tensors.emplace_back(p.name, p.tensor.clone());
  pack_optimizer_moments(data, "opt.adam.m:", state.adam.m, params);
  pack_optimizer_moments(data, "opt.adam.v:", state.adam.v, params);
  return data;
}

GenTrainState unpack_generator(const CheckpointData& data, Vocabulary* vocab_out) {
  if (data.extra.value("kind", "") != "generator") {
    throw std::runtime_error("checkpoint is not a generator checkpoint (kind='" +
                             data.extra.value("kind", std::string("?")) + "')");
  }
  Vocabulary vocab = vocab_from_tokens(data.vocab_tokens);
  const GeneratorConfig cfg = generator_config_from_json(data.extra.at("generator_config"));
  if (cfg.vocab != vocab.size()) {
    throw std::runtime_error("checkpoint vocabulary size " + std::to_string(vocab.size()) +
                             " does not match the stored config's " + std::to_string(cfg.vocab));
  }
  TensorTaker taker(data);
  GenTrainState st;
  GeneratorParams& p = st.params;
  p.cfg = cfg;
  p.embed = taker.take("gen.embed", {cfg.vocab, cfg.embed_dim}, true);
  const char* gates = "ifgo";
  for (int g = 0; g < 4; ++g) {
    const std::string suffix(1, gates[g]);
    p.h_gate[g] = taker.take("gen.lstm.h_" + suffix, {cfg.hidden_dim, cfg.hidden_dim}, true);
    p.w_gate[g] = taker.take("gen.lstm.w_" + suffix, {cfg.embed_dim, cfg.hidden_dim}, true);
    p.a_gate[g] = taker.take("gen.lstm.a_" + suffix, {cfg.region_dim, cfg.hidden_dim}, true);
    p.b_gate[g] = taker.take("gen.lstm.b_" + suffix, {1, cfg.hidden_dim}, true);
  }
  p.attn_feat = taker.take("gen.attn.feat", {cfg.region_dim, cfg.attn_dim}, true);
  p.attn_hidden = taker.take("gen.attn.hidden", {cfg.hidden_dim, cfg.attn_dim}, true);
  p.attn_vec = taker.take("gen.attn.vec", {cfg.attn_dim, 1}, true);
  p.out_ctx = taker.take("gen.out.ctx", {cfg.region_dim, cfg.vocab}, true);
  p.out_hidden = taker.take("gen.out.hidden", {cfg.hidden_dim, cfg.vocab}, true);
  p.out_bias = taker.take("gen.out.bias", {1, cfg.vocab}, true);
  p.init_h = taker.take("gen.init.h", {cfg.region_dim, cfg.hidden_dim}, true);
  p.init_c = taker.take("gen.init.c", {cfg.region_dim, cfg.hidden_dim}, true);

  const json& adam = data.extra.at("adam");
  st.adam.lr = adam.at("lr").get<float>();
  st.adam.beta1 = adam.at("beta1").get<float>();
  st.adam.beta2 = adam.at("beta2").get<float>();
  st.adam.eps = adam.at("eps").get<float>();
  st.adam.step = adam.at("step").get<long long>();
  unpack_optimizer_moments(data, "opt.adam.m:", st.adam.m, p.named());
  unpack_optimizer_moments(data, "opt.adam.v:", st.adam.v, p.named());
  st.rng.deserialize(data.extra.at("rng").get<std::string>());
  st.step = data.extra.at("step").get<long long>();
  st.epoch = data.extra.at("epoch").get<int>();
  if (vocab_out != nullptr) *vocab_out = std::move(vocab);
  return st;
}

CheckpointData pack_discriminator(const DiscTrainState& state, const Vocabulary& vocab,
                                  const nlohmann::json& config_echo) {
  CheckpointData data;
  data.config = config_echo;
  data.vocab_tokens = vocab.id_to_token;
  data.extra["kind"] = "discriminator";
  data.extra["discriminator_config"] = discriminator_config_json(state.params.cfg);
  data.extra["rmsprop"] = rmsprop_json(state.rms);
  data.extra["rng"] = state.rng.serialize();
  data.extra["step"] = state.step;
  const ParamList params = state.params.persisted();
  for (const auto& p : params) data.tensors.emplace_back(p.name, p.tensor.clone());
  pack_optimizer_moments(data, "opt.rmsprop.sq:", state.rms.sq, state.params.named());
  return data;
}

DiscTrainState unpack_discriminator(const CheckpointData& data, Vocabulary* vocab_out) {
  if (data.extra.value("kind", "") != "discriminator") {
    throw std::runtime_error("checkpoint is not a discriminator checkpoint (kind='" +
                             data.extra.value("kind", std::string("?")) + "')");
  }
  Vocabulary vocab = vocab_from_tokens(data.vocab_tokens);
  const DiscriminatorConfig cfg = discriminator_config_from_json(data.extra.at("discriminator_config"));
  if (cfg.vocab != vocab.size()) {
    throw std::runtime_error("checkpoint vocabulary size " + std::to_string(vocab.size()) +
                             " does not match the stored config's " + std::to_string(cfg.vocab));
  }
  TensorTaker taker(data);
  DiscTrainState st;
  DiscriminatorParams& p = st.params;
  p.cfg = cfg;
  p.embed = taker.take("disc.embed", {cfg.vocab, cfg.embed_dim}, true);
  for (int w : cfg.windows) {
    const std::string prefix = "disc.win" + std::to_string(w);
    DiscriminatorParams::WindowBlock block;
    for (int f = 0; f < cfg.filters; ++f) {
      block.kernels.push_back(taker.take(prefix + ".kernel" + std::to_string(f), {w, cfg.embed_dim}, true));
      block.biases.push_back(taker.take(prefix + ".bias" + std::to_string(f), {1}, true));
    }
    block.gamma = taker.take(prefix + ".gamma", {cfg.filters}, true);
    block.beta = taker.take(prefix + ".beta", {cfg.filters}, true);
    block.running_mean = taker.take(prefix + ".running_mean", {cfg.filters}, false);
    block.running_var = taker.take(prefix + ".running_var", {cfg.filters}, false);
    p.blocks.push_back(std::move(block));
  }
  const int pooled = static_cast<int>(cfg.windows.size()) * cfg.filters;
  p.fc_w = taker.take("disc.fc.w", {pooled, 1}, true);
  p.fc_b = taker.take("disc.fc.b", {1, 1}, true);

  const json& rms = data.extra.at("rmsprop");
  st.rms.lr = rms.at("lr").get<float>();
  st.rms.rho = rms.at("rho").get<float>();
  st.rms.eps = rms.at("eps").get<float>();
  unpack_optimizer_moments(data, "opt.rmsprop.sq:", st.rms.sq, p.named());
  st.rng.deserialize(data.extra.at("rng").get<std::string>());
  st.step = data.extra.at("step").get<long long>();
  if (vocab_out != nullptr) *vocab_out = std::move(vocab);
  return st;
}

}  // namespace atgan
