#pragma once

// Single-file checkpoint: one JSON manifest line, then the named tensors as
// little-endian float32 in manifest order. A 64-bit FNV-1a digest of the
// payload guards against truncation and corruption.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ap/common.hpp"
#include "ap/mlm.hpp"
#include "ap/promptgen.hpp"
#include "ap/text.hpp"

namespace ap {

constexpr int kCheckpointVersion = 1;

inline uint64_t fnv1a64(const unsigned char* data, size_t n) {
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace detail {

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::ordered_json mlm_config_json(const MlmConfig& c) {
  return {{"d_model", c.d_model},           {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},                 {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
          {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

inline MlmConfig mlm_config_from_json(const nlohmann::json& j) {
  MlmConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

inline nlohmann::ordered_json pg_config_json(const PromptGenConfig& c) {
  return {{"d_model", c.d_model}, {"d_hidden", c.d_hidden}, {"s", c.s}, {"seed", c.seed}};
}

inline PromptGenConfig pg_config_from_json(const nlohmann::json& j) {
  PromptGenConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.d_hidden = j.at("d_hidden").get<int>();
  c.s = j.at("s").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

// float32 little-endian, regardless of host Real
template <class Real>
void append_tensor(std::vector<unsigned char>& payload, const Tensor<Real>& t) {
  for (Real v : t.data) {
    const float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    payload.push_back(static_cast<unsigned char>(bits & 0xff));
    payload.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    payload.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    payload.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
  }
}

template <class Real>
void read_tensor(const std::vector<unsigned char>& payload, size_t& offset, Tensor<Real>& t) {
  for (auto& v : t.data) {
    uint32_t bits = static_cast<uint32_t>(payload[offset]) | (static_cast<uint32_t>(payload[offset + 1]) << 8) |
                    (static_cast<uint32_t>(payload[offset + 2]) << 16) |
                    (static_cast<uint32_t>(payload[offset + 3]) << 24);
    offset += 4;
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<Real>(f);
  }
}

}  // namespace detail

// Writes manifest + payload atomically (temp file, then rename). Returns the
// payload digest.
template <class Real>
std::string save_checkpoint(const std::string& path, MlmModel<Real>& model, PromptGenLayer<Real>* prompt_layer,
                            const Vocab& vocab) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "ap-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["mlm"] = detail::mlm_config_json(model.cfg);
  manifest["prompt_layer"] = prompt_layer ? detail::pg_config_json(prompt_layer->cfg) : nlohmann::ordered_json();
  manifest["vocab"] = vocab.tokens();

  std::vector<unsigned char> payload;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  auto emit = [&](Parameter<Real>* p) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
    detail::append_tensor(payload, p->value);
  };
  for (auto* p : model.params()) emit(p);
  if (prompt_layer)
    for (auto* p : prompt_layer->params()) emit(p);
  manifest["tensors"] = tensors;
  manifest["payload_bytes"] = payload.size();
  const std::string digest = detail::hex64(fnv1a64(payload.data(), payload.size()));
  manifest["digest"] = digest;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + tmp);
    out << manifest.dump() << "\n";
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(errc::io, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(errc::io, "cannot rename " + tmp + " to " + path);
  return digest;
}

template <class Real>
struct LoadedCheckpoint {
  MlmModel<Real> model;
  std::optional<PromptGenLayer<Real>> prompt_layer;
  Vocab vocab;
  std::string digest;

  PromptGenLayer<Real>* layer_ptr() { return prompt_layer ? &*prompt_layer : nullptr; }
};

template <class Real>
LoadedCheckpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io, "cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(errc::parse, "checkpoint has no manifest line");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::parse, std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "ap-checkpoint")
    throw Error(errc::parse, "not an ap-checkpoint file");
  if (manifest.at("version").get<int>() != kCheckpointVersion)
    throw Error(errc::version, "unsupported checkpoint version " + manifest.at("version").dump());

  std::vector<unsigned char> payload(manifest.at("payload_bytes").get<size_t>());
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<size_t>(in.gcount()) != payload.size())
    throw Error(errc::integrity, "checkpoint payload truncated");
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1)
    throw Error(errc::integrity, "checkpoint payload has trailing bytes");
  const std::string digest = detail::hex64(fnv1a64(payload.data(), payload.size()));
  if (digest != manifest.at("digest").get<std::string>())
    throw Error(errc::integrity, "checkpoint digest mismatch");

  LoadedCheckpoint<Real> out;
  out.digest = digest;
  out.vocab = Vocab::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
  out.model = init_model<Real>(detail::mlm_config_from_json(manifest.at("mlm")));
  if (!manifest.at("prompt_layer").is_null())
    out.prompt_layer = init_prompt_layer<Real>(detail::pg_config_from_json(manifest.at("prompt_layer")));

  std::vector<Parameter<Real>*> params = out.model.params();
  if (out.prompt_layer)
    for (auto* p : out.prompt_layer->params()) params.push_back(p);

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size())
    throw Error(errc::integrity, "checkpoint names " + std::to_string(tensors.size()) + " tensors, model has " +
                                     std::to_string(params.size()));
  size_t offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != params[i]->name)
      throw Error(errc::integrity, "tensor order mismatch: " + entry.at("name").get<std::string>() + " vs " +
                                       params[i]->name);
    const auto shape = entry.at("shape").get<Shape>();
    if (shape != params[i]->value.shape)
      throw Error(errc::integrity, "tensor shape mismatch for " + params[i]->name);
    if (offset + 4 * params[i]->value.data.size() > payload.size())
      throw Error(errc::integrity, "payload shorter than the manifest promises");
    detail::read_tensor(payload, offset, params[i]->value);
  }
  if (offset != payload.size()) throw Error(errc::integrity, "payload longer than the manifest promises");
  return out;
}

}  // namespace ap
