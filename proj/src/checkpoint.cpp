#include "s2s/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace s2s {

using nlohmann::ordered_json;

namespace {

const char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    unsigned int v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) v |= bytes[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64Chars[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64Chars[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  int lookup[256];
  std::fill(std::begin(lookup), std::end(lookup), -1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64Chars[i])] = i;

  std::vector<unsigned char> out;
  unsigned int v = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int d = lookup[static_cast<unsigned char>(c)];
    if (d < 0) throw std::invalid_argument("base64_decode: invalid character");
    v = (v << 6) | d;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((v >> bits) & 0xff));
    }
  }
  return out;
}

namespace {

std::string encode_f32(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(&bytes[i * 4], &f, 4);  // little-endian host assumed
  }
  return base64_encode(bytes);
}

std::vector<double> decode_f32(const std::string& text, size_t expected) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != expected * 4) {
    throw std::runtime_error("checkpoint: payload holds " +
                             std::to_string(bytes.size() / 4) + " floats, expected " +
                             std::to_string(expected));
  }
  std::vector<double> out(expected);
  for (size_t i = 0; i < expected; ++i) {
    float f;
    std::memcpy(&f, &bytes[i * 4], 4);
    out[i] = static_cast<double>(f);
  }
  return out;
}

ordered_json config_to_json(const ModelConfig& cfg) {
  ordered_json j;
  j["vocab_size"] = cfg.vocab_size;
  j["d_model"] = cfg.d_model;
  j["num_heads"] = cfg.num_heads;
  j["m_ind"] = cfg.m_ind;
  j["num_encoder_layers"] = cfg.num_encoder_layers;
  j["embedding_dim_in"] = cfg.embedding_dim_in;
  j["alpha"] = cfg.alpha;
  j["max_set_size"] = cfg.max_set_size;
  return j;
}

ModelConfig config_from_json(const ordered_json& j) {
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.m_ind = j.at("m_ind").get<int>();
  cfg.num_encoder_layers = j.at("num_encoder_layers").get<int>();
  cfg.embedding_dim_in = j.at("embedding_dim_in").get<int>();
  cfg.alpha = j.at("alpha").get<double>();
  cfg.max_set_size = j.at("max_set_size").get<int>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const Vocabulary& vocab, const BasketModel& model) {
  ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = "s2srec2";
  j["config"] = config_to_json(cfg);
  j["vocabulary"] = vocab.names();
  ordered_json params;
  for (const auto& [name, p] : model.named_parameters()) {
    ordered_json entry;
    entry["shape"] = {p.rows(), p.cols()};
    entry["data"] = encode_f32(p.data());
    params[name] = entry;
  }
  j["params"] = params;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  ordered_json j = ordered_json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw std::runtime_error("load_checkpoint: '" + path + "' is not valid JSON");

  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw std::runtime_error("load_checkpoint: format version " +
                             std::to_string(version) + " not supported (expected " +
                             std::to_string(kCheckpointFormatVersion) + ")");
  }

  LoadedCheckpoint result;
  result.config = config_from_json(j.at("config"));
  result.vocab = Vocabulary::from_names(j.at("vocabulary").get<std::vector<std::string>>());

  std::mt19937_64 rng(0);
  result.model = std::make_unique<S2SRec2Model>(result.config, rng);

  const auto& params = j.at("params");
  auto named = result.model->named_parameters();  // tensors share model storage
  for (auto& [name, tensor] : named) {
    if (!params.contains(name))
      throw std::runtime_error("load_checkpoint: missing parameter '" + name + "'");
    const auto& entry = params.at(name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != tensor.rows() || shape[1] != tensor.cols()) {
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
    }
    tensor.data() = decode_f32(entry.at("data").get<std::string>(), tensor.size());
  }
  return result;
}

}  // namespace s2s
