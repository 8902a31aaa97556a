#pragma once

#include <string>
#include <vector>

#include "s2s/data.hpp"
#include "s2s/model.hpp"

namespace s2s {

inline constexpr int kCheckpointFormatVersion = 1;

// Single JSON document; parameter arrays are base64 of little-endian 32-bit
// floats keyed by hierarchical path. Save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const Vocabulary& vocab, const BasketModel& model);

struct LoadedCheckpoint {
  ModelConfig config;
  Vocabulary vocab;
  std::unique_ptr<S2SRec2Model> model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace s2s
