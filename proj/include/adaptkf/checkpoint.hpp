#pragma once

#include <string>
#include <utility>

#include <json.hpp>

#include "adaptkf/nn.hpp"

namespace adaptkf {

// Textual key->array checkpoint. Values are serialized as IEEE-754 bit
// patterns in hex, so a save/load round trip is bit-exact. The header line
// carries the format version; the meta line is one-line JSON recording
// config, seed and dims.
void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const ParamSet& tensors);

std::pair<nlohmann::json, ParamSet> load_checkpoint(const std::string& path);

}  // namespace adaptkf
