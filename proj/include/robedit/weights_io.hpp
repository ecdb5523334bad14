#pragma once

#include <string>

#include "robedit/model.hpp"

namespace robedit {

// CRML container: magic "CRML", format version u32, u64 header byte
// length, UTF-8 JSON header (config + ordered tensor directory with
// name/rows/cols/byte-offset into the data section), then raw
// little-endian float32 payload, row-major, in directory order.
inline constexpr uint32_t kWeightsFormatVersion = 1;

void save_model(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model(const std::string& path);

// Shape and finiteness check over the full directory.
void validate_bundle(const ModelBundle& bundle);

}  // namespace robedit
