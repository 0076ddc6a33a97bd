#pragma once

#include <string>

#include "cpmf/model.hpp"

namespace cpmf {

// Checkpoint file: the 5 bytes "CPM1\n", a manifest with one
// "name shape element_count payload_offset" line per tensor, a blank line,
// then every tensor's elements as little-endian IEEE-754 doubles. Offsets are
// bytes from the start of the payload.
void save_checkpoint(const std::string& path, const Parameters& params);

Parameters load_checkpoint(const std::string& path, const ModelConfig& config);

}  // namespace cpmf
