#pragma once

#include <filesystem>

#include "maldet/model.hpp"

namespace maldet {

// Self-describing binary container: magic + version, config header, then
// named tensors as row-major little-endian 32-bit floats. Because
// parameters are float32-valued in memory, save -> load -> forward
// reproduces scores bitwise.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace maldet
