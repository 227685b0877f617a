#pragma once

#include <filesystem>

#include "scd/siamese.hpp"

namespace scd {

// Flat binary checkpoint: magic "SCDCKPT1", little-endian uint32 entry
// count, then per entry a uint32 name length, the name bytes, four
// uint32 dims and the float64 payload. Parameters and batch-norm running
// statistics are stored under their layer-qualified names.
void save_checkpoint(const std::filesystem::path& path, SiameseModel& model);

// Loads by name into an existing model; every entry must match an
// existing parameter/state tensor of identical shape.
void load_checkpoint(const std::filesystem::path& path, SiameseModel& model);

}  // namespace scd
