#pragma once

#include "ctrlp/data.hpp"
#include "ctrlp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ctrlp {

// Binary layout, little-endian throughout:
//   "CTRLP1" | u32 version | u32 len + UTF-8 key=value config lines |
//   u32 tensor count | per tensor: u32 name len, name, u32 rank, u32 extents, f32 values |
//   u8 normalizer mode | f32 mean[input_len] | f32 std[input_len] | u64 training step
inline constexpr char kCheckpointMagic[] = "CTRLP1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
    ModelNet<float> model;
    Normalizer normalizer;
    std::uint64_t step = 0;
    // Every key=value line stored in the file, model keys included.
    ConfigEntries config;
};

// `run_config` entries that duplicate model keys are skipped; the model's
// own config is authoritative.
void save_checkpoint(const std::filesystem::path& path, ModelNet<float>& model, const Normalizer& normalizer,
                     std::uint64_t step, const ConfigEntries& run_config = {});

Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ctrlp
