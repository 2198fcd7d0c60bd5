#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpnseg/model.hpp"
#include "fpnseg/run_config.hpp"

namespace fpnseg {

// Binary layout (little-endian):
//   "FPNSEG01" | u16 version | u32 n, n x (str key, str value)
//   | u32 m, m x (str name, u8 rank, rank x u32 dim, f32 payload)
// where str is u32 byte length + UTF-8 bytes. Tensors are named
// "param/<p>", "adam_m/<p>", "adam_v/<p>" and "buffer/<b>"; the optimizer
// step count is the key "optimizer.step".
inline constexpr char kCheckpointMagic[8] = {'F', 'P', 'N', 'S', 'E', 'G', '0', '1'};
inline constexpr uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelState model;
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                     const RunConfig& config);
void save_checkpoint(const std::filesystem::path& path, const ModelState& model);

// Rebuilds the model described by the stored configuration and fills every
// tensor from the file. Missing, extra or mis-shaped tensors are a
// CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fpnseg
