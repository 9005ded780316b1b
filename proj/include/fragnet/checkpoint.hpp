#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fragnet/trainer.hpp"

namespace fragnet {

// On-disk layout, all integers little-endian:
//   "FRAG" | u32 version | u32 n + n bytes UTF-8 JSON config blob |
//   per tensor: u32 n + name | u32 rank | rank x u64 extent | float32 payload
// The blob holds the model config, epoch, RNG state and tensor count.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(TrainingState& state);
TrainingState decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& path);

struct FinetuneStart {
  TrainingState state;
  bool head_reinitialized = false;
  std::string warning;
};

// Transfer entry point: keeps the loaded feature extractor and, when `kind`
// differs from the checkpoint's fusion kind, replaces the head with a fresh one.
FinetuneStart prepare_finetune(TrainingState loaded, std::optional<FusionKind> kind,
                               std::uint64_t seed);

}  // namespace fragnet
