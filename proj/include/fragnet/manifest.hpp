#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fragnet/image.hpp"

namespace fragnet {

enum class Split { Train, Validation };

const char* split_name(Split split);
Split parse_split(const std::string& name);

// One side of a dataset: relative image paths under `root`, sorted.
struct DatasetManifest {
  std::filesystem::path root;
  Split split = Split::Train;
  std::vector<std::string> entries;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  DatasetManifest train;
  DatasetManifest validation;
};

inline constexpr const char* kTrainManifestName = "train.manifest";
inline constexpr const char* kValidationManifestName = "validation.manifest";

// All *.ppm files below root, as sorted '/'-separated relative paths.
std::vector<std::string> scan_images(const std::filesystem::path& root);

// Seeded shuffle of the sorted file list, cut at train_parts:validation_parts.
DatasetSplit split_files(const std::filesystem::path& root, std::vector<std::string> files,
                         std::uint64_t seed, std::size_t train_parts = 10,
                         std::size_t validation_parts = 4);

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Uses the manifests stored in `dir` when both exist, otherwise scans and
// splits the folder. Throws ContractError if the splits overlap.
DatasetSplit open_dataset(const std::filesystem::path& dir, std::uint64_t seed);

// Decodes every entry and brings it to a frame_side x frame_side frame.
std::vector<ImageRGB> load_frames(const DatasetManifest& manifest, std::size_t frame_side);

}  // namespace fragnet
