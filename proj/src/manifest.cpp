#include "fragnet/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace fragnet {

const char* split_name(Split split) {
  return split == Split::Train ? "train" : "validation";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  throw FormatError("unknown split '" + name + "'");
}

std::vector<std::string> scan_images(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<std::string> files;
  for (const fs::directory_entry& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      files.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

DatasetSplit split_files(const std::filesystem::path& root, std::vector<std::string> files,
                         std::uint64_t seed, std::size_t train_parts,
                         std::size_t validation_parts) {
  const std::size_t total_parts = train_parts + validation_parts;
  if (total_parts == 0) throw ContractError("split ratio must have a positive total");
  std::sort(files.begin(), files.end());
  if (std::adjacent_find(files.begin(), files.end()) != files.end()) {
    throw ContractError("duplicate entries in file list");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(files.begin(), files.end(), rng);
  const std::size_t n_train = (files.size() * train_parts + total_parts / 2) / total_parts;

  DatasetSplit split;
  split.train = {root, Split::Train, {files.begin(), files.begin() + n_train}, seed};
  split.validation = {root, Split::Validation, {files.begin() + n_train, files.end()}, seed};
  std::sort(split.train.entries.begin(), split.train.entries.end());
  std::sort(split.validation.entries.begin(), split.validation.entries.end());
  return split;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  out << "root=" << manifest.root.generic_string() << '\n';
  out << "seed=" << manifest.seed << '\n';
  out << "split=" << split_name(manifest.split) << '\n';
  std::vector<std::string> sorted = manifest.entries;
  std::sort(sorted.begin(), sorted.end());
  for (const std::string& entry : sorted) out << entry << '\n';
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest manifest;
  std::istringstream in(text);
  std::string line;
  bool have_root = false, have_seed = false, have_split = false;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? std::string() : line.substr(0, eq);
    if (manifest.entries.empty() && (key == "root" || key == "seed" || key == "split")) {
      const std::string value = line.substr(eq + 1);
      if (key == "root") {
        manifest.root = value;
        have_root = true;
      } else if (key == "seed") {
        try {
          std::size_t used = 0;
          manifest.seed = std::stoull(value, &used);
          if (used != value.size()) throw FormatError(value);
        } catch (const std::exception&) {
          throw FormatError("manifest seed is not an integer: " + value);
        }
        have_seed = true;
      } else {
        manifest.split = parse_split(value);
        have_split = true;
      }
      continue;
    }
    if (!seen.insert(line).second) throw FormatError("duplicate manifest entry '" + line + "'");
    manifest.entries.push_back(line);
  }
  if (!have_root || !have_seed || !have_split) {
    throw FormatError("manifest header needs root, seed and split");
  }
  std::sort(manifest.entries.begin(), manifest.entries.end());
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_manifest(manifest);
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str());
}

DatasetSplit open_dataset(const std::filesystem::path& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  DatasetSplit split;
  const fs::path train_path = dir / kTrainManifestName;
  const fs::path val_path = dir / kValidationManifestName;
  if (fs::exists(train_path) && fs::exists(val_path)) {
    split.train = read_manifest(train_path);
    split.validation = read_manifest(val_path);
    // Entries are relative to the manifest's directory, wherever it was written.
    split.train.root = dir;
    split.validation.root = dir;
  } else {
    split = split_files(dir, scan_images(dir), seed);
  }
  std::vector<std::string> overlap;
  std::set_intersection(split.train.entries.begin(), split.train.entries.end(),
                        split.validation.entries.begin(), split.validation.entries.end(),
                        std::back_inserter(overlap));
  if (!overlap.empty()) {
    throw ContractError("dataset splits overlap on '" + overlap.front() + "'");
  }
  return split;
}

std::vector<ImageRGB> load_frames(const DatasetManifest& manifest, std::size_t frame_side) {
  std::vector<ImageRGB> frames;
  frames.reserve(manifest.entries.size());
  for (const std::string& entry : manifest.entries) {
    ImageRGB image = read_ppm(manifest.root / entry);
    if (image.width == frame_side && image.height == frame_side) {
      frames.push_back(std::move(image));
    } else {
      frames.push_back(resize_square_crop(image, frame_side));
    }
  }
  return frames;
}

}  // namespace fragnet
