#include "fragnet/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fragnet {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "float must be IEEE-754 binary32");

constexpr std::uint8_t kMagic[4] = {'F', 'R', 'A', 'G'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename U>
  void little(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
  }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                           std::to_string(pos_) + ": need " + std::to_string(n) + " bytes, have " +
                           std::to_string(bytes_.size() - pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U little(const char* what) {
    auto s = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(s[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) { return little<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return little<std::uint64_t>(what); }
  std::string string(const char* what) {
    const std::uint32_t n = u32(what);
    auto s = take(n, what);
    return std::string(s.begin(), s.end());
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(TrainingState& state) {
  std::vector<NamedTensor<float>> tensors = state.network.state();
  std::ostringstream rng_text;
  rng_text << state.rng;

  nlohmann::json blob;
  blob["model"] = nlohmann::json::parse(state.network.config().to_json());
  blob["epoch"] = state.epoch;
  blob["rng_state"] = rng_text.str();
  blob["tensor_count"] = tensors.size();

  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.string(blob.dump());
  for (const auto& t : tensors) {
    w.string(t.name);
    const Shape& shape = t.tensor.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t extent : shape) w.u64(extent);
    for (float v : t.tensor.values()) w.f32(v);
  }
  return w.take();
}

TrainingState decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint format version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  }
  const std::string blob_text = r.string("config blob");
  nlohmann::json blob;
  ModelConfig config;
  std::size_t epoch = 0, tensor_count = 0;
  std::string rng_state;
  try {
    blob = nlohmann::json::parse(blob_text);
    config = ModelConfig::from_json(blob.at("model").dump());
    epoch = blob.at("epoch").get<std::size_t>();
    rng_state = blob.at("rng_state").get<std::string>();
    tensor_count = blob.at("tensor_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config blob: ") + e.what());
  }
  try {
    config.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  TrainingState state(config, 0);
  state.epoch = epoch;
  std::istringstream rng_in(rng_state);
  rng_in >> state.rng;
  if (!rng_in) throw FormatError("checkpoint RNG state is malformed");

  std::map<std::string, Tensor> expected;
  for (auto& t : state.network.state()) expected.emplace(t.name, t.tensor);

  std::map<std::string, bool> filled;
  for (std::size_t i = 0; i < tensor_count; ++i) {
    const std::string name = r.string("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& extent : shape) extent = r.u64("tensor extent");
    auto it = expected.find(name);
    if (it == expected.end()) {
      throw ShapeMismatchError("checkpoint tensor '" + name + "' is not part of the configured model");
    }
    if (it->second.shape() != shape) {
      throw ShapeMismatchError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                               ", config expects " + shape_str(it->second.shape()));
    }
    if (!filled.emplace(name, true).second) {
      throw FormatError("checkpoint tensor '" + name + "' appears twice");
    }
    auto payload = r.take(shape_numel(shape) * 4, "tensor payload");
    std::span<float> dst = it->second.mutable_values();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * k + b]) << (8 * b);
      dst[k] = std::bit_cast<float>(bits);
      if (!std::isfinite(dst[k])) throw FormatError("checkpoint tensor '" + name + "' holds a non-finite value");
    }
  }
  if (filled.size() != expected.size()) {
    for (const auto& [name, t] : expected) {
      if (!filled.count(name)) throw ShapeMismatchError("checkpoint is missing tensor '" + name + "'");
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last checkpoint tensor");
  return state;
}

void save_checkpoint(const std::filesystem::path& path, TrainingState& state) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

FinetuneStart prepare_finetune(TrainingState loaded, std::optional<FusionKind> kind,
                               std::uint64_t seed) {
  FinetuneStart start{std::move(loaded), false, {}};
  const FusionKind current = start.state.network.config().fusion.kind;
  if (kind && *kind != current) {
    start.state.network.reinitialize_head(*kind, seed);
    start.head_reinitialized = true;
    start.warning = std::string("checkpoint fusion is ") + fusion_name(current) +
                    ", requested " + fusion_name(*kind) +
                    ": feature extractor kept, classification head reinitialized";
  }
  return start;
}

}  // namespace fragnet
