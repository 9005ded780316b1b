#include <cstring>
#include <vector>

#include "doctest.h"
#include "fragnet/checkpoint.hpp"
#include "fragnet/synthetic.hpp"
#include "test_util.hpp"

using namespace fragnet;

namespace {

std::vector<std::uint8_t> with_u32(std::vector<std::uint8_t> bytes, std::size_t at, std::uint32_t v) {
  for (std::size_t i = 0; i < 4; ++i) bytes[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  return bytes;
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= std::uint32_t(bytes[at + i]) << (8 * i);
  return v;
}

// Offset of the first tensor record.
std::size_t tensors_begin(const std::vector<std::uint8_t>& bytes) { return 12 + u32_at(bytes, 8); }

TrainConfig desk_train() {
  TrainConfig cfg;
  cfg.sampler = SamplerConfig::desk();
  cfg.batch_size = 8;
  return cfg;
}

}  // namespace

TEST_CASE("encode and decode round-trip bit-exactly") {
  TrainingState state(ModelConfig::desk(FusionKind::Concat), 3);
  state.epoch = 7;
  state.rng.discard(11);
  const auto bytes = encode_checkpoint(state);
  CHECK(std::memcmp(bytes.data(), "FRAG", 4) == 0);
  CHECK(u32_at(bytes, 4) == kCheckpointVersion);
  TrainingState back = decode_checkpoint(bytes);
  CHECK(back.epoch == 7);
  CHECK(back.rng == state.rng);
  CHECK(back.network.config() == state.network.config());
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("save and load through a file") {
  TempDir dir("ckpt");
  TrainingState state(ModelConfig::desk(), 4);
  save_checkpoint(dir / "m.ckpt", state);
  TrainingState back = load_checkpoint(dir / "m.ckpt");
  CHECK(encode_checkpoint(back) == encode_checkpoint(state));
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), IoError);
  CHECK_THROWS_AS(save_checkpoint(dir / "no/such/dir/m.ckpt", state), IoError);
}

TEST_CASE("damaged checkpoints raise distinct errors") {
  TrainingState state(ModelConfig::desk(), 5);
  const auto good = encode_checkpoint(state);

  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("future version") {
    CHECK_THROWS_AS(decode_checkpoint(with_u32(good, 4, kCheckpointVersion + 1)), VersionMismatchError);
  }
  SUBCASE("truncated anywhere") {
    for (std::size_t cut : {std::size_t{2}, std::size_t{10}, tensors_begin(good) + 3, good.size() - 1}) {
      const std::vector<std::uint8_t> part(good.begin(), good.begin() + cut);
      CHECK_THROWS_AS(decode_checkpoint(part), TruncatedError);
    }
  }
  SUBCASE("trailing bytes") {
    auto bytes = good;
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("corrupt config blob") {
    auto bytes = good;
    bytes[12] = '!';
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("tensors from a differently shaped model") {
    ModelConfig narrow = ModelConfig::desk();
    narrow.fen.feature_dim = 32;
    narrow.fusion.feature_dim = 32;
    TrainingState other(narrow, 5);
    const auto foreign = encode_checkpoint(other);
    std::vector<std::uint8_t> spliced(good.begin(), good.begin() + tensors_begin(good));
    spliced.insert(spliced.end(), foreign.begin() + tensors_begin(foreign), foreign.end());
    CHECK_THROWS_AS(decode_checkpoint(spliced), ShapeMismatchError);
  }
  SUBCASE("non-finite payload") {
    auto bytes = good;
    // First tensor record: name, rank, extents, then float32 values.
    const std::size_t at = tensors_begin(good);
    const std::size_t name_len = u32_at(good, at);
    const std::size_t rank = u32_at(good, at + 4 + name_len);
    const std::size_t payload = at + 4 + name_len + 4 + 8 * rank;
    const std::uint32_t nan_bits = 0x7fc00000u;
    CHECK_THROWS_AS(decode_checkpoint(with_u32(bytes, payload, nan_bits)), FormatError);
  }
}

TEST_CASE("resuming from a checkpoint continues the same trajectory") {
  const auto frames = generate({SyntheticKind::Gradient, 128, 16, 8});
  const TrainConfig cfg = desk_train();
  TrainingState straight(ModelConfig::desk(), 6);
  SgdOptimizer a(cfg.learning_rate);
  train_epoch(straight, frames, cfg, a);
  const auto midway = encode_checkpoint(straight);
  train_epoch(straight, frames, cfg, a);

  TrainingState resumed = decode_checkpoint(midway);
  SgdOptimizer b(cfg.learning_rate);
  train_epoch(resumed, frames, cfg, b);
  CHECK(resumed.epoch == 2);
  CHECK(encode_checkpoint(resumed) == encode_checkpoint(straight));
}

TEST_CASE("fine-tuning start") {
  TrainingState state(ModelConfig::desk(FusionKind::Concat), 7);
  const auto original = encode_checkpoint(state);

  SUBCASE("same fusion keeps everything") {
    FinetuneStart start = prepare_finetune(decode_checkpoint(original), FusionKind::Concat, 1);
    CHECK_FALSE(start.head_reinitialized);
    CHECK(start.warning.empty());
    CHECK(encode_checkpoint(start.state) == original);
  }
  SUBCASE("no fusion requested keeps everything") {
    FinetuneStart start = prepare_finetune(decode_checkpoint(original), std::nullopt, 1);
    CHECK_FALSE(start.head_reinitialized);
  }
  SUBCASE("a different fusion keeps the extractor and replaces the head") {
    FinetuneStart start = prepare_finetune(decode_checkpoint(original), FusionKind::Kronecker, 1);
    CHECK(start.head_reinitialized);
    CHECK(start.warning.find("reinitialized") != std::string::npos);
    auto& net = start.state.network;
    CHECK(net.config().fusion.kind == FusionKind::Kronecker);
    CHECK(net.head().hidden.front().weight.shape() == Shape{64 * 64, 128});
    auto& old_fen = state.network.fen();
    for (std::size_t i = 0; i < old_fen.blocks.size(); ++i) {
      const auto x = old_fen.blocks[i].weight.values(), y = net.fen().blocks[i].weight.values();
      CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    }
    const auto x = old_fen.fc_weight.values(), y = net.fen().fc_weight.values();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}
