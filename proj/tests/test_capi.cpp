// Exercises the shared library through its C header only.

#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "fragnet/fragnet.h"
#include "test_util.hpp"

namespace {

struct ModelHandle {
  fragnet_model* p = nullptr;
  ~ModelHandle() { fragnet_model_destroy(p); }
};

struct DatasetHandle {
  fragnet_dataset* p = nullptr;
  ~DatasetHandle() { fragnet_dataset_destroy(p); }
};

fragnet_sampler_config desk_sampler() {
  fragnet_sampler_config s{};
  REQUIRE(fragnet_sampler_defaults("desk", &s) == FRAGNET_OK);
  return s;
}

void count_epochs(const fragnet_metrics* m, void* user) {
  auto* seen = static_cast<std::vector<std::size_t>*>(user);
  seen->push_back(m->epoch);
}

void count_lines(const fragnet_gradcheck_line* line, void* user) {
  auto* n = static_cast<std::size_t*>(user);
  if (line->checked > 0) ++*n;
}

}  // namespace

TEST_CASE("status helpers") {
  CHECK(std::string(fragnet_version()) == "1.0.0");
  CHECK(fragnet_exit_code(FRAGNET_OK) == 0);
  CHECK(fragnet_exit_code(FRAGNET_ERR_CONTRACT) == 1);
  CHECK(fragnet_exit_code(FRAGNET_ERR_NUMERIC) == 1);
  CHECK(fragnet_exit_code(FRAGNET_ERR_IO) == 2);
  CHECK(fragnet_exit_code(FRAGNET_ERR_FORMAT) == 2);
  CHECK(fragnet_exit_code(FRAGNET_ERR_INTERNAL) == 2);
  CHECK(std::string(fragnet_status_name(FRAGNET_ERR_IO)) == "io error");
}

TEST_CASE("sampler defaults per scale") {
  fragnet_sampler_config s{};
  REQUIRE(fragnet_sampler_defaults("full", &s) == FRAGNET_OK);
  CHECK(s.frame_side == 398);
  CHECK(s.fragment_side == 96);
  CHECK(s.gap == 48);
  CHECK(s.jitter == 7);
  const fragnet_sampler_config d = desk_sampler();
  CHECK(d.frame_side == 128);
  CHECK(d.fragment_side == 32);
}

TEST_CASE("bad arguments report contract errors with a message") {
  fragnet_model* model = nullptr;
  CHECK(fragnet_model_create("desk", "sum", 0, 1, &model) == FRAGNET_ERR_CONTRACT);
  CHECK(model == nullptr);
  CHECK(std::strlen(fragnet_last_error()) > 0);
  CHECK(fragnet_model_create("desk", "kron", 0, 1, nullptr) == FRAGNET_ERR_CONTRACT);
  CHECK(fragnet_sampler_defaults(nullptr, nullptr) == FRAGNET_ERR_CONTRACT);
  fragnet_model_destroy(nullptr);
  fragnet_dataset_destroy(nullptr);
}

TEST_CASE("model lifecycle") {
  TempDir dir("capi_model");
  ModelHandle m;
  REQUIRE(fragnet_model_create("desk", "kron", 0, 3, &m.p) == FRAGNET_OK);
  CHECK(std::string(fragnet_last_error()).empty());
  fragnet_model_info info{};
  REQUIRE(fragnet_model_info_get(m.p, &info) == FRAGNET_OK);
  CHECK(std::string(info.fusion) == "kron");
  CHECK(info.input_side == 32);
  CHECK(info.feature_dim == 64);
  CHECK(info.epoch == 0);
  CHECK(info.parameter_count > 0);

  std::size_t needed = 0;
  char small[8];
  REQUIRE(fragnet_model_describe(m.p, small, sizeof small, &needed) == FRAGNET_OK);
  CHECK(needed > sizeof small);
  CHECK(std::strlen(small) == sizeof small - 1);
  std::vector<char> full(needed);
  REQUIRE(fragnet_model_describe(m.p, full.data(), full.size(), &needed) == FRAGNET_OK);
  CHECK(std::string(full.data()).find("\"epoch\":0") != std::string::npos);

  const std::string path = (dir / "m.ckpt").string();
  REQUIRE(fragnet_model_save(m.p, path.c_str()) == FRAGNET_OK);
  ModelHandle back;
  REQUIRE(fragnet_model_load(path.c_str(), &back.p) == FRAGNET_OK);
  fragnet_model_info again{};
  fragnet_model_info_get(back.p, &again);
  CHECK(again.parameter_count == info.parameter_count);

  ModelHandle missing;
  CHECK(fragnet_model_load((dir / "none.ckpt").string().c_str(), &missing.p) == FRAGNET_ERR_IO);
  { std::ofstream(dir / "junk.ckpt") << "not a checkpoint"; }
  CHECK(fragnet_model_load((dir / "junk.ckpt").string().c_str(), &missing.p) == FRAGNET_ERR_FORMAT);
  CHECK(missing.p == nullptr);

  int reinit = -1;
  REQUIRE(fragnet_model_prepare_finetune(back.p, "concat", 4, &reinit) == FRAGNET_OK);
  CHECK(reinit == 1);
  CHECK(std::string(fragnet_last_warning()).find("reinitialized") != std::string::npos);
  fragnet_model_info_get(back.p, &again);
  CHECK(std::string(again.fusion) == "concat");
  REQUIRE(fragnet_model_prepare_finetune(back.p, nullptr, 4, &reinit) == FRAGNET_OK);
  CHECK(reinit == 0);
}

TEST_CASE("data, training, evaluation and solving") {
  TempDir dir("capi_flow");
  const std::string data = (dir / "data").string();
  REQUIRE(fragnet_synth("gradient", 14, 128, 5, data.c_str()) == FRAGNET_OK);
  CHECK(std::filesystem::exists(dir / "data/img_0000.ppm"));
  CHECK(std::filesystem::exists(dir / "data/train.manifest"));

  DatasetHandle ds;
  REQUIRE(fragnet_dataset_open(data.c_str(), 5, 128, &ds.p) == FRAGNET_OK);
  CHECK(fragnet_dataset_size(ds.p, FRAGNET_SPLIT_TRAIN) == 10);
  CHECK(fragnet_dataset_size(ds.p, FRAGNET_SPLIT_VALIDATION) == 4);

  ModelHandle m;
  REQUIRE(fragnet_model_create("desk", "kron", 0, 3, &m.p) == FRAGNET_OK);
  fragnet_train_config cfg{};
  fragnet_train_defaults(&cfg);
  cfg.sampler = desk_sampler();
  cfg.batch_size = 5;
  cfg.epochs = 2;
  std::vector<std::size_t> epochs;
  const std::string metrics = (dir / "metrics.csv").string();
  REQUIRE(fragnet_train(m.p, ds.p, &cfg, metrics.c_str(), count_epochs, &epochs) == FRAGNET_OK);
  CHECK(epochs == std::vector<std::size_t>{1, 2});
  CHECK(slurp(metrics).rfind("epoch,train_loss,val_accuracy\n", 0) == 0);

  double acc = -1;
  const fragnet_sampler_config sampler = desk_sampler();
  REQUIRE(fragnet_evaluate(m.p, ds.p, &sampler, &acc) == FRAGNET_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  fragnet_puzzle_result r{};
  const std::string render = (dir / "r.ppm").string();
  REQUIRE(fragnet_solve_image(m.p, (dir / "data/img_0003.ppm").string().c_str(), &sampler, 1,
                              render.c_str(), &r) == FRAGNET_OK);
  CHECK(r.greedy_score <= r.optimal_score + 1e-9);
  CHECK(r.correctly_placed <= 8);
  CHECK((r.perfect != 0) == (r.correctly_placed == 8));
  CHECK(std::filesystem::exists(render));

  fragnet_corpus_result c{};
  const std::string report = (dir / "report.csv").string();
  REQUIRE(fragnet_solve_corpus(m.p, ds.p, &sampler, 1, report.c_str(), &c) == FRAGNET_OK);
  CHECK(c.puzzles == 4);
  CHECK(c.perfect_rate <= c.fraction_correctly_placed);
  CHECK(slurp(report).rfind("image,perfect,correctly_placed,greedy_score,optimal_score\n", 0) == 0);

  const std::string truth = (dir / "truth.ppm").string();
  CHECK(fragnet_render(nullptr, (dir / "data/img_0003.ppm").string().c_str(), &sampler,
                       truth.c_str()) == FRAGNET_OK);

  fragnet_sampler_config wrong = sampler;
  wrong.fragment_side = 16;
  CHECK(fragnet_evaluate(m.p, ds.p, &wrong, &acc) == FRAGNET_ERR_CONTRACT);

  const std::string merged = (dir / "cmp.csv").string();
  REQUIRE(fragnet_compare_metrics(metrics.c_str(), metrics.c_str(), merged.c_str()) == FRAGNET_OK);
  CHECK(slurp(merged).rfind("epoch,concat_val_accuracy,kron_val_accuracy\n", 0) == 0);
}

TEST_CASE("training on an empty folder fails with a contract error") {
  TempDir dir("capi_empty");
  DatasetHandle ds;
  REQUIRE(fragnet_dataset_open(dir.path().string().c_str(), 1, 128, &ds.p) == FRAGNET_OK);
  ModelHandle m;
  REQUIRE(fragnet_model_create("desk", "concat", 0, 1, &m.p) == FRAGNET_OK);
  fragnet_train_config cfg{};
  fragnet_train_defaults(&cfg);
  cfg.sampler = desk_sampler();
  CHECK(fragnet_train(m.p, ds.p, &cfg, nullptr, nullptr, nullptr) == FRAGNET_ERR_CONTRACT);
  CHECK(std::string(fragnet_last_error()) == "empty dataset");
}

TEST_CASE("op gradient checks through the C API") {
  std::size_t failed = 99, lines = 0;
  REQUIRE(fragnet_gradcheck(1, 0, count_lines, &lines, &failed) == FRAGNET_OK);
  CHECK(failed == 0);
  CHECK(lines > 5);
}
