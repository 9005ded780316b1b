#include "fragnet/fragnet.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fragnet/checkpoint.hpp"
#include "fragnet/errors.hpp"
#include "fragnet/gradcheck.hpp"
#include "fragnet/image.hpp"
#include "fragnet/manifest.hpp"
#include "fragnet/predictor.hpp"
#include "fragnet/solver.hpp"
#include "fragnet/synthetic.hpp"
#include "fragnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace fragnet;

struct fragnet_model {
  TrainingState state;
};

struct fragnet_dataset {
  DatasetSplit split;
  std::vector<ImageRGB> train;
  std::vector<ImageRGB> validation;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_warning;

fragnet_status fail(fragnet_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs `body`, mapping the exception hierarchy onto status codes.
template <typename F>
fragnet_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return FRAGNET_OK;
  } catch (const ContractError& e) {
    return fail(FRAGNET_ERR_CONTRACT, e.what());
  } catch (const NumericError& e) {
    return fail(FRAGNET_ERR_NUMERIC, e.what());
  } catch (const IoError& e) {
    return fail(FRAGNET_ERR_IO, e.what());
  } catch (const FormatError& e) {
    return fail(FRAGNET_ERR_FORMAT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FRAGNET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FRAGNET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FRAGNET_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ContractError(std::string(what) + " is null");
}

bool is_full_scale(const std::string& scale) {
  if (scale == "full") return true;
  if (scale == "desk") return false;
  throw ContractError("unknown scale '" + scale + "' (expected desk or full)");
}

SamplerConfig to_sampler(const fragnet_sampler_config* c) {
  require(c, "sampler config");
  SamplerConfig s;
  s.frame_side = c->frame_side;
  s.fragment_side = c->fragment_side;
  s.gap = c->gap;
  s.jitter = c->jitter;
  s.seed = c->seed;
  s.validate();
  return s;
}

void check_fragment_side(const fragnet_model* model, const SamplerConfig& s) {
  const std::size_t side = model->state.network.config().fen.input_side;
  if (s.fragment_side != side) {
    throw ContractError("fragment_side " + std::to_string(s.fragment_side) +
                        " does not match the model input side " + std::to_string(side));
  }
}

ImageRGB load_frame(const char* path, std::size_t frame_side) {
  require(path, "image path");
  ImageRGB image = read_ppm(path);
  if (image.width != frame_side || image.height != frame_side) {
    image = resize_square_crop(image, frame_side);
  }
  return image;
}

PairPredictor predictor_for(fragnet_model* model) {
  return model ? network_predictor(model->state.network) : truth_predictor();
}

void fill_result(const PuzzleOutcome& o, fragnet_puzzle_result* out) {
  out->perfect = o.metrics.perfect_solve ? 1 : 0;
  out->correctly_placed = o.metrics.correctly_placed;
  out->greedy_score = o.greedy_score;
  out->optimal_score = o.optimal_score;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    out->greedy[i] = o.greedy.location_of[i];
    out->truth[i] = o.truth.location_of[i];
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

extern "C" {

const char* fragnet_last_error(void) { return last_error.c_str(); }
const char* fragnet_last_warning(void) { return last_warning.c_str(); }
const char* fragnet_version(void) { return "1.0.0"; }

const char* fragnet_status_name(fragnet_status status) {
  switch (status) {
    case FRAGNET_OK: return "ok";
    case FRAGNET_ERR_CONTRACT: return "contract violation";
    case FRAGNET_ERR_IO: return "io error";
    case FRAGNET_ERR_FORMAT: return "format error";
    case FRAGNET_ERR_NUMERIC: return "numeric error";
    case FRAGNET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int fragnet_exit_code(fragnet_status status) {
  switch (status) {
    case FRAGNET_OK: return 0;
    case FRAGNET_ERR_CONTRACT:
    case FRAGNET_ERR_NUMERIC: return 1;
    default: return 2;
  }
}

fragnet_status fragnet_sampler_defaults(const char* scale, fragnet_sampler_config* out) {
  return guarded([&] {
    require(scale, "scale");
    require(out, "output");
    const SamplerConfig s = is_full_scale(scale) ? SamplerConfig{} : SamplerConfig::desk();
    *out = {s.frame_side, s.fragment_side, s.gap, s.jitter, s.seed};
  });
}

fragnet_status fragnet_model_create(const char* scale, const char* fusion, size_t input_side,
                                    uint64_t seed, fragnet_model** out) {
  return guarded([&] {
    require(scale, "scale");
    require(fusion, "fusion");
    require(out, "output");
    *out = nullptr;
    const FusionKind kind = parse_fusion(fusion);
    ModelConfig config = is_full_scale(scale) ? ModelConfig::full(kind) : ModelConfig::desk(kind);
    if (input_side != 0) config.fen.input_side = input_side;
    config.validate();
    *out = new fragnet_model{TrainingState(config, seed)};
  });
}

fragnet_status fragnet_model_load(const char* path, fragnet_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output");
    *out = nullptr;
    *out = new fragnet_model{load_checkpoint(path)};
  });
}

fragnet_status fragnet_model_save(fragnet_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(path, model->state);
  });
}

void fragnet_model_destroy(fragnet_model* model) { delete model; }

fragnet_status fragnet_model_info_get(const fragnet_model* model, fragnet_model_info* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "output");
    auto& net = const_cast<PairNetwork<float>&>(model->state.network);
    const ModelConfig& config = net.config();
    std::memset(out, 0, sizeof *out);
    std::strncpy(out->fusion, fusion_name(config.fusion.kind), sizeof out->fusion - 1);
    out->input_side = config.fen.input_side;
    out->feature_dim = config.fen.feature_dim;
    out->epoch = model->state.epoch;
    out->parameter_count = net.parameter_count();
  });
}

fragnet_status fragnet_model_describe(const fragnet_model* model, char* buffer, size_t capacity,
                                      size_t* needed) {
  return guarded([&] {
    require(model, "model");
    const std::string text = "{\"model\":" + model->state.network.config().to_json() +
                             ",\"epoch\":" + std::to_string(model->state.epoch) + "}";
    if (needed) *needed = text.size() + 1;
    if (buffer && capacity > 0) {
      const std::size_t n = std::min(capacity - 1, text.size());
      std::memcpy(buffer, text.data(), n);
      buffer[n] = '\0';
    }
  });
}

fragnet_status fragnet_model_prepare_finetune(fragnet_model* model, const char* fusion,
                                              uint64_t seed, int* head_reinitialized) {
  return guarded([&] {
    require(model, "model");
    last_warning.clear();
    std::optional<FusionKind> kind;
    if (fusion) kind = parse_fusion(fusion);
    FinetuneStart start = prepare_finetune(std::move(model->state), kind, seed);
    model->state = std::move(start.state);
    last_warning = start.warning;
    if (head_reinitialized) *head_reinitialized = start.head_reinitialized ? 1 : 0;
  });
}

fragnet_status fragnet_synth(const char* kind, size_t count, size_t frame_side, uint64_t seed,
                             const char* out_dir) {
  return guarded([&] {
    require(kind, "kind");
    require(out_dir, "output directory");
    if (count == 0) throw ContractError("count must be at least 1");
    SyntheticSpec spec;
    spec.kind = parse_synthetic(kind);
    spec.frame_side = frame_side;
    spec.count = count;
    spec.seed = seed;
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::string> names;
    for (std::size_t i = 0; i < count; ++i) {
      std::ostringstream name;
      name << "img_" << std::setw(4) << std::setfill('0') << i << ".ppm";
      write_ppm(dir / name.str(), generate_one(spec, i));
      names.push_back(name.str());
    }
    const DatasetSplit split = split_files(dir, names, seed);
    write_manifest(dir / kTrainManifestName, split.train);
    write_manifest(dir / kValidationManifestName, split.validation);
  });
}

fragnet_status fragnet_dataset_open(const char* dir, uint64_t seed, size_t frame_side,
                                    fragnet_dataset** out) {
  return guarded([&] {
    require(dir, "dataset directory");
    require(out, "output");
    *out = nullptr;
    if (!fs::is_directory(dir)) throw IoError(std::string("not a directory: ") + dir);
    auto ds = std::make_unique<fragnet_dataset>();
    ds->split = open_dataset(dir, seed);
    ds->train = load_frames(ds->split.train, frame_side);
    ds->validation = load_frames(ds->split.validation, frame_side);
    *out = ds.release();
  });
}

size_t fragnet_dataset_size(const fragnet_dataset* dataset, fragnet_split split) {
  if (!dataset) return 0;
  return split == FRAGNET_SPLIT_TRAIN ? dataset->train.size() : dataset->validation.size();
}

void fragnet_dataset_destroy(fragnet_dataset* dataset) { delete dataset; }

void fragnet_train_defaults(fragnet_train_config* out) {
  if (!out) return;
  const TrainConfig t;
  const SamplerConfig s = SamplerConfig::desk();
  *out = {t.learning_rate, t.momentum, t.batch_size, t.epochs, t.seed,
          {s.frame_side, s.fragment_side, s.gap, s.jitter, s.seed}, 0.0};
}

fragnet_status fragnet_train(fragnet_model* model, const fragnet_dataset* dataset,
                             const fragnet_train_config* config, const char* metrics_csv,
                             fragnet_epoch_callback callback, void* user) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    require(config, "train config");
    TrainConfig cfg;
    cfg.learning_rate = config->learning_rate;
    cfg.momentum = config->momentum;
    cfg.batch_size = config->batch_size;
    cfg.epochs = config->epochs;
    cfg.seed = config->seed;
    cfg.sampler = to_sampler(&config->sampler);
    check_fragment_side(model, cfg.sampler);
    std::optional<double> stop_at;
    if (config->stop_at > 0.0) stop_at = config->stop_at;
    const std::optional<fs::path> log =
        metrics_csv ? std::optional<fs::path>(metrics_csv) : std::nullopt;
    fit(model->state, dataset->train, dataset->validation, cfg,
        [&](const MetricsRecord& r) {
          if (log) append_metrics(*log, r);
          if (callback) {
            const fragnet_metrics m{r.epoch, r.train_loss, r.validation_accuracy};
            callback(&m, user);
          }
        },
        stop_at);
  });
}

fragnet_status fragnet_evaluate(fragnet_model* model, const fragnet_dataset* dataset,
                                const fragnet_sampler_config* sampler, double* accuracy) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    require(accuracy, "output");
    const SamplerConfig s = to_sampler(sampler);
    check_fragment_side(model, s);
    *accuracy = evaluate(network_predictor(model->state.network), dataset->validation, s, s.seed);
  });
}

fragnet_status fragnet_solve_image(fragnet_model* model, const char* image_path,
                                   const fragnet_sampler_config* sampler, int with_oracle,
                                   const char* render_path, fragnet_puzzle_result* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "output");
    const SamplerConfig s = to_sampler(sampler);
    check_fragment_side(model, s);
    const ImageRGB frame = load_frame(image_path, s.frame_side);
    std::mt19937_64 rng(s.seed);
    const std::vector<Fragment> fragments = sample_grid(s, frame, rng);
    const PuzzleOutcome outcome = solve_puzzle(predictor_for(model), fragments, with_oracle != 0);
    if (render_path) {
      write_ppm(render_path, render_reconstruction(fragments, outcome.greedy, s, &outcome.truth));
    }
    fill_result(outcome, out);
  });
}

fragnet_status fragnet_solve_corpus(fragnet_model* model, const fragnet_dataset* dataset,
                                    const fragnet_sampler_config* sampler, int with_oracle,
                                    const char* report_csv, fragnet_corpus_result* out) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    require(out, "output");
    const SamplerConfig s = to_sampler(sampler);
    check_fragment_side(model, s);
    if (dataset->validation.empty()) throw ContractError("empty validation set");
    const PairPredictor predictor = predictor_for(model);
    CorpusReport report;
    std::size_t disagreements = 0;
    for (std::size_t i = 0; i < dataset->validation.size(); ++i) {
      std::mt19937_64 rng(s.seed ^ static_cast<std::uint64_t>(i));
      const std::vector<Fragment> fragments = sample_grid(s, dataset->validation[i], rng);
      const PuzzleOutcome o = solve_puzzle(predictor, fragments, with_oracle != 0);
      if (with_oracle && o.greedy_score < o.optimal_score) ++disagreements;
      report.rows.push_back({dataset->split.validation.entries[i], o.metrics.perfect_solve,
                             o.metrics.correctly_placed, o.greedy_score, o.optimal_score});
    }
    if (report_csv) write_text(report_csv, report.to_csv());
    out->puzzles = report.rows.size();
    out->perfect_rate = report.perfect_rate();
    out->fraction_correctly_placed = report.fraction_correctly_placed();
    out->oracle_disagreements = disagreements;
  });
}

fragnet_status fragnet_render(fragnet_model* model, const char* image_path,
                              const fragnet_sampler_config* sampler, const char* out_path) {
  return guarded([&] {
    require(out_path, "output path");
    const SamplerConfig s = to_sampler(sampler);
    if (model) check_fragment_side(model, s);
    const ImageRGB frame = load_frame(image_path, s.frame_side);
    std::mt19937_64 rng(s.seed);
    const std::vector<Fragment> fragments = sample_grid(s, frame, rng);
    const Assignment truth = ground_truth(fragments);
    if (!model) {
      write_ppm(out_path, render_reconstruction(fragments, truth, s, &truth));
      return;
    }
    const PuzzleOutcome o = solve_puzzle(predictor_for(model), fragments, false);
    write_ppm(out_path, render_reconstruction(fragments, o.greedy, s, &o.truth));
  });
}

fragnet_status fragnet_gradcheck(uint64_t seed, int include_network,
                                 fragnet_gradcheck_callback callback, void* user,
                                 size_t* failed_checks) {
  return guarded([&] {
    std::vector<GradCheckReport> reports = op_gradient_suite(seed);
    if (include_network) {
      reports.push_back(network_gradient_check(FusionKind::Concat, seed));
      reports.push_back(network_gradient_check(FusionKind::Kronecker, seed));
    }
    std::size_t failed = 0;
    for (const GradCheckReport& r : reports) {
      if (!r.passed()) ++failed;
      if (callback) {
        const fragnet_gradcheck_line line{r.name.c_str(), r.checked, r.failed, r.worst_error};
        callback(&line, user);
      }
    }
    if (failed_checks) *failed_checks = failed;
  });
}

fragnet_status fragnet_compare_metrics(const char* concat_csv, const char* kron_csv,
                                       const char* out_csv) {
  return guarded([&] {
    require(concat_csv, "concat metrics path");
    require(kron_csv, "kron metrics path");
    require(out_csv, "output path");
    const auto concat = read_metrics(concat_csv);
    const auto kron = read_metrics(kron_csv);
    write_text(out_csv, fusion_comparison_csv(concat, kron));
  });
}

}  // extern "C"
