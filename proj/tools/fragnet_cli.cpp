// Command-line front end. Talks to the library only through fragnet.h.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "fragnet/fragnet.h"

namespace {

// Non-zero status from the library: report and translate to the exit code.
struct Failure {
  fragnet_status status;
};

void check(fragnet_status status) {
  if (status != FRAGNET_OK) throw Failure{status};
}

struct UsageError {
  std::string message;
};

// Owning wrappers for the opaque handles.
struct Model {
  fragnet_model* handle = nullptr;
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  ~Model() { fragnet_model_destroy(handle); }
};

struct Dataset {
  fragnet_dataset* handle = nullptr;
  Dataset() = default;
  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;
  ~Dataset() { fragnet_dataset_destroy(handle); }
};

// Printed before each run, in the same key=value form --config accepts.
class ResolvedConfig {
 public:
  explicit ResolvedConfig(std::string command) : command_(std::move(command)) {}

  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream s;
    s << std::setprecision(10) << value;
    entries_.emplace_back(key, s.str());
  }

  void print() const {
    std::cout << "# fragnet " << command_ << " resolved config\n";
    for (const auto& [k, v] : entries_) std::cout << k << '=' << v << '\n';
    std::cout.flush();
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Sampler flags shared by every command that cuts fragments. Zero means
// "take the default for the scale / the checkpoint".
struct SamplerFlags {
  std::size_t frame_side = 0;
  std::size_t fragment_side = 0;
  std::size_t gap = 0;
  std::size_t jitter = 0;
  bool gap_set = false;
  bool jitter_set = false;

  void attach(CLI::App* app) {
    app->add_option("--frame_side,--frame-side", frame_side, "Frame side in pixels");
    app->add_option("--fragment_side,--fragment-side", fragment_side, "Fragment side in pixels");
    app->add_option("--gap", gap, "Gap between grid cells in pixels")
        ->each([this](const std::string&) { gap_set = true; });
    app->add_option("--jitter", jitter, "Maximum per-axis fragment displacement")
        ->each([this](const std::string&) { jitter_set = true; });
  }

  fragnet_sampler_config resolve(const std::string& scale, std::size_t model_side,
                                 std::uint64_t seed) const {
    fragnet_sampler_config c{};
    check(fragnet_sampler_defaults(scale.c_str(), &c));
    if (model_side) c.fragment_side = model_side;
    if (frame_side) c.frame_side = frame_side;
    if (fragment_side) c.fragment_side = fragment_side;
    if (gap_set) c.gap = gap;
    if (jitter_set) c.jitter = jitter;
    c.seed = seed;
    return c;
  }
};

void add_sampler(ResolvedConfig& rc, const fragnet_sampler_config& c) {
  rc.add("frame_side", c.frame_side);
  rc.add("fragment_side", c.fragment_side);
  rc.add("gap", c.gap);
  rc.add("jitter", c.jitter);
}

// Checkpoints do not carry the sampler; the full-size extractor takes 96 px
// fragments, anything else uses the desk frame layout.
std::string scale_of(const fragnet_model_info& info) {
  return info.input_side == 96 ? "full" : "desk";
}

void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError{std::string(flag) + " is required"};
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{FRAGNET_ERR_IO};
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError{path + ":" + std::to_string(line_no) + ": expected key=value"};
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return values;
}

// Fills options the command line left unset. Flags given explicitly win.
void apply_config(CLI::App* sub, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw UsageError{"unknown config key '" + key + "' for " + sub->get_name()};
    if (key == "config" || opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void print_epoch(const fragnet_metrics* m, void*) {
  std::cout << "epoch " << m->epoch << " train_loss " << std::setprecision(6) << m->train_loss
            << " val_accuracy " << m->validation_accuracy << '\n';
  std::cout.flush();
}

void print_gradcheck(const fragnet_gradcheck_line* line, void*) {
  std::cout << (line->failed == 0 ? "ok   " : "FAIL ") << line->name << "  " << line->checked - line->failed
            << '/' << line->checked << " probes, worst " << std::setprecision(3)
            << line->worst_error << " of tolerance\n";
}

void print_assignment(const char* label, const std::size_t* values) {
  std::cout << label;
  for (int i = 0; i < 8; ++i) std::cout << (i ? " " : "") << values[i];
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative-position network for 3x3 fragment puzzles", "fragnet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fragnet_version()));

  std::string config_path;
  std::uint64_t seed = 0;
  std::string scale = "desk";
  SamplerFlags sampler;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "File of key=value lines; flags take precedence");
    sub->add_option("--seed", seed, "Random seed");
  };

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic PPM corpus with manifests");
  std::string kind = "gradient", out;
  std::size_t count = 200;
  common(synth);
  synth->add_option("--kind", kind, "gradient, checker or blobs");
  synth->add_option("--count", count, "Number of images");
  synth->add_option("--frame_side,--frame-side", sampler.frame_side, "Image side in pixels");
  synth->add_option("--out", out, "Output directory");

  // train / finetune
  std::string data, fusion, ckpt, metrics;
  double lr = 0.1, momentum = 0.0, stop_at = 0.0;
  std::size_t batch = 64, epochs = 1;
  auto training_flags = [&](CLI::App* sub) {
    common(sub);
    sampler.attach(sub);
    sub->add_option("--data", data, "Dataset directory");
    sub->add_option("--lr", lr, "Learning rate");
    sub->add_option("--momentum", momentum, "SGD momentum (0 = plain SGD)");
    sub->add_option("--batch", batch, "Batch size (at least 2)");
    sub->add_option("--epochs", epochs, "Number of epochs");
    sub->add_option("--stop-at,--stop_at", stop_at, "Stop once validation accuracy reaches this");
    sub->add_option("--out", out, "Checkpoint to write");
    sub->add_option("--metrics", metrics, "Metrics CSV to append to");
  };
  CLI::App* train = app.add_subcommand("train", "Train a fresh model");
  training_flags(train);
  train->add_option("--fusion", fusion, "concat or kron")->default_str("kron");
  train->add_option("--scale", scale, "desk or full");

  CLI::App* finetune = app.add_subcommand("finetune", "Continue training from a checkpoint");
  training_flags(finetune);
  finetune->add_option("--ckpt", ckpt, "Checkpoint to start from");
  finetune->add_option("--fusion", fusion, "Replace the head when this differs");

  // eval
  CLI::App* eval = app.add_subcommand("eval", "Validation pair accuracy of a checkpoint");
  common(eval);
  sampler.attach(eval);
  eval->add_option("--ckpt", ckpt, "Checkpoint");
  eval->add_option("--data", data, "Dataset directory");

  // solve
  CLI::App* solve = app.add_subcommand("solve", "Solve 3x3 puzzles greedily");
  std::string image, render_out, report;
  bool oracle = false;
  common(solve);
  sampler.attach(solve);
  solve->add_option("--ckpt", ckpt, "Checkpoint");
  solve->add_option("--image", image, "Single PPM image");
  solve->add_option("--data", data, "Dataset directory (one puzzle per validation image)");
  solve->add_option("--render", render_out, "Write the reconstruction (with --image)");
  solve->add_option("--report", report, "Per-image CSV report (with --data)");
  solve->add_flag("--oracle", oracle, "Also run the exhaustive solver");

  // render
  CLI::App* render = app.add_subcommand("render", "Render a puzzle reconstruction");
  common(render);
  sampler.attach(render);
  render->add_option("--image", image, "PPM image");
  render->add_option("--ckpt", ckpt, "Checkpoint (omit for the true layout)");
  render->add_option("--out", out, "Output PPM");

  // gradcheck
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  bool network = false;
  common(gradcheck);
  gradcheck->add_flag("--network", network, "Also check the full desk network");

  // compare
  CLI::App* compare = app.add_subcommand("compare", "Side-by-side concat vs kron metrics");
  std::string concat_csv, kron_csv;
  common(compare);
  compare->add_option("--concat", concat_csv, "Metrics CSV of the concat run");
  compare->add_option("--kron", kron_csv, "Metrics CSV of the kron run");
  compare->add_option("--out", out, "Output CSV");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      const auto subs = app.get_subcommands();
      std::cerr << "error: " << e.what() << "\n\n"
                << (subs.empty() ? app.help() : subs.front()->help());
      return 1;
    }
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) {
      const auto values = read_config_file(config_path);
      try {
        apply_config(sub, values);
      } catch (const CLI::ParseError& e) {
        throw UsageError{std::string("config: ") + e.what()};
      }
    }
    const std::string name = sub->get_name();
    ResolvedConfig rc(name);

    if (sub == synth) {
      require_flag(out, "--out");
      const std::size_t side = sampler.frame_side ? sampler.frame_side : 128;
      rc.add("kind", kind);
      rc.add("count", count);
      rc.add("frame_side", side);
      rc.add("seed", seed);
      rc.add("out", out);
      rc.print();
      check(fragnet_synth(kind.c_str(), count, side, seed, out.c_str()));
      std::cout << "wrote " << count << " images to " << out << '\n';
      return 0;
    }

    if (sub == train || sub == finetune) {
      require_flag(data, "--data");
      Model model;
      std::string run_scale = scale;
      int reinit = 0;
      if (sub == train) {
        if (fusion.empty()) fusion = "kron";
        check(fragnet_model_create(scale.c_str(), fusion.c_str(), sampler.fragment_side, seed,
                                   &model.handle));
      } else {
        require_flag(ckpt, "--ckpt");
        check(fragnet_model_load(ckpt.c_str(), &model.handle));
        check(fragnet_model_prepare_finetune(model.handle, fusion.empty() ? nullptr : fusion.c_str(),
                                             seed, &reinit));
      }
      fragnet_model_info info{};
      check(fragnet_model_info_get(model.handle, &info));
      if (sub == finetune) run_scale = scale_of(info);
      fragnet_train_config cfg{};
      fragnet_train_defaults(&cfg);
      cfg.learning_rate = lr;
      cfg.momentum = momentum;
      cfg.batch_size = batch;
      cfg.epochs = epochs;
      cfg.seed = seed;
      cfg.stop_at = stop_at;
      cfg.sampler = sampler.resolve(run_scale, info.input_side, seed);

      if (sub == finetune) rc.add("ckpt", ckpt);
      rc.add("data", data);
      rc.add("scale", run_scale);
      rc.add("fusion", info.fusion);
      rc.add("lr", lr);
      rc.add("momentum", momentum);
      rc.add("batch", batch);
      rc.add("epochs", epochs);
      rc.add("stop_at", stop_at);
      rc.add("seed", seed);
      add_sampler(rc, cfg.sampler);
      rc.add("out", out);
      rc.add("metrics", metrics);
      rc.print();
      if (reinit) std::cerr << "warning: " << fragnet_last_warning() << '\n';

      Dataset ds;
      check(fragnet_dataset_open(data.c_str(), seed, cfg.sampler.frame_side, &ds.handle));
      std::cout << "train images " << fragnet_dataset_size(ds.handle, FRAGNET_SPLIT_TRAIN)
                << ", validation images "
                << fragnet_dataset_size(ds.handle, FRAGNET_SPLIT_VALIDATION) << '\n';
      check(fragnet_train(model.handle, ds.handle, &cfg, metrics.empty() ? nullptr : metrics.c_str(),
                          print_epoch, nullptr));
      if (!out.empty()) {
        check(fragnet_model_save(model.handle, out.c_str()));
        std::cout << "saved " << out << '\n';
      }
      return 0;
    }

    if (sub == eval) {
      require_flag(ckpt, "--ckpt");
      require_flag(data, "--data");
      Model model;
      check(fragnet_model_load(ckpt.c_str(), &model.handle));
      fragnet_model_info info{};
      check(fragnet_model_info_get(model.handle, &info));
      const fragnet_sampler_config sc = sampler.resolve(scale_of(info), info.input_side, seed);
      rc.add("ckpt", ckpt);
      rc.add("data", data);
      rc.add("seed", seed);
      add_sampler(rc, sc);
      rc.print();
      Dataset ds;
      check(fragnet_dataset_open(data.c_str(), seed, sc.frame_side, &ds.handle));
      double accuracy = 0.0;
      check(fragnet_evaluate(model.handle, ds.handle, &sc, &accuracy));
      std::cout << "validation pairs " << fragnet_dataset_size(ds.handle, FRAGNET_SPLIT_VALIDATION)
                << " accuracy " << std::setprecision(6) << accuracy << '\n';
      return 0;
    }

    if (sub == solve) {
      require_flag(ckpt, "--ckpt");
      if (image.empty() == data.empty()) throw UsageError{"solve needs exactly one of --image or --data"};
      Model model;
      check(fragnet_model_load(ckpt.c_str(), &model.handle));
      fragnet_model_info info{};
      check(fragnet_model_info_get(model.handle, &info));
      const fragnet_sampler_config sc = sampler.resolve(scale_of(info), info.input_side, seed);
      rc.add("ckpt", ckpt);
      if (!image.empty()) rc.add("image", image);
      if (!data.empty()) rc.add("data", data);
      rc.add("oracle", oracle ? "true" : "false");
      rc.add("render", render_out);
      rc.add("report", report);
      rc.add("seed", seed);
      add_sampler(rc, sc);
      rc.print();
      std::cout << std::setprecision(6);
      if (!image.empty()) {
        fragnet_puzzle_result r{};
        check(fragnet_solve_image(model.handle, image.c_str(), &sc, oracle ? 1 : 0,
                                  render_out.empty() ? nullptr : render_out.c_str(), &r));
        print_assignment("greedy ", r.greedy);
        print_assignment("truth  ", r.truth);
        std::cout << "perfect " << (r.perfect ? "yes" : "no") << " correctly_placed "
                  << r.correctly_placed << "/8\n";
        std::cout << "greedy_score " << r.greedy_score << '\n';
        if (oracle) std::cout << "optimal_score " << r.optimal_score << '\n';
      } else {
        Dataset ds;
        check(fragnet_dataset_open(data.c_str(), seed, sc.frame_side, &ds.handle));
        fragnet_corpus_result r{};
        check(fragnet_solve_corpus(model.handle, ds.handle, &sc, oracle ? 1 : 0,
                                   report.empty() ? nullptr : report.c_str(), &r));
        std::cout << "puzzles " << r.puzzles << '\n'
                  << "perfect_solve_rate " << r.perfect_rate << '\n'
                  << "fraction_correctly_placed " << r.fraction_correctly_placed << '\n';
        if (oracle) std::cout << "greedy_below_optimal " << r.oracle_disagreements << '\n';
      }
      return 0;
    }

    if (sub == render) {
      require_flag(image, "--image");
      require_flag(out, "--out");
      Model model;
      std::size_t side = 0;
      std::string run_scale = "desk";
      if (!ckpt.empty()) {
        check(fragnet_model_load(ckpt.c_str(), &model.handle));
        fragnet_model_info info{};
        check(fragnet_model_info_get(model.handle, &info));
        side = info.input_side;
        run_scale = scale_of(info);
      }
      const fragnet_sampler_config sc = sampler.resolve(run_scale, side, seed);
      rc.add("image", image);
      rc.add("ckpt", ckpt);
      rc.add("out", out);
      rc.add("seed", seed);
      add_sampler(rc, sc);
      rc.print();
      check(fragnet_render(model.handle, image.c_str(), &sc, out.c_str()));
      std::cout << "wrote " << out << '\n';
      return 0;
    }

    if (sub == gradcheck) {
      rc.add("seed", seed);
      rc.add("network", network ? "true" : "false");
      rc.print();
      std::size_t failed = 0;
      check(fragnet_gradcheck(seed, network ? 1 : 0, print_gradcheck, nullptr, &failed));
      if (failed) {
        std::cerr << "error: " << failed << " gradient check(s) failed\n";
        return 1;
      }
      std::cout << "all gradient checks passed\n";
      return 0;
    }

    if (sub == compare) {
      require_flag(concat_csv, "--concat");
      require_flag(kron_csv, "--kron");
      require_flag(out, "--out");
      rc.add("concat", concat_csv);
      rc.add("kron", kron_csv);
      rc.add("out", out);
      rc.print();
      check(fragnet_compare_metrics(concat_csv.c_str(), kron_csv.c_str(), out.c_str()));
      std::cout << "wrote " << out << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    const auto subs = app.get_subcommands();
    std::cerr << "error: " << e.message << "\n\n"
              << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  } catch (const Failure& f) {
    const char* message = fragnet_last_error();
    if (f.status == FRAGNET_ERR_IO && !*message) message = "cannot read config file";
    std::cerr << "error (" << fragnet_status_name(f.status) << "): " << message << '\n';
    return fragnet_exit_code(f.status);
  }
  return 1;
}
