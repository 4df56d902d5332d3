#include "mtu/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include "mtu/ablation.hpp"
#include "mtu/bench.hpp"
#include "mtu/checkpoint.hpp"
#include "mtu/dataset.hpp"
#include "mtu/image_io.hpp"
#include "mtu/metrics.hpp"
#include "mtu/report.hpp"
#include "mtu/train.hpp"

namespace fs = std::filesystem;

namespace mtu::cli {

ModelConfig toy_config() { return make_config(2, 8, 4); }

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MTU_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("MTU_SEED must be a non-negative integer, got '") + env + "'");
  }
  return fallback;
}

std::string resolve_backend(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MTU_DEVICE"); env != nullptr && *env != '\0') return env;
  return "host";
}

namespace {

struct SynthArgs {
  std::optional<std::uint64_t> seed;
  std::string out;
  int videos = 4;
  int frames = 24;
  int size = 64;
  double speed = 8.0;
  int subframes = 9;
  int max_displacement = 4;
};

struct TrainArgs {
  std::string preset = "smoke";
  std::string config;
  std::string dataset;
  std::string out = "runs/train";
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::int64_t crop = 0;
  std::int64_t steps = 0;
  std::int64_t checkpoint_every = 500;
};

struct InferArgs {
  std::string checkpoint;
  std::string in_dir;
  std::string out_dir;
  std::string precision = "full";
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string precision = "full";
  std::string split = "test";
  std::string report;
  bool probe = false;
};

struct BenchArgs {
  std::string checkpoint;
  std::string config;
  std::int64_t width = 1280;
  std::int64_t height = 720;
  int frames = 20;
  int warmup = 3;
  bool sync = true;
  std::string precision = "full";
  std::optional<std::string> backend;
  bool sweep = false;
  bool skip = false;
  std::string report;
};

struct AblateArgs {
  std::string dataset;
  std::string grid = "table2";
  std::string preset = "smoke";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::int64_t crop = 0;
  std::int64_t steps = 0;
  std::string out = "runs/ablation";
};

/// Largest multiple of 4 that fits every training frame, capped at 256.
std::int64_t default_crop(const std::vector<data::VideoEntry>& videos) {
  std::int64_t side = 256;
  for (const auto& v : videos) side = std::min({side, v.height, v.width});
  return side - side % ModelConfig::kMotionStride;
}

ModelConfig training_config(const std::string& config_path, const std::string& preset, const std::string& resume) {
  if (!config_path.empty()) return load_config_file(config_path);
  if (!resume.empty()) return load_checkpoint(resume).config;
  // Desk-scale schedules get the toy model; the full-length schedules the default one.
  return preset == "smoke" ? toy_config() : validate_config(ModelConfig{});
}

void print_record(const train::TrainRecord& r, std::int64_t total) {
  std::cout << "step " << r.step << "/" << total << "  loss " << report::fixed(r.loss, 5) << "  deblur "
            << report::fixed(r.deblur, 5) << "  motion " << report::fixed(r.motion, 4) << "  lr " << r.learning_rate
            << "  " << report::fixed(r.wall_seconds, 1) << " s\n";
}

int cmd_make_synthetic(const SynthArgs& a) {
  data::SynthOptions o;
  o.seed = resolve_seed(a.seed);
  o.videos = a.videos;
  o.frames = a.frames;
  o.size = a.size;
  o.max_speed = a.speed;
  o.subframes = a.subframes;
  o.max_displacement = a.max_displacement;
  const auto r = data::make_synthetic(o, a.out);
  std::cout << "wrote " << r.train_videos << " train and " << r.test_videos << " test videos (" << r.frames_written
            << " frames, " << a.size << "x" << a.size << ") to " << a.out << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a) {
  const ModelConfig cfg = training_config(a.config, a.preset, a.resume);
  const auto dataset = data::ingest_dataset(a.dataset);
  const auto schedule = train::schedule_preset(a.preset);
  train::TrainOptions o;
  o.seed = resolve_seed(a.seed);
  o.crop_size = a.crop > 0 ? a.crop : default_crop(dataset.train);
  o.out_dir = a.out;
  o.checkpoint_every = a.checkpoint_every;
  if (!a.resume.empty()) o.resume = a.resume;
  if (a.steps > 0) o.stop_after = a.steps;
  const std::int64_t total = schedule.total_iterations();
  const std::int64_t every = std::max<std::int64_t>(1, total / 100);
  o.on_record = [&](const train::TrainRecord& r) {
    if (r.step % every == 0 || r.step == total) print_record(r, total);
  };
  std::cout << "training preset " << a.preset << " (" << total << " iterations, batch " << schedule.batch_size << ", crop "
            << o.crop_size << ") with N=" << cfg.num_stacks << " c=" << cfg.feature_channels << " D=" << cfg.max_displacement
            << "\n";
  const auto result = train::train_on_dataset(cfg, dataset, schedule, o);
  std::cout << "finished at step " << result.steps << "; model written to " << (fs::path(a.out) / "model.mtu").string()
            << "\n";
  return kExitOk;
}

int cmd_infer(const InferArgs& a) {
  const auto model = load_model(a.checkpoint);
  if (!fs::is_directory(a.in_dir)) throw data::DatasetError(a.in_dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.in_dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw data::DatasetError(a.in_dir + " contains no .png frames");
  fs::create_directories(a.out_dir);

  VideoOptions vo;
  vo.precision = parse_precision(a.precision);
  std::size_t next = 0;
  run_video_streaming(
      model,
      [&]() -> std::optional<ImagePlane> {
        if (next >= files.size()) return std::nullopt;
        return io::read_png(files[next++]);
      },
      [&](std::size_t t, ImagePlane restored, const std::optional<DisplacementMap>&) {
        io::write_png(restored, fs::path(a.out_dir) / files[t].filename());
      },
      vo);
  std::cout << "restored " << files.size() << " frames (" << a.precision << " precision) into " << a.out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
  const auto model = load_model(a.checkpoint);
  const auto dataset = data::ingest_dataset(a.dataset);
  metrics::EvalOptions o;
  o.precision = parse_precision(a.precision);
  if (a.split == "train") {
    o.split = data::Split::train;
  } else if (a.split != "test") {
    throw std::invalid_argument("--split must be train or test");
  }
  o.probe_alignment = a.probe;
  const auto rendered = report::render_eval(metrics::evaluate_dataset(model, dataset, o));
  std::cout << rendered.table;
  if (!a.report.empty()) report::write_rendered(rendered, a.report);
  return kExitOk;
}

int cmd_bench(const BenchArgs& a) {
  ModelConfig cfg;
  std::optional<StackedModel<float>> loaded;
  if (!a.checkpoint.empty()) {
    loaded = load_model(a.checkpoint);
    cfg = loaded->config;
  } else if (!a.config.empty()) {
    cfg = load_config_file(a.config);
  } else {
    cfg = validate_config(ModelConfig{});
  }
  const auto backend = bench::make_backend(resolve_backend(a.backend));
  bench::BenchOptions o;
  o.width = a.width;
  o.height = a.height;
  o.frames = a.frames;
  o.warmup = a.warmup;
  o.precision = parse_precision(a.precision);
  bench::validate_bench_options(o);

  std::vector<report::Rendered> parts;
  const auto model = loaded ? std::move(*loaded) : StackedModel<float>::create(cfg, 0);
  const auto single = bench::benchmark_latency(model, o, *backend);
  parts.push_back(report::render_latency({single}, "latency"));
  const auto& primary = a.sync ? single.sync : single.naive;
  std::cout << parts.back().table;
  std::cout << (a.sync ? "synchronized" : "naive (unsynchronized)") << " mean " << report::fixed(primary.mean_ms, 3)
            << " ms, " << report::fixed(primary.fps, 2) << " fps\n";
  if (a.sweep) {
    parts.push_back(report::render_latency(bench::stack_sweep(cfg, {1, 2, 4, 10}, o, *backend), "stack-count sweep"));
    std::cout << "\n" << parts.back().table;
  }
  if (a.skip) {
    parts.push_back(report::render_latency(bench::skip_comparison(cfg, o, *backend), "matching skipping"));
    std::cout << "\n" << parts.back().table;
  }
  if (!a.report.empty()) {
    report::Rendered merged;
    merged.json = "[\n";
    for (std::size_t i = 0; i < parts.size(); ++i) {
      merged.table += (i > 0 ? "\n" : "") + parts[i].table;
      merged.json += parts[i].json + (i + 1 < parts.size() ? "," : "") + "\n";
    }
    merged.json += "]\n";
    report::write_rendered(merged, a.report);
  }
  return kExitOk;
}

int cmd_ablate(const AblateArgs& a) {
  const ModelConfig base = training_config(a.config, a.preset, "");
  const auto dataset = data::ingest_dataset(a.dataset);
  ablation::Options o;
  o.schedule = train::schedule_preset(a.preset);
  o.train.seed = resolve_seed(a.seed);
  o.train.crop_size = a.crop > 0 ? a.crop : default_crop(dataset.train);
  o.train.out_dir = a.out;
  if (a.steps > 0) o.train.stop_after = a.steps;
  const std::int64_t total = a.steps > 0 ? std::min(a.steps, o.schedule.total_iterations()) : o.schedule.total_iterations();
  o.on_record = [&](const std::string& variant, const train::TrainRecord& r) {
    if (r.step == total) std::cout << "  " << variant << ": done in " << report::fixed(r.wall_seconds, 1) << " s\n";
  };
  const auto variants = ablation::grid(a.grid, base);
  std::cout << "ablation grid " << a.grid << ": " << variants.size() << " variants, " << total << " steps each\n";
  const auto rows = ablation::run(variants, dataset, o);
  const auto rendered = ablation::render(rows, "ablation " + a.grid);
  std::cout << rendered.table;
  report::write_rendered(rendered, fs::path(a.out) / ("ablation_" + a.grid));
  return kExitOk;
}

void add_seed(CLI::App* app, std::optional<std::uint64_t>& seed) {
  app->add_option("--seed", seed, "random seed (default: $MTU_SEED or 0)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Stacked multi-task-unit video deblurring"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* ms = app.add_subcommand("make-synthetic", "write a synthetic blur dataset with exact flow");
  add_seed(ms, synth.seed);
  ms->add_option("--out", synth.out, "output directory")->required();
  ms->add_option("--videos", synth.videos, "number of videos")->capture_default_str();
  ms->add_option("--frames", synth.frames, "frames per video")->capture_default_str();
  ms->add_option("--size", synth.size, "frame side in pixels (multiple of 4)")->capture_default_str();
  ms->add_option("--speed", synth.speed, "peak camera speed in pixels per frame")->capture_default_str();
  ms->add_option("--subframes", synth.subframes, "exposure samples per blurry frame")->capture_default_str();
  ms->add_option("--max-displacement", synth.max_displacement, "the D the data targets (speed <= 4D)")->capture_default_str();

  TrainArgs tr;
  auto* tc = app.add_subcommand("train", "train a model");
  tc->add_option("--preset", tr.preset, "schedule: smoke, analysis or comparison")->capture_default_str();
  tc->add_option("--config", tr.config, "model config file (default: toy model for smoke, default model otherwise)");
  tc->add_option("--dataset", tr.dataset, "dataset root")->required();
  tc->add_option("--out", tr.out, "run directory")->capture_default_str();
  tc->add_option("--resume", tr.resume, "checkpoint to continue from");
  tc->add_option("--crop", tr.crop, "training crop side (default: min(256, frame size))");
  tc->add_option("--steps", tr.steps, "stop after this many iterations");
  tc->add_option("--checkpoint-every", tr.checkpoint_every, "checkpoint interval")->capture_default_str();
  add_seed(tc, tr.seed);

  InferArgs inf;
  auto* ic = app.add_subcommand("infer", "restore a directory of blurry frames");
  ic->add_option("--checkpoint", inf.checkpoint, "model checkpoint")->required();
  ic->add_option("--in", inf.in_dir, "directory of .png frames")->required();
  ic->add_option("--out", inf.out_dir, "output directory")->required();
  ic->add_option("--precision", inf.precision, "full or half")->capture_default_str();

  EvalArgs ev;
  auto* ec = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ec->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  ec->add_option("--dataset", ev.dataset, "dataset root")->required();
  ec->add_option("--precision", ev.precision, "full or half")->capture_default_str();
  ec->add_option("--split", ev.split, "train or test")->capture_default_str();
  ec->add_option("--report", ev.report, "write <path>.txt and <path>.json");
  ec->add_flag("--probe-alignment", ev.probe, "measure alignment even without motion compensation");

  BenchArgs be;
  auto* bc = app.add_subcommand("bench", "per-frame latency");
  bc->add_option("--checkpoint", be.checkpoint, "model checkpoint");
  bc->add_option("--config", be.config, "model config file (random weights)");
  bc->add_option("--width", be.width, "frame width")->capture_default_str();
  bc->add_option("--height", be.height, "frame height")->capture_default_str();
  bc->add_option("--frames", be.frames, "timed frames")->capture_default_str();
  bc->add_option("--warmup", be.warmup, "untimed warmup frames")->capture_default_str();
  bc->add_flag("--sync,!--no-sync", be.sync, "report synchronized (default) or naive timing");
  bc->add_option("--precision", be.precision, "full or half")->capture_default_str();
  bc->add_option("--backend", be.backend, "host or async (default: $MTU_DEVICE or host)");
  bc->add_flag("--sweep", be.sweep, "also time N = 1, 2, 4, 10");
  bc->add_flag("--skip-compare", be.skip, "also compare matching skipping off and on");
  bc->add_option("--report", be.report, "write <path>.txt and <path>.json");
  bc->get_option("--checkpoint")->excludes("--config");

  AblateArgs ab;
  auto* ac = app.add_subcommand("ablate", "train and evaluate an ablation grid");
  ac->add_option("--dataset", ab.dataset, "dataset root")->required();
  ac->add_option("--grid", ab.grid, "table1, table2 or structure")->capture_default_str();
  ac->add_option("--preset", ab.preset, "training schedule")->capture_default_str();
  ac->add_option("--config", ab.config, "base model config (default: toy model for smoke)");
  ac->add_option("--crop", ab.crop, "training crop side");
  ac->add_option("--steps", ab.steps, "stop each run after this many iterations");
  ac->add_option("--out", ab.out, "output directory")->capture_default_str();
  add_seed(ac, ab.seed);

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ms->parsed()) return cmd_make_synthetic(synth);
    if (tc->parsed()) return cmd_train(tr);
    if (ic->parsed()) return cmd_infer(inf);
    if (ec->parsed()) return cmd_eval(ev);
    if (bc->parsed()) return cmd_bench(be);
    if (ac->parsed()) return cmd_ablate(ab);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace mtu::cli
