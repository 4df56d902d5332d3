#include "mtu/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mtu/checkpoint.hpp"
#include "mtu/image_io.hpp"
#include "mtu/losses.hpp"
#include "mtu/ops.hpp"

namespace mtu::train {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::int64_t TrainSchedule::total_iterations() const {
  std::int64_t n = 0;
  for (const auto& p : phases) n += p.iterations;
  return n;
}

double TrainSchedule::learning_rate_at(std::int64_t step) const {
  std::int64_t end = 0;
  for (const auto& p : phases) {
    end += p.iterations;
    if (step < end) return p.learning_rate;
  }
  return phases.empty() ? 0.0 : phases.back().learning_rate;
}

void validate_schedule(const TrainSchedule& s) {
  if (s.phases.empty()) throw TrainingError("schedule has no phases");
  for (const auto& p : s.phases) {
    if (p.iterations <= 0) throw TrainingError("schedule phase with non-positive iteration count");
    if (!(p.learning_rate > 0.0) || !std::isfinite(p.learning_rate)) throw TrainingError("schedule phase with non-positive learning rate");
  }
  if (s.batch_size < 1) throw TrainingError("batch size must be >= 1");
  if (!(s.beta1 >= 0.0 && s.beta1 < 1.0 && s.beta2 >= 0.0 && s.beta2 < 1.0)) throw TrainingError("Adam betas must lie in [0, 1)");
  if (!(s.epsilon > 0.0)) throw TrainingError("Adam epsilon must be positive");
}

TrainSchedule schedule_preset(const std::string& name) {
  TrainSchedule s;
  if (name == "comparison") {
    s.phases = {{1'000'000, 1e-4}, {250'000, 2.5e-5}, {50'000, 6.25e-6}};
  } else if (name == "analysis") {
    s.phases = {{300'000, 1e-4}};
  } else if (name == "smoke") {
    // Desk-scale: one clip per iteration keeps a toy run within minutes.
    s.phases = {{2'000, 1e-3}};
    s.batch_size = 1;
  } else {
    throw TrainingError("unknown schedule preset '" + name + "' (expected comparison, analysis or smoke)");
  }
  return s;
}

bool needs_flow(const ModelConfig& cfg) { return cfg.enable_motion_loss && cfg.enable_motion_compensation; }

template <typename T>
ClipLoss<T> unroll_clip_loss(const StackedModel<T>& model, const std::vector<Tensor<T>>& blurry,
                             const std::vector<Tensor<T>>& sharp, const std::vector<FlowField>& flows) {
  const auto& cfg = model.config;
  if (blurry.empty() || blurry.size() != sharp.size()) throw TrainingError("clip needs matching, non-empty blurry and sharp frames");
  const bool with_motion = needs_flow(cfg);
  if (with_motion && flows.size() + 1 != blurry.size()) {
    throw TrainingError("the motion loss needs one flow field per frame after the first (got " + std::to_string(flows.size()) +
                        " for " + std::to_string(blurry.size()) + " frames)");
  }

  StepOptions so;
  so.all_heads = true;
  auto state = init_state(model, blurry.front());
  Var<T> sum;
  ClipLoss<T> out;
  for (std::size_t t = 0; t < blurry.size(); ++t) {
    auto result = step(model, state, blurry[t], so);
    std::vector<Var<T>> outputs;
    std::vector<CostVolume<T>> costs;
    for (auto& s : result.stacks) {
      outputs.push_back(s.restored);
      if (s.cost) costs.push_back(*s.cost);
    }
    const Var<T> deblur = deblur_loss(outputs, sharp[t], cfg.lambdas);
    out.deblur += static_cast<double>(deblur.value()[0]);
    Var<T> motion;
    // Frame 1 has no predecessor, hence no flow to supervise its matching.
    if (with_motion && t > 0 && !costs.empty()) {
      motion = motion_loss(costs, gt_cost_volume<T>(flows[t - 1], cfg.max_displacement));
      out.motion += static_cast<double>(motion.value()[0]);
    }
    const Var<T> frame_loss = total_loss(deblur, motion, cfg.alpha, cfg.enable_motion_loss);
    sum = sum.defined() ? ops::add(sum, frame_loss) : frame_loss;
    state = std::move(result.state);
  }
  const double inv = 1.0 / static_cast<double>(blurry.size());
  out.total = ops::scale(sum, static_cast<T>(inv));
  out.deblur *= inv;
  out.motion *= inv;
  return out;
}

template ClipLoss<float> unroll_clip_loss<float>(const StackedModel<float>&, const std::vector<Tensor<float>>&,
                                                 const std::vector<Tensor<float>>&, const std::vector<FlowField>&);
template ClipLoss<double> unroll_clip_loss<double>(const StackedModel<double>&, const std::vector<Tensor<double>>&,
                                                   const std::vector<Tensor<double>>&, const std::vector<FlowField>&);

void AdamOptimizer::step(const std::vector<std::pair<std::string, Var<float>>>& params, double learning_rate) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const double step_size = learning_rate / c1;
  for (const auto& [name, p] : params) {
    const Tensor<float>& g = p.node()->grad;
    if (g.empty()) continue;  // untouched this step (e.g. a disabled branch)
    auto [m_it, m_new] = first_.try_emplace(name, p.shape());
    auto [v_it, v_new] = second_.try_emplace(name, p.shape());
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    auto w = p.node()->value.data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = gd[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - step_size * mi / (std::sqrt(vi / c2) + epsilon_));
    }
  }
}

void AdamOptimizer::save(std::map<std::string, Tensor<float>>& arrays, std::map<std::string, std::string>& texts) const {
  for (const auto& [name, t] : first_) arrays["optim.m." + name] = t;
  for (const auto& [name, t] : second_) arrays["optim.v." + name] = t;
  texts["optim.steps"] = std::to_string(steps_);
}

void AdamOptimizer::load(const std::map<std::string, Tensor<float>>& arrays, const std::map<std::string, std::string>& texts) {
  const auto it = texts.find("optim.steps");
  if (it == texts.end()) throw TrainingError("checkpoint has no optimizer state; cannot resume");
  steps_ = std::stoll(it->second);
  first_.clear();
  second_.clear();
  for (const auto& [name, t] : arrays) {
    if (name.rfind("optim.m.", 0) == 0) first_.emplace(name.substr(8), t);
    if (name.rfind("optim.v.", 0) == 0) second_.emplace(name.substr(8), t);
  }
}

fs::path checkpoint_path(const fs::path& dir, std::int64_t step) { return dir / ("ckpt_" + std::to_string(step) + ".mtu"); }

namespace {

template <typename T>
std::vector<Tensor<T>> to_tensors(const std::vector<ImagePlane>& frames) {
  std::vector<Tensor<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.to_tensor<T>());
  return out;
}

json record_json(const TrainRecord& r) {
  return {{"step", r.step}, {"loss", r.loss}, {"deblur_loss", r.deblur}, {"motion_loss", r.motion},
          {"lr", r.learning_rate}, {"wall_s", r.wall_seconds}};
}

[[noreturn]] void abort_non_finite(const fs::path& dir, std::int64_t step, const data::ClipSample& clip, double deblur,
                                   double motion, const StackedModel<float>& model) {
  json dump{{"step", step},
            {"deblur_loss", std::isfinite(deblur) ? json(deblur) : json(std::to_string(deblur))},
            {"motion_loss", std::isfinite(motion) ? json(motion) : json(std::to_string(motion))},
            {"clip", {{"video", clip.video}, {"start", clip.start}, {"crop_y", clip.crop_y}, {"crop_x", clip.crop_x}}}};
  json params = json::object();
  for (const auto& [name, p] : model.named_parameters()) {
    double max_abs = 0.0;
    bool finite = true;
    for (float v : p.value().data()) {
      finite = finite && std::isfinite(v);
      max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
    }
    params[name] = {{"finite", finite}, {"max_abs", finite ? json(max_abs) : json(nullptr)}};
  }
  dump["parameters"] = params;
  std::string where = "(no output directory)";
  if (!dir.empty()) {
    const fs::path path = dir / ("nonfinite_step_" + std::to_string(step) + ".json");
    io::write_file_atomic(path, dump.dump(2));
    where = path.string();
  }
  throw TrainingError("non-finite loss at iteration " + std::to_string(step) + "; diagnostics in " + where);
}

}  // namespace

TrainResult train(StackedModel<float> model, const std::vector<data::VideoFrames>& videos, const TrainSchedule& schedule,
                  const TrainOptions& opts) {
  validate_schedule(schedule);
  if (videos.empty()) throw TrainingError("no training videos");
  const auto& cfg = model.config;
  if (needs_flow(cfg)) {
    for (const auto& v : videos) {
      if (v.flows.empty()) {
        throw TrainingError("the motion loss is enabled but the training data has no flow files; provide flow or disable "
                            "enable_motion_loss");
      }
    }
  }
  if (opts.crop_size <= 0 || opts.crop_size % ModelConfig::kMotionStride != 0) {
    throw TrainingError("crop size must be a positive multiple of 4");
  }

  std::mt19937_64 rng(opts.seed);
  AdamOptimizer optimizer(schedule.beta1, schedule.beta2, schedule.epsilon);
  std::int64_t start = 0;
  double wall_offset = 0.0;
  if (opts.resume) {
    const Checkpoint ckpt = load_checkpoint(*opts.resume);
    model = model_from_checkpoint(ckpt, cfg);
    optimizer.load(ckpt.arrays, ckpt.texts);
    const auto rng_it = ckpt.texts.find("train.rng");
    if (rng_it == ckpt.texts.end()) throw TrainingError("checkpoint has no RNG state; cannot resume");
    std::istringstream(rng_it->second) >> rng;
    if (const auto w = ckpt.texts.find("train.wall_s"); w != ckpt.texts.end()) wall_offset = std::stod(w->second);
    start = ckpt.step;
  }

  const std::int64_t end = std::min(schedule.total_iterations(), opts.stop_after.value_or(schedule.total_iterations()));
  std::ofstream log;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    log.open(opts.out_dir / "metrics.jsonl", opts.resume ? std::ios::app : std::ios::trunc);
  }

  auto save = [&](std::int64_t step, double wall) {
    if (opts.out_dir.empty()) return;
    Checkpoint ckpt = make_checkpoint(model, step);
    optimizer.save(ckpt.arrays, ckpt.texts);
    std::ostringstream rs;
    rs << rng;
    ckpt.texts["train.rng"] = rs.str();
    ckpt.texts["train.wall_s"] = std::to_string(wall);
    save_checkpoint(ckpt, checkpoint_path(opts.out_dir, step));
  };

  const auto params = model.named_parameters();
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  for (std::int64_t it = start; it < end; ++it) {
    for (const auto& [name, p] : params) {
      Var<float> v = p;
      v.zero_grad();
    }
    double deblur = 0.0;
    double motion = 0.0;
    double total = 0.0;
    for (int b = 0; b < schedule.batch_size; ++b) {
      data::ClipSample clip = data::sample_clip(videos, rng, opts.crop_size);
      if (opts.augment) clip = data::dihedral(clip, static_cast<int>(rng() % data::kDihedralCount));
      auto loss = unroll_clip_loss(model, to_tensors<float>(clip.blurry), to_tensors<float>(clip.sharp), clip.flows);
      const double value = loss.total.value()[0];
      if (!std::isfinite(value)) abort_non_finite(opts.out_dir, it, clip, loss.deblur, loss.motion, model);
      backward(loss.total);
      deblur += loss.deblur;
      motion += loss.motion;
      total += value;
    }
    const float inv_batch = 1.0f / static_cast<float>(schedule.batch_size);
    if (schedule.batch_size > 1) {
      for (const auto& [name, p] : params) {
        for (auto& g : p.node()->grad.data()) g *= inv_batch;
      }
    }
    const double lr = schedule.learning_rate_at(it);
    optimizer.step(params, lr);

    TrainRecord rec;
    rec.step = it + 1;
    rec.loss = total * inv_batch;
    rec.deblur = deblur * inv_batch;
    rec.motion = motion * inv_batch;
    rec.learning_rate = lr;
    rec.wall_seconds = wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);
    if (log.is_open() && (rec.step % std::max<std::int64_t>(1, opts.log_every) == 0 || rec.step == end)) {
      log << record_json(rec).dump() << '\n';
      log.flush();
    }
    if (opts.on_record) opts.on_record(rec);
    if (opts.checkpoint_every > 0 && rec.step % opts.checkpoint_every == 0 && rec.step != end) save(rec.step, rec.wall_seconds);
  }
  const double wall = wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (end > start) save(end, wall);
  if (!opts.out_dir.empty()) save_checkpoint(make_checkpoint(model, end), opts.out_dir / "model.mtu");
  result.steps = end;
  result.model = std::move(model);
  return result;
}

TrainResult train_on_dataset(const ModelConfig& cfg, const data::Dataset& dataset, const TrainSchedule& schedule,
                             const TrainOptions& opts) {
  const bool with_flow = needs_flow(cfg);
  if (dataset.train.empty()) throw TrainingError("dataset " + dataset.root.string() + " has no training videos");
  if (with_flow && !dataset.flow_available(data::Split::train)) {
    throw TrainingError("the motion loss is enabled but " + dataset.root.string() +
                        " lacks flow files for some training videos; provide flow or disable enable_motion_loss");
  }
  std::vector<data::VideoFrames> videos;
  for (const auto& v : dataset.train) videos.push_back(data::load_video(v, with_flow));
  return train(StackedModel<float>::create(cfg, opts.seed), videos, schedule, opts);
}

}  // namespace mtu::train
