#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtu/dataset.hpp"
#include "mtu/pipeline.hpp"

namespace mtu::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Phase {
  std::int64_t iterations = 0;
  double learning_rate = 0.0;
};

struct TrainSchedule {
  std::vector<Phase> phases;
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  std::int64_t total_iterations() const;
  /// Learning rate for 0-based iteration `step`.
  double learning_rate_at(std::int64_t step) const;
};

void validate_schedule(const TrainSchedule& s);

/// "comparison", "analysis" or "smoke".
TrainSchedule schedule_preset(const std::string& name);

/// Summed loss over an unrolled clip and its parts, each averaged over the
/// frames of the clip.
template <typename T>
struct ClipLoss {
  Var<T> total;
  double deblur = 0.0;
  double motion = 0.0;
};

/// Teacher-free unroll: the t = 1 rule, then each frame fed with the
/// model's own previous output. The motion term needs flows (one per frame
/// after the first) whenever it is enabled.
template <typename T>
ClipLoss<T> unroll_clip_loss(const StackedModel<T>& model, const std::vector<Tensor<T>>& blurry,
                             const std::vector<Tensor<T>>& sharp, const std::vector<FlowField>& flows);

/// True when the config asks for a motion loss term (and therefore flow).
bool needs_flow(const ModelConfig& cfg);

class AdamOptimizer {
 public:
  AdamOptimizer(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  /// Applies one update using the gradients currently stored in `params`.
  void step(const std::vector<std::pair<std::string, Var<float>>>& params, double learning_rate);
  std::int64_t steps() const { return steps_; }

  /// Moments keyed by parameter name, for checkpointing.
  void save(std::map<std::string, Tensor<float>>& arrays, std::map<std::string, std::string>& texts) const;
  void load(const std::map<std::string, Tensor<float>>& arrays, const std::map<std::string, std::string>& texts);

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  std::int64_t steps_ = 0;
  std::map<std::string, Tensor<float>> first_;
  std::map<std::string, Tensor<float>> second_;
};

struct TrainRecord {
  std::int64_t step = 0;  // iterations completed
  double loss = 0.0;
  double deblur = 0.0;
  double motion = 0.0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  std::int64_t crop_size = 256;
  /// Apply a uniformly drawn flip/transpose to each clip. Keeps a handful of
  /// synthetic videos from being memorised.
  bool augment = true;
  std::filesystem::path out_dir;  // checkpoints and metrics.jsonl; empty disables both
  std::int64_t checkpoint_every = 500;
  std::int64_t log_every = 10;
  std::optional<std::filesystem::path> resume;
  /// Stop after this many iterations in total (the schedule still defines
  /// the learning rates).
  std::optional<std::int64_t> stop_after;
  std::function<void(const TrainRecord&)> on_record;
};

struct TrainResult {
  StackedModel<float> model;
  std::vector<TrainRecord> records;
  std::int64_t steps = 0;
};

/// Trains on in-memory videos. The model's config governs the loss terms.
TrainResult train(StackedModel<float> model, const std::vector<data::VideoFrames>& videos, const TrainSchedule& schedule,
                  const TrainOptions& opts);

/// Loads the training split and trains a freshly initialised model.
TrainResult train_on_dataset(const ModelConfig& cfg, const data::Dataset& dataset, const TrainSchedule& schedule,
                             const TrainOptions& opts);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step);

}  // namespace mtu::train
