#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtu/multi_task_unit.hpp"

namespace mtu {

/// N multi-task units plus the two input convolutions.
template <typename T>
struct StackedModel {
  ModelConfig config;
  ConvLayer<T> structure_conv;  // I^b_t -> f^b_t
  ConvLayer<T> pair_conv;       // [I^b_{t-1}, I^r_{t-1}] -> g_t
  std::vector<UnitParameters<T>> units;

  /// Validates the config and draws weights from a seeded generator.
  static StackedModel create(const ModelConfig& cfg, std::uint64_t seed);

  /// Parameters in a fixed order with stable names (checkpoint keys).
  std::vector<std::pair<std::string, Var<T>>> named_parameters() const;

  /// With `inference_only`, the intermediate deblur heads are excluded
  /// since only the last unit's head produces the output.
  std::int64_t parameter_count(bool inference_only = false) const;

  /// Deep copy, converting every weight to U.
  template <typename U>
  StackedModel<U> cast() const;

  /// Deep copy with weights rounded to binary16 values.
  StackedModel half_precision_copy() const;
};

template <typename T>
struct StackAux {
  Var<T> restored;                         // I^{r,n}_t; undefined if the head was skipped
  std::optional<CostVolume<T>> cost;       // C^n_t
  std::optional<DisplacementMap> displacement;  // W^n_t, full resolution
};

template <typename T>
struct StepResult {
  Var<T> restored;  // I^r_t
  RecurrentState<T> state;
  std::vector<StackAux<T>> stacks;
};

struct StepOptions {
  /// Run every unit's deblur head (needed for the training loss).
  bool all_heads = false;
  bool half_activations = false;
  bool probe_alignment = false;
};

/// t = 1 rule: the first frame doubles as the previous blurry and restored
/// frame and the previous detail features are zero.
template <typename T>
RecurrentState<T> init_state(const StackedModel<T>& model, const Tensor<T>& first_frame, bool half_activations = false);

template <typename T>
StepResult<T> step(const StackedModel<T>& model, const RecurrentState<T>& state, const Tensor<T>& frame,
                   const StepOptions& opts = {});

/// Receives (frame index, restored frame, per-stack quarter-scale W of the
/// last unit if any).
using FrameSink = std::function<void(std::size_t, ImagePlane, const std::optional<DisplacementMap>&)>;
using FrameSource = std::function<std::optional<ImagePlane>()>;

struct VideoOptions {
  Precision precision = Precision::full;
  bool probe_alignment = false;
};

/// Streams frames through the model without recording a graph. Frames whose
/// size is not a multiple of 4 are reflect-padded and the outputs cropped
/// back. The sink gets the last unit's displacement at quarter scale of the
/// padded frame.
void run_video_streaming(const StackedModel<float>& model, const FrameSource& source, const FrameSink& sink,
                         const VideoOptions& opts = {});

/// Throws std::invalid_argument on an empty sequence.
std::vector<ImagePlane> run_video(const StackedModel<float>& model, const std::vector<ImagePlane>& frames,
                                  const VideoOptions& opts = {});

}  // namespace mtu
