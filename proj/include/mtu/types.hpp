#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtu/autograd.hpp"
#include "mtu/config.hpp"

namespace mtu {

/// Planar (C, H, W) image. Frames live in [0, 1]; residual images are
/// unbounded.
struct ImagePlane {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t channels = 0;
  std::vector<float> values;

  ImagePlane() = default;
  ImagePlane(std::int64_t h, std::int64_t w, std::int64_t c, float fill = 0.0f);

  float& at(std::int64_t c, std::int64_t y, std::int64_t x) { return values[static_cast<std::size_t>((c * height + y) * width + x)]; }
  float at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return values[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  /// The M of the per-pixel loss normalisation.
  std::int64_t pixel_count() const { return height * width; }
  bool same_shape(const ImagePlane& o) const { return height == o.height && width == o.width && channels == o.channels; }

  ImagePlane clamped() const;

  template <typename T>
  Tensor<T> to_tensor() const {
    Tensor<T> t(Shape{channels, height, width});
    for (std::size_t i = 0; i < values.size(); ++i) t[static_cast<std::int64_t>(i)] = static_cast<T>(values[i]);
    return t;
  }
  template <typename T>
  static ImagePlane from_tensor(const Tensor<T>& t) {
    ImagePlane img(t.shape().height(), t.shape().width(), t.shape().channels());
    for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>(t[static_cast<std::int64_t>(i)]);
    return img;
  }

  bool operator==(const ImagePlane&) const = default;
};

/// Reflect-pads height and width up to the next multiple of `multiple`
/// (bottom and right edges). Returns the input unchanged when already aligned.
ImagePlane pad_reflect_to_multiple(const ImagePlane& img, std::int64_t multiple);
ImagePlane crop(const ImagePlane& img, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w);

enum class FeatureRole { detail, structure, structure_injected, warped };

template <typename T>
struct FeatureMap {
  Var<T> values;
  FeatureRole role = FeatureRole::detail;

  std::int64_t channels() const { return values.shape().channels(); }
  std::int64_t height() const { return values.shape().height(); }
  std::int64_t width() const { return values.shape().width(); }
};

/// Channel k of a cost volume holds displacement (dx, dy) with
/// k = (dy + D) * (2D + 1) + (dx + D).
template <typename T>
struct CostVolume {
  Var<T> values;  // ((2D+1)^2, h, w)
  int max_displacement = 0;
};

inline std::int64_t window_width(int max_displacement) { return 2 * static_cast<std::int64_t>(max_displacement) + 1; }
inline std::int64_t cost_channels(int max_displacement) { return window_width(max_displacement) * window_width(max_displacement); }
inline std::int64_t displacement_to_channel(int dx, int dy, int max_displacement) {
  return (dy + max_displacement) * window_width(max_displacement) + (dx + max_displacement);
}
inline std::pair<int, int> channel_to_displacement(std::int64_t k, int max_displacement) {
  const auto w = window_width(max_displacement);
  return {static_cast<int>(k % w) - max_displacement, static_cast<int>(k / w) - max_displacement};
}

/// Integer per-pixel motion: feature at x in the current frame matches
/// x + (dx, dy) in the previous one.
struct DisplacementMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<int> dx;
  std::vector<int> dy;

  DisplacementMap() = default;
  DisplacementMap(std::int64_t h, std::int64_t w, int fill_dx = 0, int fill_dy = 0)
      : height(h), width(w), dx(static_cast<std::size_t>(h * w), fill_dx), dy(static_cast<std::size_t>(h * w), fill_dy) {}

  std::size_t index(std::int64_t y, std::int64_t x) const { return static_cast<std::size_t>(y * width + x); }
  bool operator==(const DisplacementMap&) const = default;
};

enum class FlowScale { full = 1, quarter = 4 };

/// Real-valued displacement field with the same convention as
/// DisplacementMap: pixel x of frame t matches x + flow(x) in frame t-1.
struct FlowField {
  std::int64_t height = 0;
  std::int64_t width = 0;
  FlowScale scale = FlowScale::full;
  std::vector<float> dx;
  std::vector<float> dy;

  FlowField() = default;
  FlowField(std::int64_t h, std::int64_t w, FlowScale s, float fill_dx = 0.0f, float fill_dy = 0.0f)
      : height(h), width(w), scale(s), dx(static_cast<std::size_t>(h * w), fill_dx), dy(static_cast<std::size_t>(h * w), fill_dy) {}

  std::size_t index(std::int64_t y, std::int64_t x) const { return static_cast<std::size_t>(y * width + x); }
  bool finite() const;
  bool operator==(const FlowField&) const = default;
};

/// Everything carried from frame t-1 to frame t.
template <typename T>
struct RecurrentState {
  Tensor<T> prev_blurry;              // (3, H, W)
  Var<T> prev_restored;               // (3, H, W), in the graph during training
  FeatureMap<T> prev_final_detail;    // f^N_{t-1}, full feature resolution
  std::vector<FeatureMap<T>> prev_injected;  // one per stack, quarter resolution

  /// Throws ShapeError if the state does not fit the config and frame size.
  void check(const ModelConfig& cfg, std::int64_t height, std::int64_t width) const;
  std::size_t bytes() const;
  /// Copies every tensor into fresh leaves (truncates the graph).
  RecurrentState detached() const;
};

}  // namespace mtu
