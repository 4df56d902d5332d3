#pragma once

#include <optional>

#include "mtu/types.hpp"

// Non-learnable feature matching: windowed cosine-similarity cost volume,
// argmax displacement, nearest-neighbour upsampling and integer warping.
namespace mtu::mc {

inline constexpr double kCosineEpsilon = 1e-8;

/// Entry k at pixel x is cos(cur(x), prev(x + d_k)), d_k decoded with
/// channel_to_displacement. Targets outside `prev` count as zero vectors.
/// The denominator is max(|a| |b|, 1e-8). Differentiable in both inputs.
template <typename T>
CostVolume<T> cost_volume(const Var<T>& cur, const Var<T>& prev, int max_displacement);

/// Channel-wise argmax; ties go to the smallest channel index.
template <typename T>
DisplacementMap argmax_displacement(const Tensor<T>& cost, int max_displacement);

/// output(x) = factor * coarse(floor(x / factor)).
DisplacementMap upsample_displacement(const DisplacementMap& coarse, int factor = 4);

/// Inverse of upsample_displacement for maps produced by it.
DisplacementMap downsample_displacement(const DisplacementMap& fine, int factor = 4);

/// output(x) = prev(x + W(x)), zero outside. Gradients flow to the gathered
/// values only.
template <typename T>
Var<T> warp_features(const Var<T>& prev, const DisplacementMap& displacement);

template <typename T>
struct MotionResult {
  Var<T> warped;
  std::optional<CostVolume<T>> cost;  // absent when the matching was skipped
  DisplacementMap displacement;       // at the resolution of the warped map
};

/// Matching at the injected-feature scale, upsampled by the stride to warp
/// the previous final detail map. With `reuse`, matching is skipped and the
/// given full-resolution map is applied as is.
template <typename T>
MotionResult<T> motion_compensate(const Var<T>& cur_injected, const Var<T>& prev_injected, const Var<T>& prev_final,
                                  int max_displacement, const DisplacementMap* reuse = nullptr);

}  // namespace mtu::mc
