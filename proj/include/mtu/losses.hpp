#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "mtu/types.hpp"

namespace mtu {

class LossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted L1 over stacks, normalised by the pixel count. The per-pixel
/// term sums the absolute differences of the colour channels.
template <typename T>
Var<T> deblur_loss(const std::vector<Var<T>>& stack_outputs, const Tensor<T>& ground_truth,
                   const std::vector<double>& lambdas);

/// Every 4th pixel (top-left of each 4x4 block), divided by 4. Values stay
/// real; see quarter_displacement for the rounded version.
FlowField quarter_scale_flow(const FlowField& flow_full);

/// Rounds half away from zero and clamps each component to [-D, D].
DisplacementMap quarter_displacement(const FlowField& flow_full, int max_displacement);

/// One-hot ((2D+1)^2, h/4, w/4) target built from full-resolution flow.
template <typename T>
CostVolume<T> gt_cost_volume(const FlowField& flow_full, int max_displacement);

/// Cross-entropy between softmax(C^n) and the one-hot target, summed over
/// the supplied stacks and divided by the quarter-scale pixel count.
template <typename T>
Var<T> motion_loss(const std::vector<CostVolume<T>>& stack_costs, const CostVolume<T>& target);

/// deblur + alpha * motion. An undefined `motion` (or disabled motion loss)
/// yields the deblur term alone. Non-finite inputs throw LossError.
template <typename T>
Var<T> total_loss(const Var<T>& deblur, const Var<T>& motion, double alpha, bool enable_motion_loss = true);

}  // namespace mtu
