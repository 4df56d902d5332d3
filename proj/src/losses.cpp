#include "mtu/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mtu {

namespace {

template <typename T>
T scalar_of(const Var<T>& v, const char* what) {
  if (!v.defined() || v.value().numel() != 1) throw LossError(std::string(what) + ": expected a scalar");
  const T value = v.value()[0];
  if (!std::isfinite(static_cast<double>(value))) throw LossError(std::string(what) + " is not finite");
  return value;
}

int round_half_away(double v) { return static_cast<int>(std::lround(v)); }

}  // namespace

template <typename T>
Var<T> deblur_loss(const std::vector<Var<T>>& stack_outputs, const Tensor<T>& ground_truth,
                   const std::vector<double>& lambdas) {
  if (stack_outputs.empty()) throw LossError("deblur_loss: no stack outputs");
  if (stack_outputs.size() != lambdas.size()) {
    throw LossError("deblur_loss: " + std::to_string(stack_outputs.size()) + " outputs but " +
                    std::to_string(lambdas.size()) + " weights");
  }
  const auto& gs = ground_truth.shape();
  if (gs.rank() != 3) throw ShapeError("deblur_loss: expected a (C, H, W) ground truth");
  for (const auto& out : stack_outputs) {
    if (!out.defined()) throw LossError("deblur_loss: a supervised stack has no output");
    require_same_shape(out.shape(), gs, "deblur_loss");
  }
  const double pixels = static_cast<double>(gs.height() * gs.width());
  const auto gt = ground_truth.data();

  double total = 0.0;
  for (std::size_t n = 0; n < stack_outputs.size(); ++n) {
    const auto out = stack_outputs[n].value().data();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += std::abs(static_cast<double>(out[i]) - static_cast<double>(gt[i]));
    total += lambdas[n] * acc;
  }
  Tensor<T> value(Shape{1}, static_cast<T>(total / pixels));

  return make_result<T>(std::move(value), stack_outputs, [ground_truth, lambdas, pixels](Node<T>& self) {
    const double dy = static_cast<double>(self.grad[0]);
    const auto gt = ground_truth.data();
    for (std::size_t n = 0; n < self.parents.size(); ++n) {
      auto& parent = *self.parents[n];
      if (!parent.requires_grad) continue;
      const T weight = static_cast<T>(dy * lambdas[n] / pixels);
      const auto out = parent.value.data();
      auto g = parent.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T diff = out[i] - gt[i];
        if (diff > T{0}) {
          g[i] += weight;
        } else if (diff < T{0}) {
          g[i] -= weight;
        }
      }
    }
  });
}

FlowField quarter_scale_flow(const FlowField& flow_full) {
  if (flow_full.scale != FlowScale::full) throw LossError("quarter_scale_flow: expected full-resolution flow");
  constexpr std::int64_t s = ModelConfig::kMotionStride;
  FlowField q(flow_full.height / s, flow_full.width / s, FlowScale::quarter);
  for (std::int64_t y = 0; y < q.height; ++y) {
    for (std::int64_t x = 0; x < q.width; ++x) {
      const auto src = flow_full.index(y * s, x * s);
      q.dx[q.index(y, x)] = flow_full.dx[src] / static_cast<float>(s);
      q.dy[q.index(y, x)] = flow_full.dy[src] / static_cast<float>(s);
    }
  }
  return q;
}

DisplacementMap quarter_displacement(const FlowField& flow_full, int max_displacement) {
  const FlowField q = quarter_scale_flow(flow_full);
  DisplacementMap w(q.height, q.width);
  for (std::size_t i = 0; i < q.dx.size(); ++i) {
    w.dx[i] = std::clamp(round_half_away(q.dx[i]), -max_displacement, max_displacement);
    w.dy[i] = std::clamp(round_half_away(q.dy[i]), -max_displacement, max_displacement);
  }
  return w;
}

template <typename T>
CostVolume<T> gt_cost_volume(const FlowField& flow_full, int max_displacement) {
  if (max_displacement < 1) throw LossError("gt_cost_volume: max displacement must be >= 1");
  if (!flow_full.finite()) throw LossError("gt_cost_volume: flow contains non-finite values");
  const DisplacementMap w = quarter_displacement(flow_full, max_displacement);
  const std::int64_t plane = w.height * w.width;
  Tensor<T> onehot(Shape{cost_channels(max_displacement), w.height, w.width});
  for (std::int64_t p = 0; p < plane; ++p) {
    const auto i = static_cast<std::size_t>(p);
    onehot[displacement_to_channel(w.dx[i], w.dy[i], max_displacement) * plane + p] = T{1};
  }
  return {Var<T>(std::move(onehot), false), max_displacement};
}

template <typename T>
Var<T> motion_loss(const std::vector<CostVolume<T>>& stack_costs, const CostVolume<T>& target) {
  const auto& ts = target.values.shape();
  if (ts.rank() != 3 || ts.channels() != cost_channels(target.max_displacement)) {
    throw ShapeError("motion_loss: target " + ts.str() + " is not a cost volume for D = " +
                     std::to_string(target.max_displacement));
  }
  const std::int64_t k_count = ts.channels();
  const std::int64_t plane = ts.height() * ts.width();
  const Tensor<T>& gt = target.values.value();

  // Resolve the one-hot target to a channel per pixel.
  std::vector<std::int64_t> label(static_cast<std::size_t>(plane), -1);
  for (std::int64_t p = 0; p < plane; ++p) {
    int ones = 0;
    for (std::int64_t k = 0; k < k_count; ++k) {
      const T v = gt[k * plane + p];
      if (v == T{1}) {
        ++ones;
        label[static_cast<std::size_t>(p)] = k;
      } else if (v != T{0}) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw LossError("motion_loss: target is not one-hot at pixel " + std::to_string(p));
  }

  std::vector<Var<T>> inputs;
  for (const auto& c : stack_costs) {
    require_same_shape(c.values.shape(), ts, "motion_loss");
    inputs.push_back(c.values);
  }

  // Log-softmax with the max subtracted; the softmax is kept for backward.
  std::vector<std::vector<T>> softmax(inputs.size());
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(k_count));
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Tensor<T>& logits = inputs[n].value();
    auto& sm = softmax[n];
    sm.resize(static_cast<std::size_t>(k_count * plane));
    for (std::int64_t p = 0; p < plane; ++p) {
      double top = -INFINITY;
      for (std::int64_t k = 0; k < k_count; ++k) top = std::max(top, static_cast<double>(logits[k * plane + p]));
      double z = 0.0;
      for (std::int64_t k = 0; k < k_count; ++k) {
        row[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(logits[k * plane + p]) - top);
        z += row[static_cast<std::size_t>(k)];
      }
      const auto y = label[static_cast<std::size_t>(p)];
      total -= static_cast<double>(logits[y * plane + p]) - top - std::log(z);
      for (std::int64_t k = 0; k < k_count; ++k) sm[static_cast<std::size_t>(k * plane + p)] = static_cast<T>(row[static_cast<std::size_t>(k)] / z);
    }
  }
  Tensor<T> value(Shape{1}, static_cast<T>(total / static_cast<double>(plane)));

  return make_result<T>(std::move(value), inputs,
                        [softmax = std::move(softmax), label = std::move(label), plane](Node<T>& self) {
                          const T scale = self.grad[0] / static_cast<T>(plane);
                          for (std::size_t n = 0; n < self.parents.size(); ++n) {
                            auto& parent = *self.parents[n];
                            if (!parent.requires_grad) continue;
                            auto g = parent.grad_buffer().data();
                            const auto& sm = softmax[n];
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * sm[i];
                            for (std::int64_t p = 0; p < plane; ++p) g[static_cast<std::size_t>(label[static_cast<std::size_t>(p)] * plane + p)] -= scale;
                          }
                        });
}

template <typename T>
Var<T> total_loss(const Var<T>& deblur, const Var<T>& motion, double alpha, bool enable_motion_loss) {
  scalar_of(deblur, "deblur loss");
  if (!std::isfinite(alpha)) throw LossError("total_loss: alpha is not finite");
  if (!enable_motion_loss || !motion.defined()) return deblur;
  const T m = scalar_of(motion, "motion loss");
  Tensor<T> value(Shape{1}, deblur.value()[0] + static_cast<T>(alpha) * m);
  return make_result<T>(std::move(value), {deblur, motion}, [alpha](Node<T>& self) {
    const T dy = self.grad[0];
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer()[0] += dy;
    if (self.parents[1]->requires_grad) self.parents[1]->grad_buffer()[0] += static_cast<T>(alpha) * dy;
  });
}

#define MTU_INSTANTIATE_LOSSES(T)                                                                           \
  template Var<T> deblur_loss<T>(const std::vector<Var<T>>&, const Tensor<T>&, const std::vector<double>&); \
  template CostVolume<T> gt_cost_volume<T>(const FlowField&, int);                                          \
  template Var<T> motion_loss<T>(const std::vector<CostVolume<T>>&, const CostVolume<T>&);                  \
  template Var<T> total_loss<T>(const Var<T>&, const Var<T>&, double, bool);

MTU_INSTANTIATE_LOSSES(float)
MTU_INSTANTIATE_LOSSES(double)

}  // namespace mtu
