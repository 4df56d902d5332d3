#include "mtu/multi_task_unit.hpp"

#include <cmath>

#include "mtu/ops.hpp"

namespace mtu {

namespace {

constexpr double kResidualBranchGain = 0.1;
constexpr double kDetailOutputGain = 0.5;

template <typename T>
Var<T> uniform_parameter(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
  return Var<T>(std::move(t), true);
}

template <typename T>
Var<T> maybe_half(Var<T> v, bool half) {
  if (half) round_to_half_inplace(v.value());
  return v;
}

}  // namespace

template <typename T>
ConvLayer<T> ConvLayer<T>::conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                                std::mt19937_64& rng, double gain) {
  ConvLayer layer;
  const double fan_in = static_cast<double>(in * kernel * kernel);
  layer.weight = uniform_parameter<T>(Shape{out, in, kernel, kernel}, gain * std::sqrt(3.0 / fan_in), rng);
  layer.bias = Var<T>(Tensor<T>(Shape{out}), true);
  layer.stride = stride;
  layer.pad = kernel / 2;
  return layer;
}

template <typename T>
ConvLayer<T> ConvLayer<T>::upconv(std::int64_t in, std::int64_t out, std::mt19937_64& rng) {
  ConvLayer layer;
  constexpr std::int64_t kernel = 3;
  constexpr std::int64_t stride = 2;
  // Each output pixel of a stride-2 transposed conv sees about a quarter of the taps.
  const double fan_in = static_cast<double>(in * kernel * kernel) / static_cast<double>(stride * stride);
  layer.weight = uniform_parameter<T>(Shape{in, out, kernel, kernel}, kReluGain * std::sqrt(3.0 / fan_in), rng);
  layer.bias = Var<T>(Tensor<T>(Shape{out}), true);
  layer.stride = stride;
  layer.pad = 1;
  layer.output_pad = 1;
  layer.transposed = true;
  return layer;
}

template <typename T>
Var<T> ConvLayer<T>::operator()(const Var<T>& x) const {
  if (transposed) return ops::conv_transpose2d(x, weight, bias, stride, pad, output_pad);
  return ops::conv2d(x, weight, bias, stride, pad);
}

template <typename T>
void ConvLayer<T>::zero() {
  weight.value().fill(T{0});
  bias.value().fill(T{0});
}

template <typename T>
Var<T> DetailNetwork<T>::forward(const Var<T>& x, bool half) const {
  const Var<T> e0 = maybe_half(ops::relu(input(x)), half);
  const Var<T> e1 = maybe_half(ops::relu(down1(e0)), half);
  Var<T> r = maybe_half(ops::relu(down2(e1)), half);
  for (const auto& block : blocks) {
    const Var<T> inner = maybe_half(ops::relu(block.first(r)), half);
    r = maybe_half(ops::add(r, maybe_half(block.second(inner), half)), half);
  }
  const Var<T> d1 = maybe_half(ops::add(maybe_half(ops::relu(up1(r)), half), e1), half);
  const Var<T> d0 = maybe_half(ops::add(maybe_half(ops::relu(up2(d1)), half), e0), half);
  return maybe_half(output(d0), half);
}

template <typename T>
std::int64_t DetailNetwork<T>::parameter_count() const {
  std::int64_t n = input.parameter_count() + down1.parameter_count() + down2.parameter_count() + up1.parameter_count() +
                   up2.parameter_count() + output.parameter_count();
  for (const auto& b : blocks) n += b.first.parameter_count() + b.second.parameter_count();
  return n;
}

template <typename T>
DetailNetwork<T> build_detail_network(std::int64_t in_channels, std::int64_t channels, std::mt19937_64& rng) {
  if (channels < 1 || in_channels < 1) throw std::invalid_argument("build_detail_network: channels must be >= 1");
  DetailNetwork<T> net;
  net.input = ConvLayer<T>::conv(in_channels, channels, 3, 1, rng);
  net.down1 = ConvLayer<T>::conv(channels, channels, 3, 2, rng);
  net.down2 = ConvLayer<T>::conv(channels, channels, 3, 2, rng);
  for (auto& b : net.blocks) {
    b.first = ConvLayer<T>::conv(channels, channels, 3, 1, rng);
    // Small residual branches keep the unrolled recurrence from amplifying.
    b.second = ConvLayer<T>::conv(channels, channels, 3, 1, rng, kResidualBranchGain);
  }
  net.up1 = ConvLayer<T>::upconv(channels, channels, rng);
  net.up2 = ConvLayer<T>::upconv(channels, channels, rng);
  net.output = ConvLayer<T>::conv(channels, channels, 3, 1, rng, kDetailOutputGain);
  return net;
}

template <typename T>
UnitParameters<T> build_unit(int index, std::int64_t channels, std::mt19937_64& rng) {
  UnitParameters<T> unit;
  unit.index = index;
  unit.detail = build_detail_network<T>(2 * channels, channels, rng);
  unit.deblur = ConvLayer<T>::conv(2 * channels, 3, 3, 1, rng);
  unit.deblur.zero();  // start from the identity restoration
  unit.motion = ConvLayer<T>::conv(channels, channels, 3, ModelConfig::kMotionStride, rng, kLinearGain);
  return unit;
}

template <typename T>
Var<T> detail_forward(const UnitParameters<T>& unit, const Var<T>& first, const Var<T>& second, bool half) {
  return unit.detail.forward(maybe_half(ops::concat_channels(first, second), half), half);
}

template <typename T>
DeblurOutput<T> deblur_forward(const UnitParameters<T>& unit, const Var<T>& detail, const Var<T>& warped,
                               const Var<T>& blurry, bool residual_learning, bool half) {
  require_same_shape(detail.shape(), warped.shape(), "deblur_forward features");
  const auto& bs = blurry.shape();
  if (bs.rank() != 3 || bs.height() != detail.shape().height() || bs.width() != detail.shape().width()) {
    throw ShapeError("deblur_forward: blurry frame " + bs.str() + " does not match features " + detail.shape().str());
  }
  DeblurOutput<T> out;
  out.residual = maybe_half(unit.deblur(ops::concat_channels(detail, warped)), half);
  out.restored = residual_learning ? maybe_half(ops::add(blurry, out.residual), half) : out.residual;
  return out;
}

template <typename T>
Var<T> structure_inject(const UnitParameters<T>& unit, const Var<T>& detail, const Var<T>& structure,
                        const ModelConfig& cfg, bool half) {
  require_same_shape(detail.shape(), structure.shape(), "structure_inject");
  const Var<T> mixed = cfg.enable_structure_injection_addition ? maybe_half(ops::add(detail, structure), half) : detail;
  if (cfg.enable_motion_layer) return maybe_half(unit.motion(mixed), half);
  return ops::subsample(mixed, static_cast<std::int64_t>(cfg.motion_stride));
}

template <typename T>
UnitOutput<T> unit_forward(const UnitParameters<T>& unit, const Var<T>& first, const Var<T>& second,
                           const Var<T>& structure, const Var<T>& prev_injected, const Var<T>& prev_final,
                           const Var<T>& blurry, const ModelConfig& cfg, const DisplacementMap* reuse,
                           const ForwardOptions& opts) {
  const bool half = opts.half_activations;
  UnitOutput<T> out;
  out.detail = detail_forward(unit, first, second, half);
  out.injected = structure_inject(unit, out.detail, structure, cfg, half);

  if (cfg.enable_motion_compensation) {
    auto motion = mc::motion_compensate(out.injected, prev_injected, prev_final, cfg.max_displacement, reuse);
    out.warped = maybe_half(std::move(motion.warped), half);
    if (motion.cost) {
      if (half) round_to_half_inplace(motion.cost->values);
      out.cost = std::move(motion.cost);
    }
    out.displacement = std::move(motion.displacement);
  } else {
    out.warped = prev_final;
    if (opts.probe_alignment) {
      NoGradGuard no_grad;
      const auto probe = mc::cost_volume(out.injected.detach(), prev_injected.detach(), cfg.max_displacement);
      out.displacement = mc::upsample_displacement(mc::argmax_displacement(probe.values.value(), cfg.max_displacement),
                                                   cfg.motion_stride);
    }
  }

  if (opts.compute_deblur_head) {
    auto deblur = deblur_forward(unit, out.detail, out.warped, blurry, cfg.enable_residual_learning, half);
    out.residual = std::move(deblur.residual);
    out.restored = std::move(deblur.restored);
  }
  return out;
}

#define MTU_INSTANTIATE_UNIT(T)                                                                                  \
  template struct ConvLayer<T>;                                                                                  \
  template struct DetailNetwork<T>;                                                                              \
  template DetailNetwork<T> build_detail_network<T>(std::int64_t, std::int64_t, std::mt19937_64&);              \
  template UnitParameters<T> build_unit<T>(int, std::int64_t, std::mt19937_64&);                                 \
  template Var<T> detail_forward<T>(const UnitParameters<T>&, const Var<T>&, const Var<T>&, bool);              \
  template DeblurOutput<T> deblur_forward<T>(const UnitParameters<T>&, const Var<T>&, const Var<T>&, const Var<T>&, \
                                             bool, bool);                                                        \
  template Var<T> structure_inject<T>(const UnitParameters<T>&, const Var<T>&, const Var<T>&, const ModelConfig&, \
                                      bool);                                                                     \
  template UnitOutput<T> unit_forward<T>(const UnitParameters<T>&, const Var<T>&, const Var<T>&, const Var<T>&,   \
                                         const Var<T>&, const Var<T>&, const Var<T>&, const ModelConfig&,        \
                                         const DisplacementMap*, const ForwardOptions&);

MTU_INSTANTIATE_UNIT(float)
MTU_INSTANTIATE_UNIT(double)

}  // namespace mtu
