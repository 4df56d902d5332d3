#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>

#include "mtu/motion_compensation.hpp"
#include "mtu/types.hpp"

namespace mtu {

/// Uniform [0, 1) from the raw 64-bit output so that weight init does not
/// depend on the standard library's distribution implementation.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline constexpr double kReluGain = 1.4142135623730951;
inline constexpr double kLinearGain = 1.0;

/// A single 2-D convolution (or transposed convolution) with bias.
template <typename T>
struct ConvLayer {
  Var<T> weight;  // conv: (O, I, K, K); transposed: (I, O, K, K)
  Var<T> bias;    // (O)
  std::int64_t stride = 1;
  std::int64_t pad = 1;
  std::int64_t output_pad = 0;
  bool transposed = false;

  /// Uniform init with bound gain * sqrt(3 / fan_in); the default gain
  /// suits a following ReLU.
  static ConvLayer conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride, std::mt19937_64& rng,
                        double gain = kReluGain);
  /// Exact 2x upsampling: kernel 3, stride 2, pad 1, output padding 1.
  static ConvLayer upconv(std::int64_t in, std::int64_t out, std::mt19937_64& rng);

  Var<T> operator()(const Var<T>& x) const;
  std::int64_t parameter_count() const { return weight.value().numel() + bias.value().numel(); }
  void zero();
};

struct ForwardOptions {
  bool half_activations = false;
  /// Run the deblur head. Intermediate heads only serve training.
  bool compute_deblur_head = true;
  /// With motion compensation disabled, still run the (non-learnable)
  /// matching on the injected features so alignment can be measured.
  bool probe_alignment = false;
};

/// U-Net style encoder-decoder shared by both task heads. Every hidden
/// layer is `channels` wide.
template <typename T>
struct DetailNetwork {
  struct ResidualBlock {
    ConvLayer<T> first;
    ConvLayer<T> second;
  };

  ConvLayer<T> input;   // full resolution
  ConvLayer<T> down1;   // 1/2
  ConvLayer<T> down2;   // 1/4
  std::array<ResidualBlock, 4> blocks;
  ConvLayer<T> up1;     // back to 1/2, + down1 skip
  ConvLayer<T> up2;     // back to full, + input skip
  ConvLayer<T> output;  // linear

  Var<T> forward(const Var<T>& x, bool half_activations = false) const;
  std::int64_t parameter_count() const;
};

template <typename T>
DetailNetwork<T> build_detail_network(std::int64_t in_channels, std::int64_t channels, std::mt19937_64& rng);

template <typename T>
struct UnitParameters {
  int index = 1;  // 1-based stack index
  DetailNetwork<T> detail;
  ConvLayer<T> deblur;  // [f^n, warped] -> residual image
  ConvLayer<T> motion;  // stride-4 motion layer

  std::int64_t parameter_count() const { return detail.parameter_count() + deblur.parameter_count() + motion.parameter_count(); }
};

template <typename T>
UnitParameters<T> build_unit(int index, std::int64_t channels, std::mt19937_64& rng);

/// Concatenates the two inputs and runs the detail network.
template <typename T>
Var<T> detail_forward(const UnitParameters<T>& unit, const Var<T>& first, const Var<T>& second,
                      bool half_activations = false);

template <typename T>
struct DeblurOutput {
  Var<T> residual;
  Var<T> restored;
};

template <typename T>
DeblurOutput<T> deblur_forward(const UnitParameters<T>& unit, const Var<T>& detail, const Var<T>& warped,
                               const Var<T>& blurry, bool residual_learning, bool half_activations = false);

/// Adds the structure feature (if enabled) and applies the motion layer (or
/// plain stride-4 sampling when the layer is disabled).
template <typename T>
Var<T> structure_inject(const UnitParameters<T>& unit, const Var<T>& detail, const Var<T>& structure,
                        const ModelConfig& cfg, bool half_activations = false);

template <typename T>
struct UnitOutput {
  Var<T> detail;                      // f^n_t
  Var<T> injected;                    // \hat f^n_t
  Var<T> warped;                      // \tilde f^{N,n}_{t-1}
  std::optional<CostVolume<T>> cost;  // C^n_t
  std::optional<DisplacementMap> displacement;  // W^n_t at feature resolution
  Var<T> residual;                    // undefined when the head was not run
  Var<T> restored;
};

/// detail_forward -> structure_inject -> motion compensation -> deblur.
template <typename T>
UnitOutput<T> unit_forward(const UnitParameters<T>& unit, const Var<T>& first, const Var<T>& second,
                           const Var<T>& structure, const Var<T>& prev_injected, const Var<T>& prev_final,
                           const Var<T>& blurry, const ModelConfig& cfg, const DisplacementMap* reuse,
                           const ForwardOptions& opts);

template <typename T>
void round_to_half_inplace(Var<T>& v) {
  round_to_half_inplace(v.value());
}

}  // namespace mtu
