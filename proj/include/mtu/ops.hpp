#pragma once

#include <cstdint>

#include "mtu/autograd.hpp"

namespace mtu::ops {

struct ConvGeometry {
  std::int64_t in_channels = 0;
  std::int64_t in_height = 0;
  std::int64_t in_width = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t pad = 1;
  std::int64_t out_height = 0;
  std::int64_t out_width = 0;

  static ConvGeometry forward(const Shape& input, std::int64_t kernel, std::int64_t stride, std::int64_t pad);
  std::int64_t patch_size() const { return in_channels * kernel * kernel; }
};

// Raw kernels shared by the differentiable ops.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols);
template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* input);

/// x: (C, H, W), weight: (O, C, K, K), bias: (O). Zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::int64_t stride, std::int64_t pad);

/// x: (C, H, W), weight: (C, O, K, K), bias: (O). Output is
/// (H - 1) * stride - 2 * pad + K + output_pad on each side.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::int64_t stride,
                        std::int64_t pad, std::int64_t output_pad);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Concatenation along the leading (channel) axis.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

/// Keeps every `stride`-th pixel starting at the top-left of each block.
template <typename T>
Var<T> subsample(const Var<T>& x, std::int64_t stride);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// Sum of all entries, as a one-element tensor.
template <typename T>
Var<T> sum(const Var<T>& x);

}  // namespace mtu::ops
