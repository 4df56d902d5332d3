#include "mtu/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

namespace mtu::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void check_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.rank() != rank) throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
}

}  // namespace

ConvGeometry ConvGeometry::forward(const Shape& input, std::int64_t kernel, std::int64_t stride, std::int64_t pad) {
  ConvGeometry g;
  g.in_channels = input.channels();
  g.in_height = input.height();
  g.in_width = input.width();
  g.kernel = kernel;
  g.stride = stride;
  g.pad = pad;
  g.out_height = (g.in_height + 2 * pad - kernel) / stride + 1;
  g.out_width = (g.in_width + 2 * pad - kernel) / stride + 1;
  if (g.out_height <= 0 || g.out_width <= 0) throw ShapeError("conv: input too small for kernel " + input.str());
  return g;
}

template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  const std::int64_t plane = g.out_height * g.out_width;
  // One bulk clear is far cheaper than clearing each padded row edge.
  std::fill(cols, cols + g.patch_size() * plane, T{0});
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    const T* src = input + c * g.in_height * g.in_width;
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * plane;
        // Output columns whose input x lies inside the image.
        const std::int64_t shift = kx - g.pad;
        std::int64_t ox_lo = 0;
        while (ox_lo < g.out_width && ox_lo * g.stride + shift < 0) ++ox_lo;
        std::int64_t ox_hi = g.out_width;
        while (ox_hi > ox_lo && (ox_hi - 1) * g.stride + shift >= g.in_width) --ox_hi;
        for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
          T* dst = row + oy * g.out_width;
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          const T* line = src + iy * g.in_width;
          if (g.stride == 1) {
            std::memcpy(dst + ox_lo, line + ox_lo + shift, static_cast<std::size_t>(ox_hi - ox_lo) * sizeof(T));
          } else {
            for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = line[ox * g.stride + shift];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* input) {
  const std::int64_t plane = g.out_height * g.out_width;
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    T* dst_plane = input + c * g.in_height * g.in_width;
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * plane;
        const std::int64_t shift = kx - g.pad;
        std::int64_t ox_lo = 0;
        while (ox_lo < g.out_width && ox_lo * g.stride + shift < 0) ++ox_lo;
        std::int64_t ox_hi = g.out_width;
        while (ox_hi > ox_lo && (ox_hi - 1) * g.stride + shift >= g.in_width) --ox_hi;
        for (std::int64_t oy = 0; oy < g.out_height; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          const T* src = row + oy * g.out_width;
          T* line = dst_plane + iy * g.in_width;
          if (g.stride == 1) {
            T* out = line + shift;
            for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) out[ox] += src[ox];
          } else {
            for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) line[ox * g.stride + shift] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::int64_t stride, std::int64_t pad) {
  check_rank(x.shape(), 3, "conv2d input");
  check_rank(weight.shape(), 4, "conv2d weight");
  const auto& ws = weight.shape();
  if (ws[1] != x.shape().channels() || ws[2] != ws[3]) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + x.shape().str());
  }
  const std::int64_t out_ch = ws[0];
  if (bias.shape().numel() != out_ch) throw ShapeError("conv2d: bias size mismatch");

  const ConvGeometry g = ConvGeometry::forward(x.shape(), ws[2], stride, pad);
  const std::int64_t plane = g.out_height * g.out_width;
  auto cols = Tensor<T>::uninitialized(Shape{g.patch_size(), plane});
  im2col(x.value().ptr(), g, cols.ptr());

  auto out = Tensor<T>::uninitialized(Shape{out_ch, g.out_height, g.out_width});
  MapMat<T> y(out.ptr(), out_ch, plane);
  y.noalias() = ConstMapMat<T>(weight.value().ptr(), out_ch, g.patch_size()) * ConstMapMat<T>(cols.ptr(), g.patch_size(), plane);
  for (std::int64_t o = 0; o < out_ch; ++o) y.row(o).array() += bias.value()[o];

  return make_result<T>(std::move(out), {x, weight, bias}, [g, out_ch, plane](Node<T>& self) {
    const T* dy = self.grad.ptr();
    ConstMapMat<T> dy_mat(dy, out_ch, plane);
    auto& xin = self.parents[0]->value;
    auto& w = self.parents[1]->value;
    auto cols_b = Tensor<T>::uninitialized(Shape{g.patch_size(), plane});
    if (self.parents[1]->requires_grad || self.parents[0]->requires_grad) {
      im2col(xin.ptr(), g, cols_b.ptr());
    }
    if (self.parents[2]->requires_grad) {
      auto& db = self.parents[2]->grad_buffer();
      for (std::int64_t o = 0; o < out_ch; ++o) db[o] += dy_mat.row(o).sum();
    }
    if (self.parents[1]->requires_grad) {
      MapMat<T> dw(self.parents[1]->grad_buffer().ptr(), out_ch, g.patch_size());
      dw.noalias() += dy_mat * ConstMapMat<T>(cols_b.ptr(), g.patch_size(), plane).transpose();
    }
    if (self.parents[0]->requires_grad) {
      MapMat<T> dcols(cols_b.ptr(), g.patch_size(), plane);
      dcols.noalias() = ConstMapMat<T>(w.ptr(), out_ch, g.patch_size()).transpose() * dy_mat;
      col2im_add(cols_b.ptr(), g, self.parents[0]->grad_buffer().ptr());
    }
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::int64_t stride,
                        std::int64_t pad, std::int64_t output_pad) {
  check_rank(x.shape(), 3, "conv_transpose2d input");
  check_rank(weight.shape(), 4, "conv_transpose2d weight");
  const auto& ws = weight.shape();
  const std::int64_t in_ch = x.shape().channels();
  if (ws[0] != in_ch || ws[2] != ws[3]) {
    throw ShapeError("conv_transpose2d: weight " + ws.str() + " incompatible with input " + x.shape().str());
  }
  const std::int64_t out_ch = ws[1];
  const std::int64_t k = ws[2];
  if (bias.shape().numel() != out_ch) throw ShapeError("conv_transpose2d: bias size mismatch");

  const std::int64_t h = x.shape().height();
  const std::int64_t w = x.shape().width();
  // The adjoint of a strided conv that maps the output grid back onto x.
  ConvGeometry g;
  g.in_channels = out_ch;
  g.in_height = (h - 1) * stride - 2 * pad + k + output_pad;
  g.in_width = (w - 1) * stride - 2 * pad + k + output_pad;
  g.kernel = k;
  g.stride = stride;
  g.pad = pad;
  g.out_height = h;
  g.out_width = w;
  const std::int64_t plane = h * w;

  auto cols = Tensor<T>::uninitialized(Shape{g.patch_size(), plane});
  MapMat<T>(cols.ptr(), g.patch_size(), plane).noalias() =
      ConstMapMat<T>(weight.value().ptr(), in_ch, g.patch_size()).transpose() * ConstMapMat<T>(x.value().ptr(), in_ch, plane);
  Tensor<T> out(Shape{out_ch, g.in_height, g.in_width});
  col2im_add(cols.ptr(), g, out.ptr());
  const std::int64_t out_plane = g.in_height * g.in_width;
  for (std::int64_t o = 0; o < out_ch; ++o) {
    T* p = out.ptr() + o * out_plane;
    const T b = bias.value()[o];
    for (std::int64_t i = 0; i < out_plane; ++i) p[i] += b;
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [g, in_ch, out_ch, plane, out_plane](Node<T>& self) {
    const T* dy = self.grad.ptr();
    if (self.parents[2]->requires_grad) {
      auto& db = self.parents[2]->grad_buffer();
      for (std::int64_t o = 0; o < out_ch; ++o) {
        T acc{0};
        for (std::int64_t i = 0; i < out_plane; ++i) acc += dy[o * out_plane + i];
        db[o] += acc;
      }
    }
    if (!self.parents[0]->requires_grad && !self.parents[1]->requires_grad) return;
    auto dcols = Tensor<T>::uninitialized(Shape{g.patch_size(), plane});
    im2col(dy, g, dcols.ptr());
    ConstMapMat<T> dcols_mat(dcols.ptr(), g.patch_size(), plane);
    if (self.parents[1]->requires_grad) {
      MapMat<T> dw(self.parents[1]->grad_buffer().ptr(), in_ch, g.patch_size());
      dw.noalias() += ConstMapMat<T>(self.parents[0]->value.ptr(), in_ch, plane) * dcols_mat.transpose();
    }
    if (self.parents[0]->requires_grad) {
      MapMat<T> dx(self.parents[0]->grad_buffer().ptr(), in_ch, plane);
      dx.noalias() += ConstMapMat<T>(self.parents[1]->value.ptr(), in_ch, g.patch_size()) * dcols_mat;
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  auto out = Tensor<T>::uninitialized(x.shape());
  auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& parent = *self.parents[0];
    auto g = parent.grad_buffer().data();
    auto in = parent.value.data();
    auto dy = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > T{0}) g[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  auto out = Tensor<T>::uninitialized(a.shape());
  auto pa = a.value().data();
  auto pb = b.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] + pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate_grad(self, 0, self.grad);
    accumulate_grad(self, 1, self.grad);
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  check_rank(sa, 3, "concat_channels");
  check_rank(sb, 3, "concat_channels");
  if (sa.height() != sb.height() || sa.width() != sb.width()) {
    throw ShapeError("concat_channels: resolution mismatch " + sa.str() + " vs " + sb.str());
  }
  auto out = Tensor<T>::uninitialized(Shape{sa.channels() + sb.channels(), sa.height(), sa.width()});
  std::copy(a.value().data().begin(), a.value().data().end(), out.data().begin());
  std::copy(b.value().data().begin(), b.value().data().end(), out.data().begin() + a.value().numel());
  const std::int64_t split = a.value().numel();
  return make_result<T>(std::move(out), {a, b}, [split](Node<T>& self) {
    auto dy = self.grad.data();
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[static_cast<std::size_t>(split) + i];
    }
  });
}

template <typename T>
Var<T> subsample(const Var<T>& x, std::int64_t stride) {
  const auto& s = x.shape();
  check_rank(s, 3, "subsample");
  const std::int64_t oh = (s.height() + stride - 1) / stride;
  const std::int64_t ow = (s.width() + stride - 1) / stride;
  Tensor<T> out(Shape{s.channels(), oh, ow});
  for (std::int64_t c = 0; c < s.channels(); ++c)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx) out.at(c, y, xx) = x.value().at(c, y * stride, xx * stride);
  return make_result<T>(std::move(out), {x}, [stride](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& os = self.value.shape();
    for (std::int64_t c = 0; c < os.channels(); ++c)
      for (std::int64_t y = 0; y < os.height(); ++y)
        for (std::int64_t xx = 0; xx < os.width(); ++xx) g.at(c, y * stride, xx * stride) += self.grad.at(c, y, xx);
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  auto out = Tensor<T>::uninitialized(x.shape());
  auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * factor;
  return make_result<T>(std::move(out), {x}, [factor](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer().data();
    auto dy = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * factor;
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (auto v : x.value().data()) acc += v;
  Tensor<T> out(Shape{1}, acc);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto g = self.parents[0]->grad_buffer().data();
    const T dy = self.grad[0];
    for (auto& v : g) v += dy;
  });
}

#define MTU_INSTANTIATE_OPS(T)                                                                              \
  template void im2col<T>(const T*, const ConvGeometry&, T*);                                             \
  template void col2im_add<T>(const T*, const ConvGeometry&, T*);                                         \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::int64_t, std::int64_t);      \
  template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::int64_t, std::int64_t, \
                                      std::int64_t);                                                       \
  template Var<T> relu<T>(const Var<T>&);                                                                  \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> subsample<T>(const Var<T>&, std::int64_t);                                               \
  template Var<T> scale<T>(const Var<T>&, T);                                                              \
  template Var<T> sum<T>(const Var<T>&);

MTU_INSTANTIATE_OPS(float)
MTU_INSTANTIATE_OPS(double)

}  // namespace mtu::ops
