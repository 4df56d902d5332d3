#include "mtu/motion_compensation.hpp"

#include <algorithm>
#include <cmath>

namespace mtu::mc {

namespace {

// (C, H, W) -> (H, W, C) so that each pixel's channel vector is contiguous.
template <typename T>
std::vector<T> to_pixel_major(const Tensor<T>& t) {
  const auto& s = t.shape();
  const std::int64_t plane = s.height() * s.width();
  std::vector<T> out(static_cast<std::size_t>(t.numel()));
  for (std::int64_t c = 0; c < s.channels(); ++c)
    for (std::int64_t p = 0; p < plane; ++p) out[static_cast<std::size_t>(p * s.channels() + c)] = t[c * plane + p];
  return out;
}

template <typename T>
std::vector<T> pixel_norms(const std::vector<T>& pm, std::int64_t plane, std::int64_t channels) {
  std::vector<T> n(static_cast<std::size_t>(plane));
  for (std::int64_t p = 0; p < plane; ++p) {
    T acc{0};
    const T* v = pm.data() + p * channels;
    for (std::int64_t c = 0; c < channels; ++c) acc += v[c] * v[c];
    n[static_cast<std::size_t>(p)] = std::sqrt(acc);
  }
  return n;
}

}  // namespace

template <typename T>
CostVolume<T> cost_volume(const Var<T>& cur, const Var<T>& prev, int max_displacement) {
  if (max_displacement < 1) throw std::invalid_argument("cost_volume: max displacement must be >= 1");
  if (cur.shape().rank() != 3) throw ShapeError("cost_volume: expected (C, H, W) features");
  require_same_shape(cur.shape(), prev.shape(), "cost_volume");

  const std::int64_t ch = cur.shape().channels();
  const std::int64_t h = cur.shape().height();
  const std::int64_t w = cur.shape().width();
  const std::int64_t plane = h * w;
  const int d = max_displacement;
  const std::int64_t win = window_width(d);
  const std::int64_t k_count = win * win;

  const auto a = to_pixel_major(cur.value());
  const auto b = to_pixel_major(prev.value());
  const auto na = pixel_norms(a, plane, ch);
  const auto nb = pixel_norms(b, plane, ch);
  const T eps = static_cast<T>(kCosineEpsilon);

  Tensor<T> out(Shape{k_count, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t p = y * w + x;
      const T* va = a.data() + p * ch;
      for (int dy = -d; dy <= d; ++dy) {
        const std::int64_t qy = y + dy;
        for (int dx = -d; dx <= d; ++dx) {
          const std::int64_t qx = x + dx;
          const std::int64_t k = displacement_to_channel(dx, dy, d);
          if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;  // zero vector target
          const std::int64_t q = qy * w + qx;
          const T* vb = b.data() + q * ch;
          T dot{0};
          for (std::int64_t c = 0; c < ch; ++c) dot += va[c] * vb[c];
          const T den = std::max(na[static_cast<std::size_t>(p)] * nb[static_cast<std::size_t>(q)], eps);
          out[k * plane + p] = std::clamp(dot / den, T{-1}, T{1});
        }
      }
    }
  }

  Var<T> values = make_result<T>(std::move(out), {cur, prev}, [ch, h, w, d](Node<T>& self) {
    const std::int64_t plane = h * w;
    const auto a = to_pixel_major(self.parents[0]->value);
    const auto b = to_pixel_major(self.parents[1]->value);
    const auto na = pixel_norms(a, plane, ch);
    const auto nb = pixel_norms(b, plane, ch);
    const T eps = static_cast<T>(kCosineEpsilon);
    std::vector<T> ga(a.size(), T{0});
    std::vector<T> gb(b.size(), T{0});
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t p = y * w + x;
        const T* va = a.data() + p * ch;
        T* dva = ga.data() + p * ch;
        const T norm_a = na[static_cast<std::size_t>(p)];
        for (int dy = -d; dy <= d; ++dy) {
          const std::int64_t qy = y + dy;
          if (qy < 0 || qy >= h) continue;
          for (int dx = -d; dx <= d; ++dx) {
            const std::int64_t qx = x + dx;
            if (qx < 0 || qx >= w) continue;
            const T g = self.grad[displacement_to_channel(dx, dy, d) * plane + p];
            if (g == T{0}) continue;
            const std::int64_t q = qy * w + qx;
            const T* vb = b.data() + q * ch;
            T* dvb = gb.data() + q * ch;
            const T norm_b = nb[static_cast<std::size_t>(q)];
            const T prod = norm_a * norm_b;
            if (prod > eps) {
              T dot{0};
              for (std::int64_t c = 0; c < ch; ++c) dot += va[c] * vb[c];
              const T cosv = dot / prod;
              const T ka = cosv / (norm_a * norm_a);
              const T kb = cosv / (norm_b * norm_b);
              for (std::int64_t c = 0; c < ch; ++c) {
                dva[c] += g * (vb[c] / prod - ka * va[c]);
                dvb[c] += g * (va[c] / prod - kb * vb[c]);
              }
            } else {
              for (std::int64_t c = 0; c < ch; ++c) {
                dva[c] += g * vb[c] / eps;
                dvb[c] += g * va[c] / eps;
              }
            }
          }
        }
      }
    }
    auto scatter = [&](std::size_t idx, const std::vector<T>& pm) {
      auto& parent = *self.parents[idx];
      if (!parent.requires_grad) return;
      auto& gt = parent.grad_buffer();
      for (std::int64_t c = 0; c < ch; ++c)
        for (std::int64_t p = 0; p < plane; ++p) gt[c * plane + p] += pm[static_cast<std::size_t>(p * ch + c)];
    };
    scatter(0, ga);
    scatter(1, gb);
  });
  return {std::move(values), max_displacement};
}

template <typename T>
DisplacementMap argmax_displacement(const Tensor<T>& cost, int max_displacement) {
  if (cost.shape().rank() != 3 || cost.shape().channels() != cost_channels(max_displacement)) {
    throw ShapeError("argmax_displacement: cost volume " + cost.shape().str() + " does not have (2D+1)^2 channels for D = " +
                     std::to_string(max_displacement));
  }
  const std::int64_t h = cost.shape().height();
  const std::int64_t w = cost.shape().width();
  const std::int64_t plane = h * w;
  const std::int64_t k_count = cost.shape().channels();
  DisplacementMap out(h, w);
  for (std::int64_t p = 0; p < plane; ++p) {
    std::int64_t best = 0;
    T best_v = cost[p];
    for (std::int64_t k = 1; k < k_count; ++k) {
      const T v = cost[k * plane + p];
      if (v > best_v) {  // strict: earliest channel wins ties
        best_v = v;
        best = k;
      }
    }
    const auto [dx, dy] = channel_to_displacement(best, max_displacement);
    out.dx[static_cast<std::size_t>(p)] = dx;
    out.dy[static_cast<std::size_t>(p)] = dy;
  }
  return out;
}

DisplacementMap upsample_displacement(const DisplacementMap& coarse, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_displacement: factor must be >= 1");
  DisplacementMap out(coarse.height * factor, coarse.width * factor);
  for (std::int64_t y = 0; y < out.height; ++y) {
    for (std::int64_t x = 0; x < out.width; ++x) {
      const std::size_t src = coarse.index(y / factor, x / factor);
      out.dx[out.index(y, x)] = factor * coarse.dx[src];
      out.dy[out.index(y, x)] = factor * coarse.dy[src];
    }
  }
  return out;
}

DisplacementMap downsample_displacement(const DisplacementMap& fine, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample_displacement: factor must be >= 1");
  DisplacementMap out(fine.height / factor, fine.width / factor);
  for (std::int64_t y = 0; y < out.height; ++y) {
    for (std::int64_t x = 0; x < out.width; ++x) {
      const std::size_t src = fine.index(y * factor, x * factor);
      out.dx[out.index(y, x)] = fine.dx[src] / factor;
      out.dy[out.index(y, x)] = fine.dy[src] / factor;
    }
  }
  return out;
}

template <typename T>
Var<T> warp_features(const Var<T>& prev, const DisplacementMap& displacement) {
  const auto& s = prev.shape();
  if (s.rank() != 3 || displacement.height != s.height() || displacement.width != s.width()) {
    throw ShapeError("warp_features: displacement " + std::to_string(displacement.height) + "x" +
                     std::to_string(displacement.width) + " does not match features " + s.str());
  }
  const std::int64_t h = s.height();
  const std::int64_t w = s.width();
  const std::int64_t plane = h * w;
  // Source index per output pixel, -1 when the read falls outside.
  std::vector<std::int64_t> src(static_cast<std::size_t>(plane), -1);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::size_t i = displacement.index(y, x);
      const std::int64_t sy = y + displacement.dy[i];
      const std::int64_t sx = x + displacement.dx[i];
      if (sy >= 0 && sy < h && sx >= 0 && sx < w) src[i] = sy * w + sx;
    }
  }
  Tensor<T> out(s);
  for (std::int64_t c = 0; c < s.channels(); ++c) {
    const T* in = prev.value().ptr() + c * plane;
    T* o = out.ptr() + c * plane;
    for (std::int64_t p = 0; p < plane; ++p) {
      const auto j = src[static_cast<std::size_t>(p)];
      if (j >= 0) o[p] = in[j];
    }
  }
  return make_result<T>(std::move(out), {prev}, [src = std::move(src), plane](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const std::int64_t channels = self.value.shape().channels();
    for (std::int64_t c = 0; c < channels; ++c) {
      T* dst = g.ptr() + c * plane;
      const T* dy = self.grad.ptr() + c * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const auto j = src[static_cast<std::size_t>(p)];
        if (j >= 0) dst[j] += dy[p];
      }
    }
  });
}

template <typename T>
MotionResult<T> motion_compensate(const Var<T>& cur_injected, const Var<T>& prev_injected, const Var<T>& prev_final,
                                  int max_displacement, const DisplacementMap* reuse) {
  const std::int64_t fh = prev_final.shape().height();
  const std::int64_t fw = prev_final.shape().width();
  MotionResult<T> result;
  if (reuse != nullptr) {
    if (reuse->height != fh || reuse->width != fw) throw ShapeError("motion_compensate: reused displacement has the wrong size");
    result.displacement = *reuse;
  } else {
    auto cost = cost_volume(cur_injected, prev_injected, max_displacement);
    const std::int64_t ch = cur_injected.shape().height();
    if (ch == 0 || fh % ch != 0 || fh / ch != fw / cur_injected.shape().width()) {
      throw ShapeError("motion_compensate: injected features are not an integer downscale of the final detail map");
    }
    const int factor = static_cast<int>(fh / ch);
    result.displacement = upsample_displacement(argmax_displacement(cost.values.value(), max_displacement), factor);
    result.cost = std::move(cost);
  }
  result.warped = warp_features(prev_final, result.displacement);
  return result;
}

#define MTU_INSTANTIATE_MC(T)                                                                               \
  template CostVolume<T> cost_volume<T>(const Var<T>&, const Var<T>&, int);                                 \
  template DisplacementMap argmax_displacement<T>(const Tensor<T>&, int);                                   \
  template Var<T> warp_features<T>(const Var<T>&, const DisplacementMap&);                                  \
  template MotionResult<T> motion_compensate<T>(const Var<T>&, const Var<T>&, const Var<T>&, int,           \
                                                const DisplacementMap*);

MTU_INSTANTIATE_MC(float)
MTU_INSTANTIATE_MC(double)

}  // namespace mtu::mc
