#include "mtu/types.hpp"

#include <algorithm>
#include <cmath>

namespace mtu {

ImagePlane::ImagePlane(std::int64_t h, std::int64_t w, std::int64_t c, float fill)
    : height(h), width(w), channels(c), values(static_cast<std::size_t>(h * w * c), fill) {
  if (h <= 0 || w <= 0 || c <= 0) throw ShapeError("ImagePlane: dimensions must be positive");
}

ImagePlane ImagePlane::clamped() const {
  ImagePlane out = *this;
  for (auto& v : out.values) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

namespace {
std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}
}  // namespace

ImagePlane pad_reflect_to_multiple(const ImagePlane& img, std::int64_t multiple) {
  const std::int64_t h = (img.height + multiple - 1) / multiple * multiple;
  const std::int64_t w = (img.width + multiple - 1) / multiple * multiple;
  if (h == img.height && w == img.width) return img;
  ImagePlane out(h, w, img.channels);
  for (std::int64_t c = 0; c < img.channels; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, reflect(y, img.height), reflect(x, img.width));
  return out;
}

ImagePlane crop(const ImagePlane& img, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width) throw ShapeError("crop: window outside image");
  ImagePlane out(h, w, img.channels);
  for (std::int64_t c = 0; c < img.channels; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

bool FlowField::finite() const {
  auto ok = [](float v) { return std::isfinite(v); };
  return std::all_of(dx.begin(), dx.end(), ok) && std::all_of(dy.begin(), dy.end(), ok);
}

template <typename T>
void RecurrentState<T>::check(const ModelConfig& cfg, std::int64_t height, std::int64_t width) const {
  const Shape frame{3, height, width};
  require_same_shape(prev_blurry.shape(), frame, "state prev_blurry");
  require_same_shape(prev_restored.shape(), frame, "state prev_restored");
  require_same_shape(prev_final_detail.values.shape(), Shape{cfg.feature_channels, height, width}, "state prev_final_detail");
  if (prev_injected.size() != static_cast<std::size_t>(cfg.num_stacks)) {
    throw ShapeError("state prev_injected has " + std::to_string(prev_injected.size()) + " entries, expected " +
                     std::to_string(cfg.num_stacks));
  }
  const Shape quarter{cfg.feature_channels, height / cfg.motion_stride, width / cfg.motion_stride};
  for (const auto& f : prev_injected) require_same_shape(f.values.shape(), quarter, "state prev_injected");
}

template <typename T>
std::size_t RecurrentState<T>::bytes() const {
  std::size_t n = prev_blurry.bytes() + prev_restored.value().bytes() + prev_final_detail.values.value().bytes();
  for (const auto& f : prev_injected) n += f.values.value().bytes();
  return n;
}

template <typename T>
RecurrentState<T> RecurrentState<T>::detached() const {
  RecurrentState out;
  out.prev_blurry = prev_blurry;
  out.prev_restored = prev_restored.detach();
  out.prev_final_detail = {prev_final_detail.values.detach(), prev_final_detail.role};
  for (const auto& f : prev_injected) out.prev_injected.push_back({f.values.detach(), f.role});
  return out;
}

template struct RecurrentState<float>;
template struct RecurrentState<double>;

}  // namespace mtu
