#include "mtu/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "mtu/losses.hpp"

namespace mtu::metrics {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const ImagePlane& a, const ImagePlane& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.channels) + "x" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " + std::to_string(b.channels) + "x" +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-mode separable filter of one channel.
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w) {
  static const auto g = gaussian_window();
  const std::int64_t oh = h - kWindow + 1;
  const std::int64_t ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y * w + x + k)];
      rows[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>((y + k) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  return out;
}

// Per-channel SSIM maps over valid window positions, (C, h-10, w-10).
std::vector<std::vector<double>> ssim_maps(const ImagePlane& a, const ImagePlane& b) {
  if (a.height < kWindow || a.width < kWindow) {
    throw std::invalid_argument("ssim: images must be at least 11x11, got " + std::to_string(a.height) + "x" + std::to_string(a.width));
  }
  const std::int64_t h = a.height;
  const std::int64_t w = a.width;
  const auto plane = static_cast<std::size_t>(h * w);
  std::vector<std::vector<double>> maps;
  for (std::int64_t c = 0; c < a.channels; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a.values[static_cast<std::size_t>(c) * plane + i];
      y[i] = b.values[static_cast<std::size_t>(c) * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w);
    const auto my = filter_valid(y, h, w);
    const auto sxx = filter_valid(xx, h, w);
    const auto syy = filter_valid(yy, h, w);
    const auto sxy = filter_valid(xy, h, w);
    std::vector<double> map(mx.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      map[i] = ((2 * mx[i] * my[i] + kC1) * (2 * cov + kC2)) / ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

}  // namespace

double psnr(const ImagePlane& a, const ImagePlane& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.values.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImagePlane& a, const ImagePlane& b) {
  require_same(a, b, "ssim");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& map : ssim_maps(a, b)) {
    for (double v : map) total += v;
    count += map.size();
  }
  return total / static_cast<double>(count);
}

ImagePlane downsample_area(const ImagePlane& img, std::int64_t factor) {
  if (factor < 1 || img.height % factor != 0 || img.width % factor != 0) {
    throw ShapeError("downsample_area: " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " is not divisible by " + std::to_string(factor));
  }
  ImagePlane out(img.height / factor, img.width / factor, img.channels);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::int64_t c = 0; c < img.channels; ++c)
    for (std::int64_t y = 0; y < out.height; ++y)
      for (std::int64_t x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (std::int64_t dy = 0; dy < factor; ++dy)
          for (std::int64_t dx = 0; dx < factor; ++dx) acc += img.at(c, y * factor + dy, x * factor + dx);
        out.at(c, y, x) = static_cast<float>(acc * inv);
      }
  return out;
}

AlignmentScore alignment_accuracy(const ImagePlane& gt_prev, const ImagePlane& gt_cur, const DisplacementMap& w_quarter) {
  require_same(gt_prev, gt_cur, "alignment_accuracy");
  constexpr std::int64_t s = ModelConfig::kMotionStride;
  if (w_quarter.height * s != gt_cur.height || w_quarter.width * s != gt_cur.width) {
    throw ShapeError("alignment_accuracy: displacement map " + std::to_string(w_quarter.height) + "x" +
                     std::to_string(w_quarter.width) + " is not at 1/4 of the frame size");
  }
  const ImagePlane prev = downsample_area(gt_prev.clamped(), s);
  const ImagePlane cur = downsample_area(gt_cur.clamped(), s);
  const std::int64_t h = cur.height;
  const std::int64_t w = cur.width;

  ImagePlane warped(h, w, cur.channels);
  std::vector<char> valid(static_cast<std::size_t>(h * w), 0);
  std::size_t valid_count = 0;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const auto i = w_quarter.index(y, x);
      const std::int64_t sy = y + w_quarter.dy[i];
      const std::int64_t sx = x + w_quarter.dx[i];
      if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
      valid[i] = 1;
      ++valid_count;
      for (std::int64_t c = 0; c < cur.channels; ++c) warped.at(c, y, x) = prev.at(c, sy, sx);
    }

  AlignmentScore score;
  score.valid_fraction = static_cast<double>(valid_count) / static_cast<double>(h * w);
  if (valid_count == 0) return score;

  double se = 0.0;
  for (std::int64_t c = 0; c < cur.channels; ++c)
    for (std::int64_t p = 0; p < h * w; ++p) {
      if (!valid[static_cast<std::size_t>(p)]) continue;
      const double d = static_cast<double>(warped.values[static_cast<std::size_t>(c * h * w + p)]) -
                       static_cast<double>(cur.values[static_cast<std::size_t>(c * h * w + p)]);
      se += d * d;
    }
  const double mse = se / static_cast<double>(valid_count * static_cast<std::size_t>(cur.channels));
  score.psnr = mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));

  // SSIM over window positions whose centre pixel was validly warped.
  const auto maps = ssim_maps(warped, cur);
  const std::int64_t r = kWindow / 2;
  const std::int64_t mw = w - kWindow + 1;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& map : maps)
    for (std::size_t i = 0; i < map.size(); ++i) {
      const std::int64_t y = static_cast<std::int64_t>(i) / mw + r;
      const std::int64_t x = static_cast<std::int64_t>(i) % mw + r;
      if (!valid[static_cast<std::size_t>(y * w + x)]) continue;
      total += map[i];
      ++count;
    }
  score.ssim = count > 0 ? total / static_cast<double>(count) : 0.0;
  return score;
}

double endpoint_error(const DisplacementMap& w_quarter, const FlowField& flow_quarter) {
  if (w_quarter.height != flow_quarter.height || w_quarter.width != flow_quarter.width) {
    throw ShapeError("endpoint_error: displacement and flow sizes differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < w_quarter.dx.size(); ++i) {
    const double ex = w_quarter.dx[i] - static_cast<double>(flow_quarter.dx[i]);
    const double ey = w_quarter.dy[i] - static_cast<double>(flow_quarter.dy[i]);
    total += std::sqrt(ex * ex + ey * ey);
  }
  return total / static_cast<double>(w_quarter.dx.size());
}

double mean_abs_difference(const std::vector<ImagePlane>& a, const std::vector<ImagePlane>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mean_abs_difference: sequence lengths differ");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_same(a[i], b[i], "mean_abs_difference");
    for (std::size_t k = 0; k < a[i].values.size(); ++k) total += std::abs(static_cast<double>(a[i].values[k]) - b[i].values[k]);
    count += a[i].values.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

EvalReport evaluate_videos(const StackedModel<float>& model, const std::vector<std::string>& names,
                           const std::vector<data::VideoFrames>& videos, const EvalOptions& opts) {
  if (names.size() != videos.size()) throw std::invalid_argument("evaluate_videos: names and videos differ in length");
  if (videos.empty()) throw std::invalid_argument("evaluate_videos: nothing to evaluate");
  EvalReport report;
  report.precision = opts.precision;
  report.alignment_probed = opts.probe_alignment && !model.config.enable_motion_compensation;
  const bool alignment = model.config.enable_motion_compensation || opts.probe_alignment;

  struct Sums {
    std::size_t frames = 0, aligned = 0, flowed = 0;
    double dp = 0, ds = 0, bp = 0, bs = 0, ap = 0, as = 0, epe = 0;
  } all;

  auto finish = [&](const std::string& name, const Sums& s) {
    EvalRow row;
    row.video = name;
    row.frames = s.frames;
    const double n = static_cast<double>(s.frames);
    row.deblur_psnr = s.dp / n;
    row.deblur_ssim = s.ds / n;
    row.blurry_psnr = s.bp / n;
    row.blurry_ssim = s.bs / n;
    if (alignment && s.aligned > 0) {
      row.align_psnr = s.ap / static_cast<double>(s.aligned);
      row.align_ssim = s.as / static_cast<double>(s.aligned);
    }
    if (alignment && s.flowed > 0) row.endpoint_error = s.epe / static_cast<double>(s.flowed);
    report.rows.push_back(row);
  };

  VideoOptions vo;
  vo.precision = opts.precision;
  vo.probe_alignment = opts.probe_alignment;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& video = videos[v];
    if (video.sharp.size() != video.blurry.size()) throw std::invalid_argument("video " + names[v] + " lacks ground truth frames");
    Sums s;
    std::size_t next = 0;
    run_video_streaming(
        model, [&]() -> std::optional<ImagePlane> { return next < video.blurry.size() ? std::optional(video.blurry[next++]) : std::nullopt; },
        [&](std::size_t t, ImagePlane restored, const std::optional<DisplacementMap>& w) {
          const ImagePlane out = restored.clamped();
          const ImagePlane& gt = video.sharp[t];
          s.dp += psnr(out, gt);
          s.ds += ssim(out, gt);
          s.bp += psnr(video.blurry[t].clamped(), gt);
          s.bs += ssim(video.blurry[t].clamped(), gt);
          ++s.frames;
          if (t == 0 || !w || !alignment) return;
          if (w->height * 4 != gt.height || w->width * 4 != gt.width) return;  // padded input; skip alignment
          if (w->height >= kWindow && w->width >= kWindow) {  // SSIM needs a full window
            const auto score = alignment_accuracy(video.sharp[t - 1], gt, *w);
            s.ap += score.psnr;
            s.as += score.ssim;
            ++s.aligned;
          }
          if (!video.flows.empty()) {
            s.epe += endpoint_error(*w, quarter_scale_flow(video.flows[t - 1]));
            ++s.flowed;
          }
        },
        vo);
    finish(names[v], s);
    all.frames += s.frames;
    all.aligned += s.aligned;
    all.flowed += s.flowed;
    all.dp += s.dp;
    all.ds += s.ds;
    all.bp += s.bp;
    all.bs += s.bs;
    all.ap += s.ap;
    all.as += s.as;
    all.epe += s.epe;
  }
  finish("all", all);
  return report;
}

EvalReport evaluate_dataset(const StackedModel<float>& model, const data::Dataset& dataset, const EvalOptions& opts) {
  const auto& entries = dataset.videos(opts.split);
  if (entries.empty()) throw std::invalid_argument("dataset has no " + data::to_string(opts.split) + " videos");
  std::vector<std::string> names;
  std::vector<data::VideoFrames> videos;
  for (const auto& e : entries) {
    names.push_back(e.name);
    videos.push_back(data::load_video(e, e.has_flow));
  }
  return evaluate_videos(model, names, videos, opts);
}

}  // namespace mtu::metrics
