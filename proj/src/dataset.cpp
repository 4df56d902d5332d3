#include "mtu/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "mtu/image_io.hpp"

namespace mtu::data {

namespace fs = std::filesystem;

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

std::pair<std::int64_t, std::int64_t> png_size(const fs::path& path) {
  // Decoding the whole file is the simplest portable way to get the header.
  const ImagePlane img = io::read_png(path);
  return {img.height, img.width};
}

std::vector<VideoEntry> scan_split(const fs::path& dir) {
  std::vector<VideoEntry> out;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> video_dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) video_dirs.push_back(e.path());
  }
  std::sort(video_dirs.begin(), video_dirs.end());
  for (const auto& vdir : video_dirs) {
    VideoEntry v;
    v.name = vdir.filename().string();
    v.dir = vdir;
    if (!fs::is_directory(vdir / "blur")) throw DatasetError("video " + v.name + ": missing blur/ directory");
    if (!fs::is_directory(vdir / "gt")) throw DatasetError("video " + v.name + ": missing gt/ directory");
    std::size_t blur_count = 0;
    for (const auto& e : fs::directory_iterator(vdir / "blur")) blur_count += e.path().extension() == ".png";
    std::size_t gt_count = 0;
    for (const auto& e : fs::directory_iterator(vdir / "gt")) gt_count += e.path().extension() == ".png";
    const std::size_t n = std::max(blur_count, gt_count);
    if (n == 0) throw DatasetError("video " + v.name + ": no frames");
    for (std::size_t t = 0; t < n; ++t) {
      if (!fs::exists(v.blur_path(t))) throw DatasetError("video " + v.name + ": missing blurry frame " + v.blur_path(t).string());
      if (!fs::exists(v.gt_path(t))) throw DatasetError("video " + v.name + ": missing gt frame " + v.gt_path(t).string());
    }
    v.frame_count = n;
    std::tie(v.height, v.width) = png_size(v.blur_path(0));
    const auto gt_dims = png_size(v.gt_path(0));
    const auto last_dims = png_size(v.blur_path(n - 1));
    if (gt_dims != std::pair(v.height, v.width) || last_dims != gt_dims) {
      throw DatasetError("video " + v.name + ": inconsistent frame dimensions");
    }
    if (fs::is_directory(vdir / "flow")) {
      for (std::size_t t = 1; t < n; ++t) {
        if (!fs::exists(v.flow_path(t))) throw DatasetError("video " + v.name + ": missing flow file " + v.flow_path(t).string());
      }
      v.has_flow = true;
    }
    out.push_back(std::move(v));
  }
  return out;
}

// Separable Gaussian blur with wrap-around on an n x n periodic field.
std::vector<double> periodic_blur(const std::vector<double>& in, std::int64_t n, double sigma) {
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= total;
  auto wrap = [n](std::int64_t i) { return ((i % n) + n) % n; };
  std::vector<double> tmp(in.size());
  std::vector<double> out(in.size());
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (std::int64_t i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * in[static_cast<std::size_t>(y * n + wrap(x + i))];
      tmp[static_cast<std::size_t>(y * n + x)] = acc;
    }
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (std::int64_t i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(wrap(y + i) * n + x)];
      out[static_cast<std::size_t>(y * n + x)] = acc;
    }
  return out;
}

void normalize(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = (x - mean) / (sd > 0 ? sd : 1.0);
}

// Texture: blurred white noise at two scales, pushed through a sigmoid.
constexpr double kFineSigma = 2.0;
constexpr double kCoarseSigma = 6.0;
constexpr double kFineWeight = 0.3;
constexpr double kChannelWeight = 0.6;
constexpr double kEdgeSteepness = 8.0;
// Camera: speed swings within [1 - 2 * kSpeedSwing, 1] of the maximum while the heading turns steadily.
constexpr double kSpeedSwing = 0.25;
constexpr double kTurnPerFrame = 0.27;

struct Canvas {
  std::int64_t n = 0;
  std::vector<double> rgb;  // (3, n, n)

  double sample(int c, double y, double x) const {
    const double fy = std::floor(y);
    const double fx = std::floor(x);
    const double ay = y - fy;
    const double ax = x - fx;
    auto wrap = [this](double v) { return static_cast<std::int64_t>(((static_cast<std::int64_t>(v) % n) + n) % n); };
    const std::int64_t y0 = wrap(fy);
    const std::int64_t x0 = wrap(fx);
    const std::int64_t y1 = (y0 + 1) % n;
    const std::int64_t x1 = (x0 + 1) % n;
    const double* p = rgb.data() + c * n * n;
    return (1 - ay) * ((1 - ax) * p[y0 * n + x0] + ax * p[y0 * n + x1]) + ay * ((1 - ax) * p[y1 * n + x0] + ax * p[y1 * n + x1]);
  }
};

Canvas make_canvas(std::int64_t n, std::mt19937_64& rng) {
  auto noise_field = [&](double fine_sigma, double coarse_sigma) {
    std::vector<double> white(static_cast<std::size_t>(n * n));
    for (auto& w : white) w = uniform01(rng) - 0.5;
    auto fine = periodic_blur(white, n, fine_sigma);
    auto coarse = periodic_blur(white, n, coarse_sigma);
    normalize(fine);
    normalize(coarse);
    for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = kFineWeight * fine[i] + coarse[i];
    normalize(fine);
    return fine;
  };
  const auto shared = noise_field(kFineSigma, kCoarseSigma);
  Canvas canvas;
  canvas.n = n;
  canvas.rgb.resize(static_cast<std::size_t>(3 * n * n));
  for (int c = 0; c < 3; ++c) {
    const auto own = noise_field(kFineSigma * 1.25, kCoarseSigma * 1.2);
    for (std::int64_t i = 0; i < n * n; ++i) {
      const double v = shared[static_cast<std::size_t>(i)] + kChannelWeight * own[static_cast<std::size_t>(i)];
      // A steep sigmoid turns the smooth noise into blobs with sharp edges.
      canvas.rgb[static_cast<std::size_t>(c * n * n + i)] = 1.0 / (1.0 + std::exp(-kEdgeSteepness * v));
    }
  }
  return canvas;
}

ImagePlane render(const Canvas& canvas, std::int64_t size, const std::vector<std::pair<double, double>>& origins) {
  ImagePlane img(size, size, 3);
  const double inv = 1.0 / static_cast<double>(origins.size());
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        double acc = 0.0;
        for (const auto& [oy, ox] : origins) acc += canvas.sample(c, oy + static_cast<double>(y), ox + static_cast<double>(x));
        img.at(c, y, x) = static_cast<float>(std::clamp(acc * inv, 0.0, 1.0));
      }
  return img;
}

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string frame_name(std::size_t t, const char* extension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.%s", t, extension);
  return buf;
}

fs::path VideoEntry::blur_path(std::size_t t) const { return dir / "blur" / frame_name(t, "png"); }
fs::path VideoEntry::gt_path(std::size_t t) const { return dir / "gt" / frame_name(t, "png"); }
fs::path VideoEntry::flow_path(std::size_t t) const { return dir / "flow" / frame_name(t, "flo"); }

std::size_t Dataset::frame_pairs() const {
  std::size_t n = 0;
  for (const auto& v : train) n += v.frame_count;
  for (const auto& v : test) n += v.frame_count;
  return n;
}

bool Dataset::flow_available(Split s) const {
  const auto& vs = videos(s);
  return !vs.empty() && std::all_of(vs.begin(), vs.end(), [](const VideoEntry& v) { return v.has_flow; });
}

Dataset ingest_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
  Dataset ds;
  ds.root = root;
  ds.train = scan_split(root / "train");
  ds.test = scan_split(root / "test");
  if (ds.train.empty() && ds.test.empty()) throw DatasetError("dataset " + root.string() + " has no train/ or test/ videos");
  return ds;
}

VideoFrames load_video(const VideoEntry& video, bool with_flow) {
  if (with_flow && !video.has_flow) throw DatasetError("video " + video.name + " has no flow files");
  VideoFrames out;
  for (std::size_t t = 0; t < video.frame_count; ++t) {
    out.blurry.push_back(io::read_png(video.blur_path(t)));
    out.sharp.push_back(io::read_png(video.gt_path(t)));
    if (out.blurry.back().height != video.height || out.blurry.back().width != video.width ||
        !out.sharp.back().same_shape(out.blurry.back())) {
      throw DatasetError("video " + video.name + ": frame " + std::to_string(t) + " has inconsistent dimensions");
    }
    if (with_flow && t > 0) {
      FlowField f = io::read_flow(video.flow_path(t));
      if (f.height != video.height || f.width != video.width || f.scale != FlowScale::full) {
        throw DatasetError("video " + video.name + ": flow " + std::to_string(t) + " does not match the frame size");
      }
      out.flows.push_back(std::move(f));
    }
  }
  return out;
}

std::vector<ImagePlane> load_frame_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImagePlane> frames;
  for (const auto& f : files) frames.push_back(io::read_png(f));
  return frames;
}

void validate_synth_options(const SynthOptions& o) {
  if (o.size <= 0 || o.size % 4 != 0) throw DatasetError("synthetic frame size must be a positive multiple of 4, got " + std::to_string(o.size));
  if (o.videos < 1) throw DatasetError("need at least one video");
  if (o.frames < 1) throw DatasetError("need at least one frame per video");
  if (o.subframes < 1) throw DatasetError("need at least one exposure sample");
  if (o.max_displacement < 1) throw DatasetError("max displacement must be >= 1");
  if (!(o.max_speed >= 0.0) || o.max_speed > 4.0 * o.max_displacement) {
    throw DatasetError("max speed must lie in [0, 4 * D] = [0, " + std::to_string(4 * o.max_displacement) + "]");
  }
}

int synthetic_test_count(int videos) { return videos >= 2 ? std::max(1, videos / 4) : 0; }

VideoFrames synthesize_video(const SynthOptions& opts, int video_index) {
  validate_synth_options(opts);
  std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                    static_cast<std::uint32_t>(video_index)};
  std::mt19937_64 rng(seq);

  std::int64_t n = 128;
  while (n < 2 * opts.size) n *= 2;
  const Canvas canvas = make_canvas(n, rng);

  const double two_pi = 2.0 * std::numbers::pi;
  const double heading = two_pi * uniform01(rng);
  const double sway = 0.6 * uniform01(rng);
  const double speed_rate = 0.15 + 0.2 * uniform01(rng);
  const double speed_phase = two_pi * uniform01(rng);
  const double turn_rate = 0.1 + 0.15 * uniform01(rng);
  double oy = static_cast<double>(n) * uniform01(rng);
  double ox = static_cast<double>(n) * uniform01(rng);

  VideoFrames video;
  for (int t = 0; t < opts.frames; ++t) {
    const double speed = opts.max_speed * (1.0 - kSpeedSwing + kSpeedSwing * std::sin(speed_rate * t + speed_phase));
    const double angle = heading + sway * std::sin(turn_rate * t) + kTurnPerFrame * t;
    const double vx = speed * std::cos(angle);
    const double vy = speed * std::sin(angle);
    if (t > 0) {
      ox += vx;
      oy += vy;
      // The camera moved by v, so pixel x of frame t sits at x + v in frame t - 1.
      video.flows.emplace_back(opts.size, opts.size, FlowScale::full, static_cast<float>(vx), static_cast<float>(vy));
    }
    video.sharp.push_back(render(canvas, opts.size, {{oy, ox}}));
    // The exposure spans the motion into this frame, centred on the sharp instant.
    std::vector<std::pair<double, double>> exposure;
    for (int k = 0; k < opts.subframes; ++k) {
      const double s = opts.subframes == 1 ? 0.0 : static_cast<double>(k) / (opts.subframes - 1) - 0.5;
      exposure.emplace_back(oy + s * vy, ox + s * vx);
    }
    video.blurry.push_back(render(canvas, opts.size, exposure));
  }
  return video;
}

SynthReport make_synthetic(const SynthOptions& opts, const fs::path& out_root) {
  validate_synth_options(opts);
  const int n_test = synthetic_test_count(opts.videos);
  SynthReport report;
  for (int v = 0; v < opts.videos; ++v) {
    const bool is_test = v >= opts.videos - n_test;
    char name[32];
    std::snprintf(name, sizeof(name), "video_%03d", v);
    const fs::path dir = out_root / (is_test ? "test" : "train") / name;
    fs::create_directories(dir / "blur");
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "flow");
    const VideoFrames video = synthesize_video(opts, v);
    for (std::size_t t = 0; t < video.sharp.size(); ++t) {
      io::write_png(video.blurry[t], dir / "blur" / frame_name(t, "png"));
      io::write_png(video.sharp[t], dir / "gt" / frame_name(t, "png"));
      if (t > 0) io::write_flow(video.flows[t - 1], dir / "flow" / frame_name(t, "flo"));
    }
    report.frames_written += video.sharp.size();
    (is_test ? report.test_videos : report.train_videos) += 1;
  }
  return report;
}

FlowField crop_flow(const FlowField& flow, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
  if (y0 < 0 || x0 < 0 || y0 + h > flow.height || x0 + w > flow.width) throw DatasetError("crop_flow: window out of range");
  FlowField out(h, w, flow.scale);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      out.dx[out.index(y, x)] = flow.dx[flow.index(y0 + y, x0 + x)];
      out.dy[out.index(y, x)] = flow.dy[flow.index(y0 + y, x0 + x)];
    }
  return out;
}

ClipSample sample_clip(const std::vector<VideoFrames>& videos, std::mt19937_64& rng, std::int64_t crop_size,
                       std::size_t clip_length) {
  if (videos.empty()) throw DatasetError("sample_clip: no videos");
  ClipSample clip;
  clip.video = pick(rng, videos.size());
  const VideoFrames& v = videos[clip.video];
  if (v.blurry.size() < clip_length) {
    throw DatasetError("sample_clip: video " + std::to_string(clip.video) + " has " + std::to_string(v.blurry.size()) +
                       " frames, fewer than the clip length " + std::to_string(clip_length));
  }
  const bool with_flow = !v.flows.empty();
  const std::int64_t h = v.blurry.front().height;
  const std::int64_t w = v.blurry.front().width;
  if (crop_size > h || crop_size > w) throw DatasetError("sample_clip: crop larger than the frames");
  clip.start = pick(rng, v.blurry.size() - clip_length + 1);
  clip.crop_y = static_cast<std::int64_t>(pick(rng, static_cast<std::size_t>(h - crop_size + 1)));
  clip.crop_x = static_cast<std::int64_t>(pick(rng, static_cast<std::size_t>(w - crop_size + 1)));
  for (std::size_t i = 0; i < clip_length; ++i) {
    const std::size_t t = clip.start + i;
    clip.blurry.push_back(crop(v.blurry[t], clip.crop_y, clip.crop_x, crop_size, crop_size));
    clip.sharp.push_back(crop(v.sharp[t], clip.crop_y, clip.crop_x, crop_size, crop_size));
    if (with_flow && i > 0) clip.flows.push_back(crop_flow(v.flows[t - 1], clip.crop_y, clip.crop_x, crop_size, crop_size));
  }
  return clip;
}

namespace {

void check_op(int op) {
  if (op < 0 || op >= kDihedralCount) throw std::invalid_argument("dihedral: op must lie in [0, 8)");
}

/// Source position of output pixel (y, x) for a map of input size h x w.
std::pair<std::int64_t, std::int64_t> dihedral_source(int op, std::int64_t y, std::int64_t x, std::int64_t h,
                                                      std::int64_t w) {
  if (op & 4) std::swap(y, x);  // output is w x h
  if (op & 2) y = h - 1 - y;
  if (op & 1) x = w - 1 - x;
  return {y, x};
}

}  // namespace

ImagePlane dihedral(const ImagePlane& img, int op) {
  check_op(op);
  const bool transpose = (op & 4) != 0;
  ImagePlane out(transpose ? img.width : img.height, transpose ? img.height : img.width, img.channels);
  for (std::int64_t c = 0; c < img.channels; ++c)
    for (std::int64_t y = 0; y < out.height; ++y)
      for (std::int64_t x = 0; x < out.width; ++x) {
        const auto [sy, sx] = dihedral_source(op, y, x, img.height, img.width);
        out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

FlowField dihedral(const FlowField& flow, int op) {
  check_op(op);
  const bool transpose = (op & 4) != 0;
  FlowField out(transpose ? flow.width : flow.height, transpose ? flow.height : flow.width, flow.scale);
  for (std::int64_t y = 0; y < out.height; ++y)
    for (std::int64_t x = 0; x < out.width; ++x) {
      const auto [sy, sx] = dihedral_source(op, y, x, flow.height, flow.width);
      float dx = flow.dx[flow.index(sy, sx)];
      float dy = flow.dy[flow.index(sy, sx)];
      if (op & 1) dx = -dx;
      if (op & 2) dy = -dy;
      if (transpose) std::swap(dx, dy);
      out.dx[out.index(y, x)] = dx;
      out.dy[out.index(y, x)] = dy;
    }
  return out;
}

ClipSample dihedral(const ClipSample& clip, int op) {
  ClipSample out = clip;
  for (auto& f : out.blurry) f = dihedral(f, op);
  for (auto& f : out.sharp) f = dihedral(f, op);
  for (auto& f : out.flows) f = dihedral(f, op);
  return out;
}

}  // namespace mtu::data
