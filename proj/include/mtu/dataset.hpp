#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mtu/types.hpp"

namespace mtu::data {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };
std::string to_string(Split s);

struct VideoEntry {
  std::string name;
  std::filesystem::path dir;
  std::size_t frame_count = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  bool has_flow = false;

  std::filesystem::path blur_path(std::size_t t) const;
  std::filesystem::path gt_path(std::size_t t) const;
  /// Flow from frame t-1 to frame t; defined for t >= 1.
  std::filesystem::path flow_path(std::size_t t) const;
};

/// Index of root/{train,test}/<video>/{blur,gt[,flow]}/frame_%05d.png.
/// Frame numbers start at 0 and must be contiguous.
struct Dataset {
  std::filesystem::path root;
  std::vector<VideoEntry> train;
  std::vector<VideoEntry> test;

  const std::vector<VideoEntry>& videos(Split s) const { return s == Split::train ? train : test; }
  std::size_t frame_pairs() const;
  /// True when every video of the split ships flow files.
  bool flow_available(Split s) const;
};

std::string frame_name(std::size_t t, const char* extension);

/// Validates blur/gt pairing and per-video dimensions. A split directory
/// may be absent but not both.
Dataset ingest_dataset(const std::filesystem::path& root);

struct VideoFrames {
  std::vector<ImagePlane> blurry;
  std::vector<ImagePlane> sharp;
  std::vector<FlowField> flows;  // flows[t - 1] maps frame t to frame t - 1; empty without flow
};

VideoFrames load_video(const VideoEntry& video, bool with_flow);
/// Frames only, for inference on a bare directory of PNGs (sorted by name).
std::vector<ImagePlane> load_frame_directory(const std::filesystem::path& dir);

struct SynthOptions {
  std::uint64_t seed = 0;
  int videos = 4;
  int frames = 24;
  int size = 64;
  double max_speed = 8.0;    // full-resolution pixels per frame
  int subframes = 9;         // exposure samples per blurry frame
  int max_displacement = 10; // the D the data is meant for; speed must stay within 4D
};

/// Summary of what was written.
struct SynthReport {
  int train_videos = 0;
  int test_videos = 0;
  std::size_t frames_written = 0;
};

void validate_synth_options(const SynthOptions& opts);
/// Number of held-out videos: a quarter of them (at least one) when there
/// are two or more videos.
int synthetic_test_count(int videos);

/// Periodic textured canvas panned by a smoothly varying camera velocity.
/// Flow files record the exact inter-frame camera translation.
SynthReport make_synthetic(const SynthOptions& opts, const std::filesystem::path& out_root);

/// One synthetic video in memory (the generator behind make_synthetic).
VideoFrames synthesize_video(const SynthOptions& opts, int video_index);

struct ClipSample {
  std::vector<ImagePlane> blurry;
  std::vector<ImagePlane> sharp;
  std::vector<FlowField> flows;  // flows[i] maps frame i + 1 to frame i
  std::int64_t crop_y = 0;
  std::int64_t crop_x = 0;
  std::size_t video = 0;
  std::size_t start = 0;
};

inline constexpr std::size_t kClipLength = 13;

/// Uniform video, uniform window, one crop shared by every frame and flow.
ClipSample sample_clip(const std::vector<VideoFrames>& videos, std::mt19937_64& rng, std::int64_t crop_size,
                       std::size_t clip_length = kClipLength);

FlowField crop_flow(const FlowField& flow, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w);

/// One of the 8 symmetries of the square: bit 0 flips left-right, bit 1
/// flips top-bottom, bit 2 transposes (applied last). Flow vectors are
/// transformed along with their positions, so the result is exact.
inline constexpr int kDihedralCount = 8;
ImagePlane dihedral(const ImagePlane& img, int op);
FlowField dihedral(const FlowField& flow, int op);
ClipSample dihedral(const ClipSample& clip, int op);

}  // namespace mtu::data
