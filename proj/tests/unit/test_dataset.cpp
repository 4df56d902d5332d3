#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "mtu/dataset.hpp"
#include "mtu/image_io.hpp"
#include "support/temp_dir.hpp"

using namespace mtu;

namespace {

data::SynthOptions small_synth() {
  data::SynthOptions o;
  o.seed = 5;
  o.videos = 2;
  o.frames = 14;
  o.size = 32;
  o.max_speed = 6.0;
  o.max_displacement = 4;
  return o;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Every file under `root`, relative path -> contents.
std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = read_bytes(e.path());
  return out;
}

/// Mean squared difference between b(x) and a(x + d) over the pixels where
/// both exist.
double shifted_error(const ImagePlane& a, const ImagePlane& b, int dx, int dy) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::int64_t c = 0; c < a.channels; ++c)
    for (std::int64_t y = 0; y < a.height; ++y)
      for (std::int64_t x = 0; x < a.width; ++x) {
        const auto sy = y + dy;
        const auto sx = x + dx;
        if (sy < 0 || sy >= a.height || sx < 0 || sx >= a.width) continue;
        const double d = b.at(c, y, x) - a.at(c, sy, sx);
        sum += d * d;
        ++n;
      }
  return sum / static_cast<double>(n);
}

ImagePlane random_image(std::int64_t h, std::int64_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImagePlane img(h, w, 3);
  for (auto& v : img.values) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("synthesis is deterministic and bounded") {
  const auto opts = small_synth();
  const auto a = data::synthesize_video(opts, 1);
  const auto b = data::synthesize_video(opts, 1);
  const auto other = data::synthesize_video(opts, 0);
  REQUIRE(a.blurry.size() == 14);
  REQUIRE(a.flows.size() == 13);
  for (std::size_t t = 0; t < a.blurry.size(); ++t) {
    CHECK(a.blurry[t] == b.blurry[t]);
    CHECK(a.sharp[t] == b.sharp[t]);
    for (float v : a.blurry[t].values) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
  CHECK_FALSE(a.sharp[0] == other.sharp[0]);
}

TEST_CASE("zero velocity gives blurry frames equal to the sharp ones") {
  auto opts = small_synth();
  opts.max_speed = 0.0;
  const auto v = data::synthesize_video(opts, 0);
  for (std::size_t t = 0; t < v.blurry.size(); ++t) CHECK(v.blurry[t] == v.sharp[t]);
  for (const auto& f : v.flows) CHECK(f == FlowField(32, 32, FlowScale::full));
}

TEST_CASE("flow files describe the motion between sharp frames") {
  const auto opts = small_synth();
  const auto v = data::synthesize_video(opts, 0);
  for (std::size_t t = 1; t < v.sharp.size(); ++t) {
    const auto& f = v.flows[t - 1];
    // A single global translation per frame pair.
    for (std::size_t i = 0; i < f.dx.size(); ++i) {
      REQUIRE(f.dx[i] == f.dx[0]);
      REQUIRE(f.dy[i] == f.dy[0]);
    }
    CHECK(std::hypot(f.dx[0], f.dy[0]) <= opts.max_speed + 1e-6);
    // sharp_t(x) = sharp_{t-1}(x + flow): the best integer shift lies
    // within a pixel of the recorded flow.
    double best = INFINITY;
    int bx = 0;
    int by = 0;
    for (int dy = -7; dy <= 7; ++dy)
      for (int dx = -7; dx <= 7; ++dx) {
        const double e = shifted_error(v.sharp[t - 1], v.sharp[t], dx, dy);
        if (e < best) {
          best = e;
          bx = dx;
          by = dy;
        }
      }
    CHECK(std::abs(bx - f.dx[0]) < 1.0f);
    CHECK(std::abs(by - f.dy[0]) < 1.0f);
  }
}

TEST_CASE("synthesis options are validated") {
  auto opts = small_synth();
  opts.size = 63;
  CHECK_THROWS_AS(data::validate_synth_options(opts), data::DatasetError);
  opts = small_synth();
  opts.max_speed = 4.0 * opts.max_displacement + 0.5;
  CHECK_THROWS_AS(data::validate_synth_options(opts), data::DatasetError);
  opts = small_synth();
  opts.subframes = 0;
  CHECK_THROWS_AS(data::validate_synth_options(opts), data::DatasetError);
  CHECK(data::synthetic_test_count(4) == 1);
  CHECK(data::synthetic_test_count(8) == 2);
  CHECK(data::synthetic_test_count(1) == 0);
}

TEST_CASE("make_synthetic writes an ingestible, byte-reproducible dataset") {
  testing::TempDir a;
  testing::TempDir b;
  auto opts = small_synth();
  opts.videos = 4;
  const auto report = data::make_synthetic(opts, a.path());
  data::make_synthetic(opts, b.path());
  CHECK(report.train_videos == 3);
  CHECK(report.test_videos == 1);
  CHECK(report.frames_written == 4 * 14);
  CHECK(snapshot(a.path()) == snapshot(b.path()));

  const auto ds = data::ingest_dataset(a.path());
  CHECK(ds.train.size() == 3);
  CHECK(ds.test.size() == 1);
  CHECK(ds.frame_pairs() == 4 * 14);
  CHECK(ds.flow_available(data::Split::train));
  const auto loaded = data::load_video(ds.test[0], true);
  const auto direct = data::synthesize_video(opts, 3);
  REQUIRE(loaded.flows.size() == 13);
  CHECK(loaded.flows[4] == direct.flows[4]);
  // PNG stores 8 bits.
  for (std::size_t i = 0; i < direct.sharp[2].values.size(); ++i)
    REQUIRE(std::abs(loaded.sharp[2].values[i] - direct.sharp[2].values[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("ingestion reports missing pairs and missing flow") {
  testing::TempDir dir;
  auto opts = small_synth();
  opts.videos = 2;
  opts.frames = 20;
  data::make_synthetic(opts, dir.path());
  auto ds = data::ingest_dataset(dir.path());
  CHECK(ds.frame_pairs() == 40);

  std::filesystem::remove_all(dir.path() / "train" / "video_000" / "flow");
  ds = data::ingest_dataset(dir.path());
  CHECK_FALSE(ds.train[0].has_flow);
  CHECK_FALSE(ds.flow_available(data::Split::train));
  CHECK_THROWS_AS(data::load_video(ds.train[0], true), data::DatasetError);
  CHECK_NOTHROW(data::load_video(ds.train[0], false));

  const auto missing = dir.path() / "train" / "video_000" / "gt" / data::frame_name(7, "png");
  std::filesystem::remove(missing);
  try {
    data::ingest_dataset(dir.path());
    FAIL("expected an error");
  } catch (const data::DatasetError& e) {
    CHECK(std::string(e.what()).find("frame_00007") != std::string::npos);
  }

  testing::TempDir empty;
  CHECK_THROWS_AS(data::ingest_dataset(empty.path()), data::DatasetError);
}

TEST_CASE("clip sampling") {
  auto opts = small_synth();
  const std::vector<data::VideoFrames> videos{data::synthesize_video(opts, 0), data::synthesize_video(opts, 1)};
  std::mt19937_64 rng(51);

  SUBCASE("a full-frame crop starts at the origin and keeps temporal order") {
    for (int i = 0; i < 10; ++i) {
      const auto clip = data::sample_clip(videos, rng, 32);
      CHECK(clip.crop_x == 0);
      CHECK(clip.crop_y == 0);
      REQUIRE(clip.blurry.size() == 13);
      REQUIRE(clip.flows.size() == 12);
      for (std::size_t k = 0; k < 13; ++k) CHECK(clip.blurry[k] == videos[clip.video].blurry[clip.start + k]);
    }
  }
  SUBCASE("one crop is shared by every frame and flow") {
    std::set<std::pair<std::int64_t, std::int64_t>> origins;
    for (int i = 0; i < 20; ++i) {
      const auto clip = data::sample_clip(videos, rng, 16);
      origins.insert({clip.crop_y, clip.crop_x});
      const auto& v = videos[clip.video];
      for (std::size_t k = 0; k < 13; ++k) {
        CHECK(clip.sharp[k] == crop(v.sharp[clip.start + k], clip.crop_y, clip.crop_x, 16, 16));
        if (k > 0) CHECK(clip.flows[k - 1] == data::crop_flow(v.flows[clip.start + k - 1], clip.crop_y, clip.crop_x, 16, 16));
      }
    }
    CHECK(origins.size() > 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(data::sample_clip(videos, rng, 36), data::DatasetError);
    CHECK_THROWS_AS(data::sample_clip(videos, rng, 16, 15), data::DatasetError);
    CHECK_THROWS_AS(data::sample_clip({}, rng, 16), data::DatasetError);
  }
}

TEST_CASE("flips and transposes carry flow vectors exactly") {
  std::mt19937_64 rng(52);
  const auto base = random_image(12, 16, rng);
  const int dx = 2;
  const int dy = -1;
  // moved(x) = base(x + d), so the flow of `moved` relative to `base` is d.
  ImagePlane moved(12, 16, 3);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 12; ++y)
      for (std::int64_t x = 0; x < 16; ++x) {
        const auto sy = std::clamp<std::int64_t>(y + dy, 0, 11);
        const auto sx = std::clamp<std::int64_t>(x + dx, 0, 15);
        moved.at(c, y, x) = base.at(c, sy, sx);
      }
  const FlowField flow(12, 16, FlowScale::full, dx, dy);

  std::set<std::vector<float>> distinct;
  for (int op = 0; op < data::kDihedralCount; ++op) {
    const auto b = data::dihedral(base, op);
    const auto m = data::dihedral(moved, op);
    const auto f = data::dihedral(flow, op);
    CHECK(f.height == b.height);
    CHECK(f.width == b.width);
    const int fx = static_cast<int>(f.dx[0]);
    const int fy = static_cast<int>(f.dy[0]);
    CHECK(std::abs(fx) + std::abs(fy) == 3);
    // Away from the clamped border the transformed pair is again an exact
    // translation by the transformed flow.
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 2; y < b.height - 2; ++y)
        for (std::int64_t x = 2; x < b.width - 2; ++x) REQUIRE(m.at(c, y, x) == b.at(c, y + fy, x + fx));
    distinct.insert(b.values);
    CHECK(data::dihedral(data::dihedral(base, op & 3), op & 3) == base);
  }
  CHECK(distinct.size() == 8);
  CHECK(data::dihedral(base, 0) == base);
  CHECK_THROWS_AS(data::dihedral(base, 8), std::invalid_argument);
  CHECK_THROWS_AS(data::dihedral(flow, -1), std::invalid_argument);
}
