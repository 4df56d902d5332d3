#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mtu/metrics.hpp"

using namespace mtu;

namespace {

ImagePlane random_image(std::int64_t h, std::int64_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImagePlane img(h, w, 3);
  for (auto& v : img.values) v = u(rng);
  return img;
}

data::VideoFrames toy_video(int index, double speed = 4.0) {
  data::SynthOptions o;
  o.seed = 71;
  o.videos = 2;
  o.frames = 5;
  o.size = 48;
  o.max_speed = speed;
  o.max_displacement = 4;
  return data::synthesize_video(o, index);
}

}  // namespace

TEST_CASE("PSNR: hand values, cap and symmetry") {
  ImagePlane a(2, 2, 3, 0.5f);
  ImagePlane b(2, 2, 3, 0.6f);
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(metrics::psnr(a, a) == metrics::kPsnrCap);
  std::mt19937_64 rng(72);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_image(12, 12, rng);
    const auto y = random_image(12, 12, rng);
    CHECK(metrics::psnr(x, y) == metrics::psnr(y, x));
    CHECK(metrics::psnr(x, y) < metrics::kPsnrCap);
  }
  CHECK_THROWS_AS(metrics::psnr(a, ImagePlane(2, 3, 3)), ShapeError);
}

TEST_CASE("SSIM: closed form on constant images") {
  const double c1 = 0.01 * 0.01;
  for (auto [p, q] : {std::pair{0.0f, 1.0f}, std::pair{0.25f, 0.75f}, std::pair{0.4f, 0.4f}}) {
    const ImagePlane a(16, 16, 3, p);
    const ImagePlane b(16, 16, 3, q);
    const double want = (2.0 * p * q + c1) / (static_cast<double>(p) * p + static_cast<double>(q) * q + c1);
    CHECK(metrics::ssim(a, b) == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK(metrics::ssim(ImagePlane(11, 11, 3, 0.0f), ImagePlane(11, 11, 3, 1.0f)) ==
        doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));
  CHECK_THROWS_AS(metrics::ssim(ImagePlane(10, 20, 3), ImagePlane(10, 20, 3)), std::invalid_argument);
}

TEST_CASE("SSIM is symmetric and maximal at identity") {
  std::mt19937_64 rng(73);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_image(16, 20, rng);
    auto y = x;
    for (auto& v : y.values) v = std::clamp(v + 0.1f * (static_cast<float>(rng() % 1000) / 1000.0f - 0.5f), 0.0f, 1.0f);
    CHECK(metrics::ssim(x, y) == doctest::Approx(metrics::ssim(y, x)).epsilon(1e-12));
    CHECK(metrics::ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::ssim(x, y) < 1.0);
  }
}

TEST_CASE("area downsampling averages blocks") {
  ImagePlane img(4, 8, 1);
  for (std::int64_t x = 0; x < 8; ++x)
    for (std::int64_t y = 0; y < 4; ++y) img.at(0, y, x) = x < 4 ? 0.0f : 1.0f;
  img.at(0, 0, 0) = 0.8f;
  const auto d = metrics::downsample_area(img);
  CHECK(d.height == 1);
  CHECK(d.width == 2);
  CHECK(d.at(0, 0, 0) == doctest::Approx(0.05));
  CHECK(d.at(0, 0, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(metrics::downsample_area(ImagePlane(6, 8, 1)), ShapeError);
}

TEST_CASE("alignment accuracy") {
  std::mt19937_64 rng(74);
  const auto frame = random_image(48, 48, rng);

  SUBCASE("a static pair with zero displacement reaches the cap") {
    const auto s = metrics::alignment_accuracy(frame, frame, DisplacementMap(12, 12));
    CHECK(s.psnr == metrics::kPsnrCap);
    CHECK(s.ssim == doctest::Approx(1.0));
    CHECK(s.valid_fraction == 1.0);
  }
  SUBCASE("a 4-pixel translation is aligned exactly by a 1-pixel quarter-scale shift") {
    ImagePlane cur(48, 48, 3);
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < 48; ++y)
        for (std::int64_t x = 0; x < 48; ++x) cur.at(c, y, x) = frame.at(c, y, std::min<std::int64_t>(x + 4, 47));
    const auto right = metrics::alignment_accuracy(frame, cur, DisplacementMap(12, 12, 1, 0));
    const auto wrong = metrics::alignment_accuracy(frame, cur, DisplacementMap(12, 12, -1, 0));
    CHECK(right.psnr == metrics::kPsnrCap);
    CHECK(right.valid_fraction == doctest::Approx(11.0 / 12.0));
    CHECK(wrong.psnr < 30.0);
  }
  SUBCASE("size mismatches are rejected") {
    CHECK_THROWS_AS(metrics::alignment_accuracy(frame, frame, DisplacementMap(6, 6)), ShapeError);
  }
}

TEST_CASE("endpoint error") {
  const DisplacementMap w(2, 2, 0, 0);
  const FlowField f(2, 2, FlowScale::quarter, 3.0f, 4.0f);
  CHECK(metrics::endpoint_error(w, f) == doctest::Approx(5.0));
  CHECK(metrics::endpoint_error(DisplacementMap(2, 2, 3, 4), f) == 0.0);
  CHECK_THROWS_AS(metrics::endpoint_error(DisplacementMap(1, 2), f), ShapeError);
}

TEST_CASE("evaluation report: identity baseline, rows and alignment presence") {
  const std::vector<data::VideoFrames> videos{toy_video(0), toy_video(1)};
  const std::vector<std::string> names{"a", "b"};
  const auto model = StackedModel<float>::create(make_config(2, 4, 4), 75);

  const auto report = metrics::evaluate_videos(model, names, videos);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].video == "a");
  CHECK(report.aggregate().video == "all");
  CHECK(report.aggregate().frames == 10);
  for (const auto& row : report.rows) {
    // Zero-initialised heads restore the input.
    CHECK(row.deblur_psnr == doctest::Approx(row.blurry_psnr).epsilon(1e-12));
    CHECK(row.deblur_ssim == doctest::Approx(row.blurry_ssim).epsilon(1e-12));
    CHECK(row.align_psnr.has_value());
    CHECK(row.endpoint_error.has_value());
  }
  CHECK(report.aggregate().blurry_psnr ==
        doctest::Approx((report.rows[0].blurry_psnr + report.rows[1].blurry_psnr) / 2.0));

  auto cfg = make_config(2, 4, 4);
  cfg.enable_motion_compensation = false;
  cfg.enable_motion_loss = false;
  const auto plain = StackedModel<float>::create(cfg, 75);
  const auto no_mc = metrics::evaluate_videos(plain, names, videos);
  CHECK_FALSE(no_mc.aggregate().align_psnr.has_value());
  CHECK_FALSE(no_mc.alignment_probed);
  metrics::EvalOptions probe;
  probe.probe_alignment = true;
  const auto probed = metrics::evaluate_videos(plain, names, videos, probe);
  CHECK(probed.alignment_probed);
  CHECK(probed.aggregate().align_psnr.has_value());
}

TEST_CASE("mean absolute difference") {
  ImagePlane a(1, 2, 1, 0.0f);
  ImagePlane b(1, 2, 1, 0.0f);
  b.values[1] = 0.5f;
  CHECK(metrics::mean_abs_difference({a}, {b}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(metrics::mean_abs_difference({a}, {}), std::invalid_argument);
}
