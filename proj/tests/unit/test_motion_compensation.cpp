#include <doctest.h>

#include <cmath>
#include <random>

#include "mtu/motion_compensation.hpp"
#include "mtu/ops.hpp"
#include "support/oracles.hpp"

using namespace mtu;

namespace {

Var<double> var(const oracle::Field& f, bool grad = false) { return Var<double>(oracle::to_tensor(f), grad); }

}  // namespace

TEST_CASE("cost volume matches the brute-force definition") {
  std::mt19937_64 rng(11);
  for (int d : {1, 2, 3}) {
    const auto cur = oracle::random_field(rng, 4, 7, 9);
    const auto prev = oracle::random_field(rng, 4, 7, 9);
    const auto got = mc::cost_volume(var(cur), var(prev), d).values.value();
    const auto want = oracle::to_tensor(oracle::brute_force_cost_volume(cur, prev, d));
    REQUIRE(got.shape() == want.shape());
    CHECK(got.shape().channels() == cost_channels(d));
    double worst = 0.0;
    for (std::int64_t i = 0; i < got.numel(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("cost volume entries are cosines bounded by one") {
  std::mt19937_64 rng(12);
  const auto cur = oracle::random_field(rng, 3, 6, 6);
  const auto prev = oracle::random_field(rng, 3, 6, 6);
  const auto got = mc::cost_volume(var(cur), var(prev), 2).values.value();
  for (double v : got.data()) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
}

TEST_CASE("a pure translation is recovered at every interior pixel") {
  std::mt19937_64 rng(13);
  const int d = 3;
  const auto prev = oracle::random_field(rng, 6, 12, 12);
  for (auto [dx, dy] : {std::pair{2, -1}, std::pair{-3, 3}, std::pair{0, 0}, std::pair{1, 2}}) {
    // cur(x) = prev(x + (dx, dy)), so the true displacement is (dx, dy).
    const auto cur = oracle::translate(prev, dx, dy);
    const auto cost = mc::cost_volume(var(cur), var(prev), d).values.value();
    const auto w = mc::argmax_displacement(cost, d);
    for (int y = d; y < 12 - d; ++y)
      for (int x = d; x < 12 - d; ++x) {
        CHECK(w.dx[w.index(y, x)] == dx);
        CHECK(w.dy[w.index(y, x)] == dy);
        const auto k = displacement_to_channel(dx, dy, d);
        CHECK(cost.at(k, y, x) == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("targets outside the previous map count as zero vectors") {
  std::mt19937_64 rng(14);
  const int d = 2;
  const auto cur = oracle::random_field(rng, 3, 5, 5);
  const auto prev = oracle::random_field(rng, 3, 5, 5);
  const auto cost = mc::cost_volume(var(cur), var(prev), d).values.value();
  // At the top-left corner, every displacement with a negative component
  // leaves the map.
  for (int dy = -d; dy <= d; ++dy)
    for (int dx = -d; dx <= d; ++dx) {
      if (dx >= 0 && dy >= 0) continue;
      CHECK(cost.at(displacement_to_channel(dx, dy, d), 0, 0) == 0.0);
    }
}

TEST_CASE("channel layout round trips") {
  for (int d : {1, 4, 10}) {
    for (std::int64_t k = 0; k < cost_channels(d); ++k) {
      const auto [dx, dy] = channel_to_displacement(k, d);
      CHECK(std::abs(dx) <= d);
      CHECK(std::abs(dy) <= d);
      CHECK(displacement_to_channel(dx, dy, d) == k);
    }
  }
  CHECK(channel_to_displacement(0, 4) == std::pair{-4, -4});
  CHECK(channel_to_displacement(1, 4) == std::pair{-3, -4});
  CHECK(channel_to_displacement(9, 4) == std::pair{-4, -3});
}

TEST_CASE("argmax ties go to the smallest channel") {
  const int d = 1;
  Tensor<double> cost(Shape{cost_channels(d), 2, 2}, 0.5);
  cost.at(4, 0, 1) = 0.9;
  cost.at(7, 0, 1) = 0.9;
  const auto w = mc::argmax_displacement(cost, d);
  CHECK(w.dx[w.index(0, 0)] == -1);
  CHECK(w.dy[w.index(0, 0)] == -1);
  CHECK(w.dx[w.index(0, 1)] == 0);  // channel 4 is (0, 0)
  CHECK(w.dy[w.index(0, 1)] == 0);
}

TEST_CASE("displacement upsampling repeats and scales, downsampling inverts it") {
  DisplacementMap coarse(2, 3);
  for (std::size_t i = 0; i < coarse.dx.size(); ++i) {
    coarse.dx[i] = static_cast<int>(i) - 2;
    coarse.dy[i] = 1 - static_cast<int>(i);
  }
  const auto fine = mc::upsample_displacement(coarse, 4);
  CHECK(fine.height == 8);
  CHECK(fine.width == 12);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) {
      CHECK(fine.dx[fine.index(y, x)] == 4 * coarse.dx[coarse.index(y / 4, x / 4)]);
      CHECK(fine.dy[fine.index(y, x)] == 4 * coarse.dy[coarse.index(y / 4, x / 4)]);
    }
  CHECK(mc::downsample_displacement(fine, 4) == coarse);
}

TEST_CASE("warping gathers from the displaced position with zero fill") {
  std::mt19937_64 rng(15);
  const auto prev = oracle::random_field(rng, 2, 6, 7);
  const DisplacementMap shift(6, 7, 2, -1);
  const auto got = mc::warp_features(var(prev), shift).value();
  const auto want = oracle::to_tensor(oracle::translate(prev, 2, -1));
  for (std::int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("warping passes gradients to the gathered values only") {
  std::mt19937_64 rng(16);
  auto prev = var(oracle::random_field(rng, 1, 3, 3), true);
  const DisplacementMap shift(3, 3, 1, 0);
  backward(ops::sum(mc::warp_features(prev, shift)));
  // Column 0 is never gathered; columns 1 and 2 are gathered once each.
  for (int y = 0; y < 3; ++y) {
    CHECK(prev.grad().at(0, y, 0) == 0.0);
    CHECK(prev.grad().at(0, y, 1) == 1.0);
    CHECK(prev.grad().at(0, y, 2) == 1.0);
  }
}

TEST_CASE("cost volume gradients match central differences") {
  std::mt19937_64 rng(17);
  auto cur = var(oracle::random_field(rng, 3, 4, 4), true);
  auto prev = var(oracle::random_field(rng, 3, 4, 4), true);
  const Var<double> offset(oracle::to_tensor(oracle::random_field(rng, 9, 4, 4)));
  auto objective = [&] { return ops::sum(ops::relu(ops::add(mc::cost_volume(cur, prev, 1).values, offset))); };
  auto value = [&] {
    NoGradGuard g;
    return objective().value()[0];
  };
  backward(objective());

  const double h = 1e-6;
  for (Var<double>* v : {&cur, &prev}) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < v->value().numel(); ++i) {
      const double orig = v->value()[i];
      v->value()[i] = orig + h;
      const double up = value();
      v->value()[i] = orig - h;
      const double down = value();
      v->value()[i] = orig;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - v->grad()[i]));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("motion compensation reuses a supplied displacement without matching") {
  std::mt19937_64 rng(18);
  const auto cur = var(oracle::random_field(rng, 4, 2, 3));
  const auto prev = var(oracle::random_field(rng, 4, 2, 3));
  const auto prev_final = var(oracle::random_field(rng, 4, 8, 12));

  const auto matched = mc::motion_compensate(cur, prev, prev_final, 2);
  REQUIRE(matched.cost.has_value());
  CHECK(matched.displacement.height == 8);
  CHECK(matched.displacement.width == 12);
  CHECK(matched.displacement == mc::upsample_displacement(mc::argmax_displacement(matched.cost->values.value(), 2), 4));

  const auto reused = mc::motion_compensate(cur, prev, prev_final, 2, &matched.displacement);
  CHECK_FALSE(reused.cost.has_value());
  CHECK(reused.displacement == matched.displacement);
  const auto& a = matched.warped.value();
  const auto& b = reused.warped.value();
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}
