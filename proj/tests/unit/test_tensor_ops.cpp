#include <doctest.h>

#include <cmath>
#include <random>

#include "mtu/ops.hpp"
#include "support/oracles.hpp"

using namespace mtu;

namespace {

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution") {
  std::mt19937_64 rng(1);
  struct Case {
    std::int64_t c, h, w, o, k, stride, pad;
  };
  for (const Case cs : {Case{3, 7, 9, 4, 3, 1, 1}, Case{2, 8, 8, 5, 3, 2, 1}, Case{4, 16, 12, 3, 3, 4, 1},
                        Case{1, 5, 5, 2, 1, 1, 0}, Case{3, 6, 10, 2, 5, 1, 2}}) {
    const auto x = random_tensor(Shape{cs.c, cs.h, cs.w}, rng);
    const auto w = random_tensor(Shape{cs.o, cs.c, cs.k, cs.k}, rng);
    const auto b = random_tensor(Shape{cs.o}, rng);
    const auto got = ops::conv2d(Var<double>(x), Var<double>(w), Var<double>(b), cs.stride, cs.pad).value();
    const auto want = oracle::direct_conv2d(x, w, b, cs.stride, cs.pad);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("conv_transpose2d matches the scatter definition and doubles the size") {
  std::mt19937_64 rng(2);
  const auto x = random_tensor(Shape{3, 5, 7}, rng);
  const auto w = random_tensor(Shape{3, 4, 3, 3}, rng);
  const auto b = random_tensor(Shape{4}, rng);
  const auto got = ops::conv_transpose2d(Var<double>(x), Var<double>(w), Var<double>(b), 2, 1, 1).value();
  CHECK(got.shape() == Shape{4, 10, 14});
  CHECK(max_abs_diff(got, oracle::direct_conv_transpose2d(x, w, b, 2, 1, 1)) < 1e-12);
}

TEST_CASE("transposed convolution is the adjoint of the strided convolution") {
  std::mt19937_64 rng(3);
  const auto x = random_tensor(Shape{3, 8, 8}, rng);
  const auto y = random_tensor(Shape{5, 4, 4}, rng);
  // The conv weight is (O=5, C=3, K, K); the transposed op reads the same
  // layout as (C_in=5, O=3, K, K), so one tensor serves both.
  const auto w = random_tensor(Shape{5, 3, 3, 3}, rng);
  Tensor<double> zero5(Shape{5});
  Tensor<double> zero3(Shape{3});
  const auto ax = ops::conv2d(Var<double>(x), Var<double>(w), Var<double>(zero5), 2, 1).value();
  const auto aty = ops::conv_transpose2d(Var<double>(y), Var<double>(w), Var<double>(zero3), 2, 1, 1).value();
  CHECK(dot(ax, y) == doctest::Approx(dot(x, aty)).epsilon(1e-12));
}

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(4);
  const double h = 1e-6;
  Var<double> x(random_tensor(Shape{2, 6, 6}, rng), true);
  Var<double> w(random_tensor(Shape{3, 2, 3, 3}, rng), true);
  Var<double> b(random_tensor(Shape{3}, rng), true);
  Var<double> wt(random_tensor(Shape{6, 2, 3, 3}, rng), true);
  const Var<double> other(random_tensor(Shape{3, 3, 3}, rng));
  const Var<double> bt(random_tensor(Shape{2}, rng));
  const Var<double> probe(random_tensor(Shape{2, 3, 3}, rng));

  auto forward = [&] {
    Var<double> a = ops::relu(ops::conv2d(x, w, b, 2, 1));                            // (3, 3, 3)
    Var<double> s = ops::add(a, other);                                               // (3, 3, 3)
    Var<double> c = ops::concat_channels(s, ops::scale(s, 0.5));                      // (6, 3, 3)
    Var<double> u = ops::conv_transpose2d(c, wt, bt, 2, 1, 1);                       // (2, 6, 6)
    Var<double> d = ops::subsample(u, 2);                                             // (2, 3, 3)
    Var<double> sq = ops::relu(ops::add(d, probe));
    return ops::sum(ops::concat_channels(sq, ops::scale(d, -0.3)));
  };
  backward(forward());

  auto worst_error = [&](Var<double>& v) {
    double worst = 0.0;
    NoGradGuard g;
    for (std::int64_t i = 0; i < v.value().numel(); ++i) {
      const double orig = v.value()[i];
      v.value()[i] = orig + h;
      const double up = forward().value()[0];
      v.value()[i] = orig - h;
      const double down = forward().value()[0];
      v.value()[i] = orig;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - v.grad()[i]));
    }
    return worst;
  };
  CHECK(worst_error(x) < 1e-6);
  CHECK(worst_error(w) < 1e-6);
  CHECK(worst_error(b) < 1e-6);
  CHECK(worst_error(wt) < 1e-6);
}

TEST_CASE("no graph is recorded under NoGradGuard") {
  Var<double> x(Tensor<double>(Shape{1, 2, 2}, 1.0), true);
  NoGradGuard g;
  const auto y = ops::relu(x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("binary16 rounding") {
  CHECK(round_to_half(1.0f) == 1.0f);
  CHECK(round_to_half(65504.0f) == 65504.0f);
  CHECK(round_to_half(1.0f / 3.0f) == 0.333251953125f);
  CHECK(round_to_half(1.0f + 1.0f / 4096.0f) == 1.0f);  // below half an ulp (2^-11)
  CHECK(round_to_half(1.0f + 3.0f / 2048.0f) == 1.0f + 2.0f / 1024.0f);  // ties to even
  CHECK(round_to_half(1e-9f) == 0.0f);
  CHECK(std::isinf(round_to_half(1e6f)));
  CHECK(half_bits_to_float(float_to_half_bits(-2.5f)) == -2.5f);
  CHECK(float_to_half_bits(1.0f) == 0x3C00);
}

TEST_CASE("memory statistics follow tensor lifetimes") {
  const auto before = MemoryStats::live_bytes();
  {
    Tensor<float> t(Shape{1000});
    CHECK(MemoryStats::live_bytes() == before + 1000 * sizeof(float));
  }
  CHECK(MemoryStats::live_bytes() == before);
}

TEST_CASE("shape errors name the shapes") {
  Var<double> a(Tensor<double>(Shape{1, 2, 2}));
  Var<double> b(Tensor<double>(Shape{1, 3, 2}));
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::concat_channels(a, b), ShapeError);
}
