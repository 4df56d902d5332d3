#include <doctest.h>

#include <random>

#include "mtu/multi_task_unit.hpp"
#include "mtu/ops.hpp"

using namespace mtu;

namespace {

Var<double> random_var(Shape s, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = n(rng);
  return Var<double>(std::move(t));
}

bool equal(const Tensor<double>& a, const Tensor<double>& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

/// Parameter count of the stated topology, from first principles: 3x3
/// kernels, uniform width c, 2c inputs to the detail network and the
/// deblur layer, 3 output colours.
std::int64_t expected_unit_parameters(std::int64_t c) {
  const auto conv = [](std::int64_t in, std::int64_t out) { return in * out * 9 + out; };
  const std::int64_t detail = conv(2 * c, c)           // input
                              + 2 * conv(c, c)         // two stride-2 convs
                              + 8 * conv(c, c)         // four residual blocks
                              + 2 * conv(c, c)         // two transposed convs
                              + conv(c, c);            // output
  return detail + conv(2 * c, 3) + conv(c, c);
}

}  // namespace

TEST_CASE("unit parameter count follows the topology") {
  std::mt19937_64 rng(21);
  for (std::int64_t c : {4, 8, 26}) {
    const auto unit = build_unit<double>(1, c, rng);
    CHECK(unit.parameter_count() == expected_unit_parameters(c));
  }
  const auto toy = build_unit<double>(1, 8, rng);
  CHECK(toy.parameter_count() < 100000);
}

TEST_CASE("most unit parameters live in the detail network; heads are single layers") {
  std::mt19937_64 rng(22);
  for (std::int64_t c : {8, 26, 48}) {
    const auto unit = build_unit<double>(1, c, rng);
    const double share = static_cast<double>(unit.detail.parameter_count()) / static_cast<double>(unit.parameter_count());
    CHECK(share > 0.85);
    CHECK(unit.deblur.weight.shape() == Shape{3, 2 * c, 3, 3});
    CHECK(unit.motion.weight.shape() == Shape{c, c, 3, 3});
    CHECK(unit.motion.stride == 4);
  }
}

TEST_CASE("units built from one generator own independent weights") {
  std::mt19937_64 rng(23);
  const auto a = build_unit<double>(1, 4, rng);
  const auto b = build_unit<double>(2, 4, rng);
  CHECK_FALSE(equal(a.detail.input.weight.value(), b.detail.input.weight.value()));
  CHECK(a.detail.input.weight.node() != b.detail.input.weight.node());
}

TEST_CASE("detail network keeps the input resolution") {
  std::mt19937_64 rng(24);
  const auto unit = build_unit<double>(1, 6, rng);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{8, 20}, std::pair{64, 64}}) {
    const auto f = detail_forward(unit, random_var(Shape{6, h, w}, rng), random_var(Shape{6, h, w}, rng));
    CHECK(f.shape() == Shape{6, h, w});
  }
}

TEST_CASE("a zeroed detail network maps zero inputs to zero") {
  std::mt19937_64 rng(25);
  auto unit = build_unit<double>(1, 4, rng);
  unit.detail.output.zero();
  const Var<double> zero(Tensor<double>(Shape{4, 8, 8}));
  const auto f = detail_forward(unit, zero, zero).value();
  for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("deblur head: identity at init, raw output without residual learning, plain addition") {
  std::mt19937_64 rng(26);
  auto unit = build_unit<double>(1, 4, rng);
  const auto detail = random_var(Shape{4, 8, 8}, rng);
  const auto warped = random_var(Shape{4, 8, 8}, rng);
  const auto blurry = random_var(Shape{3, 8, 8}, rng);

  const auto init = deblur_forward(unit, detail, warped, blurry, true);
  CHECK(equal(init.restored.value(), blurry.value()));

  unit.deblur.bias.value().fill(0.25);
  const auto raw = deblur_forward(unit, detail, warped, blurry, false);
  for (double v : raw.restored.value().data()) CHECK(v == 0.25);

  unit.deblur.bias.value().fill(0.1);
  const Var<double> half_grey(Tensor<double>(Shape{3, 8, 8}, 0.5));
  const auto added = deblur_forward(unit, detail, warped, half_grey, true);
  for (double v : added.restored.value().data()) CHECK(v == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(deblur_forward(unit, detail, random_var(Shape{4, 8, 4}, rng), blurry, true), ShapeError);
}

TEST_CASE("structure injection: quarter resolution, ablation switches") {
  std::mt19937_64 rng(27);
  const auto unit = build_unit<double>(1, 4, rng);
  const auto detail = random_var(Shape{4, 64, 64}, rng);
  const auto structure = random_var(Shape{4, 64, 64}, rng);
  const auto other_structure = random_var(Shape{4, 64, 64}, rng);
  ModelConfig cfg = make_config(2, 4, 2);

  const auto injected = structure_inject(unit, detail, structure, cfg);
  CHECK(injected.shape() == Shape{4, 16, 16});

  // Zero detail: the output depends on the structure only.
  const Var<double> zero(Tensor<double>(Shape{4, 64, 64}));
  const auto a = structure_inject(unit, zero, structure, cfg).value();
  const auto b = unit.motion(structure).value();
  CHECK(equal(a, b));

  cfg.enable_structure_injection_addition = false;
  CHECK(equal(structure_inject(unit, detail, structure, cfg).value(),
              structure_inject(unit, detail, other_structure, cfg).value()));

  cfg.enable_motion_layer = false;
  const auto sampled = structure_inject(unit, detail, structure, cfg).value();
  CHECK(equal(sampled, ops::subsample(detail, 4).value()));
}

TEST_CASE("unit forward wiring") {
  std::mt19937_64 rng(28);
  const auto unit = build_unit<double>(1, 4, rng);
  const auto first = random_var(Shape{4, 16, 16}, rng);
  const auto second = random_var(Shape{4, 16, 16}, rng);
  const auto structure = random_var(Shape{4, 16, 16}, rng);
  const auto prev_injected = random_var(Shape{4, 4, 4}, rng);
  const auto prev_final = random_var(Shape{4, 16, 16}, rng);
  const auto blurry = random_var(Shape{3, 16, 16}, rng);
  ModelConfig cfg = make_config(2, 4, 2);

  SUBCASE("zero previous detail features warp to zero") {
    const Var<double> zero(Tensor<double>(Shape{4, 16, 16}));
    const auto out = unit_forward(unit, first, second, structure, prev_injected, zero, blurry, cfg, nullptr, {});
    for (double v : out.warped.value().data()) CHECK(v == 0.0);
    REQUIRE(out.cost.has_value());
    CHECK(out.cost->values.shape() == Shape{25, 4, 4});
  }

  SUBCASE("a reused displacement is echoed and no cost volume is produced") {
    const DisplacementMap reuse(16, 16, 1, -2);
    const auto out = unit_forward(unit, first, second, structure, prev_injected, prev_final, blurry, cfg, &reuse, {});
    CHECK_FALSE(out.cost.has_value());
    REQUIRE(out.displacement.has_value());
    CHECK(*out.displacement == reuse);
  }

  SUBCASE("identical injected maps give zero displacement and an unwarped feature") {
    const auto self = unit_forward(unit, first, second, structure, prev_injected, prev_final, blurry, cfg, nullptr, {});
    const auto out =
        unit_forward(unit, first, second, structure, self.injected, prev_final, blurry, cfg, nullptr, {});
    REQUIRE(out.displacement.has_value());
    CHECK(*out.displacement == DisplacementMap(16, 16));
    CHECK(equal(out.warped.value(), prev_final.value()));
  }

  SUBCASE("without motion compensation the restored frame ignores any displacement") {
    cfg.enable_motion_compensation = false;
    auto trained = unit;
    trained.deblur.weight.value().fill(0.01);
    const DisplacementMap fake(16, 16, 3, 3);
    const auto a = unit_forward(trained, first, second, structure, prev_injected, prev_final, blurry, cfg, nullptr, {});
    const auto b = unit_forward(trained, first, second, structure, prev_injected, prev_final, blurry, cfg, &fake, {});
    CHECK_FALSE(a.cost.has_value());
    CHECK(equal(a.warped.value(), prev_final.value()));
    CHECK(equal(a.restored.value(), b.restored.value()));
  }

  SUBCASE("the deblur head can be skipped") {
    ForwardOptions opts;
    opts.compute_deblur_head = false;
    const auto out = unit_forward(unit, first, second, structure, prev_injected, prev_final, blurry, cfg, nullptr, opts);
    CHECK_FALSE(out.restored.defined());
  }
}
