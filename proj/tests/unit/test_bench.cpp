#include <doctest.h>

#include <atomic>
#include <chrono>
#include <stdexcept>
#include <thread>

#include "mtu/bench.hpp"

using namespace mtu;

namespace {

bench::BenchOptions tiny_bench() {
  bench::BenchOptions o;
  o.height = 16;
  o.width = 16;
  o.frames = 4;
  o.warmup = 1;
  return o;
}

}  // namespace

TEST_CASE("timing summary") {
  const auto s = bench::summarize({4.0, 1.0, 3.0, 2.0});
  CHECK(s.mean_ms == 2.5);
  CHECK(s.median_ms == 2.5);
  CHECK(s.fps == doctest::Approx(400.0));
  CHECK(s.samples_ms.size() == 4);
  CHECK(bench::summarize({5.0, 1.0, 3.0}).median_ms == 3.0);
}

TEST_CASE("backend factory") {
  CHECK(bench::make_backend("host")->name() == "host");
  CHECK_FALSE(bench::make_backend("host")->asynchronous());
  CHECK(bench::make_backend("async")->asynchronous());
  CHECK_THROWS_AS(bench::make_backend("gpu"), std::invalid_argument);
}

TEST_CASE("the asynchronous backend returns before the work is done and drains on synchronize") {
  bench::AsyncStreamBackend backend;
  std::atomic<bool> release{false};
  std::atomic<int> done{0};
  backend.submit([&] {
    while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    ++done;
  });
  backend.submit([&] { ++done; });
  CHECK(done == 0);  // submit did not wait
  release = true;
  backend.synchronize();
  CHECK(done == 2);
}

TEST_CASE("the asynchronous backend runs work in order and reports failures on synchronize") {
  bench::AsyncStreamBackend backend;
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) backend.submit([&order, i] { order.push_back(i); });
  backend.submit([] { throw std::runtime_error("boom"); });
  CHECK_THROWS_WITH_AS(backend.synchronize(), "boom", std::runtime_error);
  CHECK(order == std::vector<int>{0, 1, 2, 3, 4});
  // The error is reported once; the backend keeps working.
  backend.submit([&order] { order.push_back(5); });
  CHECK_NOTHROW(backend.synchronize());
  CHECK(order.size() == 6);
}

TEST_CASE("bench options are validated") {
  auto o = tiny_bench();
  o.frames = 0;
  CHECK_THROWS_AS(bench::validate_bench_options(o), std::invalid_argument);
  o = tiny_bench();
  o.width = 0;
  CHECK_THROWS_AS(bench::validate_bench_options(o), std::invalid_argument);
}

TEST_CASE("latency report contents") {
  const auto model = StackedModel<float>::create(make_config(2, 4, 2), 81);
  bench::HostBackend host;
  const auto r = bench::benchmark_latency(model, tiny_bench(), host);
  CHECK(r.backend == "host");
  CHECK(r.height == 16);
  CHECK(r.width == 16);
  CHECK(r.frames == 4);
  CHECK(r.params == model.parameter_count(true));
  CHECK(r.sync.samples_ms.size() == 4);
  CHECK(r.naive.samples_ms.size() == 4);
  CHECK(r.sync.mean_ms > 0.0);
  CHECK(r.sync.fps == doctest::Approx(1000.0 / r.sync.mean_ms));

  auto half = tiny_bench();
  half.precision = Precision::half;
  half.width = 18;  // padded internally
  CHECK(bench::benchmark_latency(model, half, host).precision == Precision::half);
}

TEST_CASE("stack sweep and skip comparison build the expected models") {
  bench::HostBackend host;
  const auto sweep = bench::stack_sweep(make_config(2, 4, 2), {1, 2, 4}, tiny_bench(), host);
  REQUIRE(sweep.size() == 3);
  CHECK(sweep[0].params < sweep[1].params);
  CHECK(sweep[1].params < sweep[2].params);
  CHECK(sweep[2].label.find('4') != std::string::npos);

  const auto skip = bench::skip_comparison(make_config(4, 4, 2), tiny_bench(), host);
  REQUIRE(skip.size() == 2);
  CHECK(skip[0].label == "skip off");
  CHECK(skip[1].label == "skip on");
  CHECK(skip[0].params == skip[1].params);
}
