#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mtu/pipeline.hpp"

namespace mtu::bench {

/// Where model steps execute. `submit` may return before the work is done;
/// `synchronize` blocks until everything submitted so far has finished.
class ExecutionBackend {
 public:
  virtual ~ExecutionBackend() = default;
  virtual void submit(std::function<void()> work) = 0;
  virtual void synchronize() = 0;
  virtual bool asynchronous() const = 0;
  virtual std::string name() const = 0;
};

/// Runs work inline on the calling thread.
class HostBackend final : public ExecutionBackend {
 public:
  void submit(std::function<void()> work) override { work(); }
  void synchronize() override {}
  bool asynchronous() const override { return false; }
  std::string name() const override { return "host"; }
};

/// Emulates an accelerator stream: a single worker thread drains a FIFO
/// queue, so submit only pays for the enqueue. An exception thrown by a
/// work item is rethrown from the next synchronize.
class AsyncStreamBackend final : public ExecutionBackend {
 public:
  AsyncStreamBackend();
  ~AsyncStreamBackend() override;
  AsyncStreamBackend(const AsyncStreamBackend&) = delete;
  AsyncStreamBackend& operator=(const AsyncStreamBackend&) = delete;

  void submit(std::function<void()> work) override;
  void synchronize() override;
  bool asynchronous() const override { return true; }
  std::string name() const override { return "async-stream"; }

 private:
  void run();

  std::mutex mutex_;
  std::condition_variable work_ready_;
  std::condition_variable drained_;
  std::deque<std::function<void()>> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

/// "host" or "async"; anything else throws std::invalid_argument.
std::unique_ptr<ExecutionBackend> make_backend(const std::string& name);

struct BenchOptions {
  std::int64_t height = 720;
  std::int64_t width = 1280;
  int frames = 20;
  int warmup = 3;
  Precision precision = Precision::full;
  std::uint64_t seed = 0;  // input frames only
};

void validate_bench_options(const BenchOptions& opts);

struct TimingStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double fps = 0.0;  // 1000 / mean_ms
  std::vector<double> samples_ms;
};

TimingStats summarize(std::vector<double> samples_ms);

struct LatencyReport {
  std::string label;
  std::string backend;
  std::int64_t height = 0;
  std::int64_t width = 0;
  int frames = 0;
  Precision precision = Precision::full;
  std::int64_t params = 0;  // inference-only parameter count
  TimingStats sync;         // barrier before and after every timed step
  TimingStats naive;        // wall clock around the submit only
};

/// Times per-frame steps of a streaming run. Synchronized and naive
/// measurements alternate frame by frame on two independent recurrent
/// streams fed the same inputs, so slow drift affects both equally.
LatencyReport benchmark_latency(const StackedModel<float>& model, const BenchOptions& opts, ExecutionBackend& backend);

/// Synchronized timings for several models, interleaved frame by frame.
std::vector<LatencyReport> benchmark_interleaved(const std::vector<const StackedModel<float>*>& models,
                                                 const std::vector<std::string>& labels, const BenchOptions& opts,
                                                 ExecutionBackend& backend);

/// The stack-count sweep: one model per N from `base`, otherwise unchanged.
std::vector<LatencyReport> stack_sweep(const ModelConfig& base, const std::vector<int>& stack_counts,
                                       const BenchOptions& opts, ExecutionBackend& backend, std::uint64_t seed = 0);

/// The same model with matching skipping off and on.
std::vector<LatencyReport> skip_comparison(const ModelConfig& base, const BenchOptions& opts, ExecutionBackend& backend,
                                           std::uint64_t seed = 0);

}  // namespace mtu::bench
