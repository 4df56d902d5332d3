#include "mtu/bench.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>

namespace mtu::bench {

AsyncStreamBackend::AsyncStreamBackend() : worker_([this] { run(); }) {}

AsyncStreamBackend::~AsyncStreamBackend() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_ready_.notify_all();
  worker_.join();
}

void AsyncStreamBackend::submit(std::function<void()> work) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(work));
  }
  work_ready_.notify_one();
}

void AsyncStreamBackend::synchronize() {
  std::unique_lock lock(mutex_);
  drained_.wait(lock, [this] { return queue_.empty() && !busy_; });
  if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
}

void AsyncStreamBackend::run() {
  std::unique_lock lock(mutex_);
  for (;;) {
    work_ready_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;  // stopping with nothing left
    auto work = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    std::exception_ptr failure;
    try {
      work();
    } catch (...) {
      failure = std::current_exception();
    }
    lock.lock();
    busy_ = false;
    if (failure && !error_) error_ = failure;
    if (queue_.empty()) drained_.notify_all();
  }
}

std::unique_ptr<ExecutionBackend> make_backend(const std::string& name) {
  if (name == "host") return std::make_unique<HostBackend>();
  if (name == "async") return std::make_unique<AsyncStreamBackend>();
  throw std::invalid_argument("unknown backend '" + name + "' (expected host or async)");
}

void validate_bench_options(const BenchOptions& opts) {
  if (opts.frames < 1) throw std::invalid_argument("benchmark: need at least one timed frame");
  if (opts.warmup < 0) throw std::invalid_argument("benchmark: warmup must be >= 0");
  if (opts.height < 1 || opts.width < 1) throw std::invalid_argument("benchmark: frame size must be positive");
}

TimingStats summarize(std::vector<double> samples_ms) {
  TimingStats s;
  if (samples_ms.empty()) return s;
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(samples_ms.size());
  s.samples_ms = samples_ms;
  std::sort(samples_ms.begin(), samples_ms.end());
  const std::size_t mid = samples_ms.size() / 2;
  s.median_ms = samples_ms.size() % 2 == 1 ? samples_ms[mid] : 0.5 * (samples_ms[mid - 1] + samples_ms[mid]);
  s.fps = s.mean_ms > 0.0 ? 1000.0 / s.mean_ms : 0.0;
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start, Clock::time_point stop) {
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

/// Inputs cycle through a handful of seeded noise frames; content does not
/// affect the amount of work.
std::vector<Tensor<float>> make_inputs(const BenchOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<float> pixel(0.0f, 1.0f);
  std::vector<Tensor<float>> frames;
  for (int i = 0; i < 4; ++i) {
    ImagePlane img(opts.height, opts.width, 3);
    for (auto& v : img.values) v = pixel(rng);
    auto t = pad_reflect_to_multiple(img, ModelConfig::kMotionStride).to_tensor<float>();
    if (opts.precision == Precision::half) round_to_half_inplace(t);
    frames.push_back(std::move(t));
  }
  return frames;
}

/// One recurrent stream whose steps run on the backend.
class Stream {
 public:
  Stream(const StackedModel<float>& model, Precision precision) : precision_(precision) {
    if (precision == Precision::half) {
      half_model_ = model.half_precision_copy();
      net_ = &*half_model_;
    } else {
      net_ = &model;
    }
  }
  Stream(const Stream&) = delete;
  Stream& operator=(const Stream&) = delete;

  std::function<void()> step_task(const Tensor<float>& frame) {
    return [this, &frame] {
      NoGradGuard no_grad;
      const bool half = precision_ == Precision::half;
      if (!state_) state_ = init_state(*net_, frame, half);
      StepOptions so;
      so.half_activations = half;
      state_ = step(*net_, *state_, frame, so).state;
    };
  }

 private:
  Precision precision_;
  std::optional<StackedModel<float>> half_model_;
  const StackedModel<float>* net_ = nullptr;
  std::optional<RecurrentState<float>> state_;
};

double timed_sync(ExecutionBackend& backend, std::function<void()> task) {
  backend.synchronize();
  const auto start = Clock::now();
  backend.submit(std::move(task));
  backend.synchronize();
  return elapsed_ms(start, Clock::now());
}

double timed_naive(ExecutionBackend& backend, std::function<void()> task) {
  const auto start = Clock::now();
  backend.submit(std::move(task));
  return elapsed_ms(start, Clock::now());
}

LatencyReport base_report(const StackedModel<float>& model, const BenchOptions& opts, const ExecutionBackend& backend,
                          std::string label) {
  LatencyReport r;
  r.label = std::move(label);
  r.backend = backend.name();
  r.height = opts.height;
  r.width = opts.width;
  r.frames = opts.frames;
  r.precision = opts.precision;
  r.params = model.parameter_count(true);
  return r;
}

}  // namespace

LatencyReport benchmark_latency(const StackedModel<float>& model, const BenchOptions& opts, ExecutionBackend& backend) {
  validate_bench_options(opts);
  const auto inputs = make_inputs(opts);
  Stream synced(model, opts.precision);
  Stream naive(model, opts.precision);
  for (int i = 0; i < opts.warmup; ++i) {
    const auto& frame = inputs[static_cast<std::size_t>(i) % inputs.size()];
    backend.submit(synced.step_task(frame));
    backend.submit(naive.step_task(frame));
  }
  backend.synchronize();

  std::vector<double> sync_ms;
  std::vector<double> naive_ms;
  for (int i = 0; i < opts.frames; ++i) {
    const auto& frame = inputs[static_cast<std::size_t>(opts.warmup + i) % inputs.size()];
    sync_ms.push_back(timed_sync(backend, synced.step_task(frame)));
    naive_ms.push_back(timed_naive(backend, naive.step_task(frame)));
  }
  backend.synchronize();

  auto report = base_report(model, opts, backend, "N=" + std::to_string(model.config.num_stacks));
  report.sync = summarize(std::move(sync_ms));
  report.naive = summarize(std::move(naive_ms));
  return report;
}

std::vector<LatencyReport> benchmark_interleaved(const std::vector<const StackedModel<float>*>& models,
                                                 const std::vector<std::string>& labels, const BenchOptions& opts,
                                                 ExecutionBackend& backend) {
  validate_bench_options(opts);
  if (models.size() != labels.size()) throw std::invalid_argument("benchmark_interleaved: one label per model");
  const auto inputs = make_inputs(opts);
  std::vector<std::unique_ptr<Stream>> streams;
  for (const auto* m : models) streams.push_back(std::make_unique<Stream>(*m, opts.precision));
  for (int i = 0; i < opts.warmup; ++i) {
    for (auto& s : streams) backend.submit(s->step_task(inputs[static_cast<std::size_t>(i) % inputs.size()]));
  }
  backend.synchronize();

  std::vector<std::vector<double>> samples(models.size());
  for (int i = 0; i < opts.frames; ++i) {
    const auto& frame = inputs[static_cast<std::size_t>(opts.warmup + i) % inputs.size()];
    for (std::size_t m = 0; m < streams.size(); ++m) samples[m].push_back(timed_sync(backend, streams[m]->step_task(frame)));
  }
  backend.synchronize();

  std::vector<LatencyReport> reports;
  for (std::size_t m = 0; m < models.size(); ++m) {
    auto r = base_report(*models[m], opts, backend, labels[m]);
    r.sync = summarize(std::move(samples[m]));
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<LatencyReport> stack_sweep(const ModelConfig& base, const std::vector<int>& stack_counts,
                                       const BenchOptions& opts, ExecutionBackend& backend, std::uint64_t seed) {
  std::vector<LatencyReport> reports;
  for (int n : stack_counts) {
    ModelConfig cfg = base;
    cfg.num_stacks = n;
    cfg.lambdas = default_lambdas(n);
    const auto model = StackedModel<float>::create(cfg, seed);
    reports.push_back(benchmark_latency(model, opts, backend));
  }
  return reports;
}

std::vector<LatencyReport> skip_comparison(const ModelConfig& base, const BenchOptions& opts, ExecutionBackend& backend,
                                           std::uint64_t seed) {
  ModelConfig off = base;
  off.skip_matching = false;
  ModelConfig on = base;
  on.skip_matching = true;
  const auto model_off = StackedModel<float>::create(off, seed);
  const auto model_on = StackedModel<float>::create(on, seed);
  return benchmark_interleaved({&model_off, &model_on}, {"skip off", "skip on"}, opts, backend);
}

}  // namespace mtu::bench
