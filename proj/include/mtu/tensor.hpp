#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace mtu {

/// Process-wide accounting of bytes held by tensor buffers. Used by the
/// streaming tests to show that inference memory does not grow with video
/// length.
class MemoryStats {
 public:
  static void on_alloc(std::size_t bytes) noexcept;
  static void on_free(std::size_t bytes) noexcept;
  static std::size_t live_bytes() noexcept;
  static std::size_t peak_bytes() noexcept;
  /// Resets the peak to the current live value.
  static void reset_peak() noexcept;
};

template <typename T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <typename U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  // Cache-line alignment keeps vectorised reductions on the same lanes in
  // every process, so results do not depend on where the heap puts a buffer.
  static constexpr std::align_val_t kAlignment{64};

  T* allocate(std::size_t n) {
    MemoryStats::on_alloc(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryStats::on_free(n * sizeof(T));
    ::operator delete(p, kAlignment);
  }

  // Default-initialise so that buffers which are about to be overwritten
  // are not zeroed first.
  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const TrackedAllocator<U>&) const noexcept { return true; }
};

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t numel() const;

  // Rank-3 (channels, height, width) accessors.
  std::int64_t channels() const { return dims_.at(0); }
  std::int64_t height() const { return dims_.at(1); }
  std::int64_t width() const { return dims_.at(2); }

  bool operator==(const Shape&) const = default;
  std::string str() const;

 private:
  std::vector<std::int64_t> dims_;
};

/// Dense row-major array. Feature maps and images are (C, H, W); conv
/// weights are (O, I, K, K).
template <typename T>
class Tensor {
 public:
  using Buffer = std::vector<T, TrackedAllocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill) {}

  /// Contents are indeterminate; the caller must write every element.
  static Tensor uninitialized(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(static_cast<std::size_t>(t.shape_.numel()));
    return t;
  }

  static Tensor from(Shape shape, std::span<const T> values) {
    if (shape.numel() != static_cast<std::int64_t>(values.size())) {
      throw std::invalid_argument("Tensor::from: value count does not match shape " + shape.str());
    }
    Tensor t(std::move(shape));
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return {data_.data(), data_.size()}; }
  std::span<const T> data() const { return {data_.data(), data_.size()}; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }
  const T& at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  std::size_t bytes() const { return data_.size() * sizeof(T); }

  template <typename U>
  Tensor<U> cast() const {
    auto out = Tensor<U>::uninitialized(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  Buffer data_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Rounds a binary32 value to the nearest binary16-representable value
/// (round-to-nearest-even, overflow to infinity, gradual underflow).
float round_to_half(float value);
std::uint16_t float_to_half_bits(float value);
float half_bits_to_float(std::uint16_t bits);

template <typename T>
void round_to_half_inplace(Tensor<T>& t) {
  for (auto& v : t.data()) v = static_cast<T>(round_to_half(static_cast<float>(v)));
}

}  // namespace mtu
