#include "mtu/tensor.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <sstream>

namespace mtu {

namespace {
std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
}  // namespace

void MemoryStats::on_alloc(std::size_t bytes) noexcept {
  const std::size_t live = g_live_bytes.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t peak = g_peak_bytes.load(std::memory_order_relaxed);
  while (live > peak && !g_peak_bytes.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
  }
}

void MemoryStats::on_free(std::size_t bytes) noexcept {
  g_live_bytes.fetch_sub(bytes, std::memory_order_relaxed);
}

std::size_t MemoryStats::live_bytes() noexcept { return g_live_bytes.load(std::memory_order_relaxed); }
std::size_t MemoryStats::peak_bytes() noexcept { return g_peak_bytes.load(std::memory_order_relaxed); }
void MemoryStats::reset_peak() noexcept { g_peak_bytes.store(g_live_bytes.load(std::memory_order_relaxed)); }

std::int64_t Shape::numel() const {
  std::int64_t n = 1;
  for (auto d : dims_) n *= d;
  return dims_.empty() ? 0 : n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? ", " : "") << dims_[i];
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

std::uint16_t float_to_half_bits(float value) {
  const auto x = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t absx = x & 0x7fffffffu;

  if (absx >= 0x7f800000u) {
    return static_cast<std::uint16_t>(sign | 0x7c00u | (absx > 0x7f800000u ? 0x0200u : 0u));
  }
  // 65520 and above round to infinity.
  if (absx >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7c00u);

  if (absx < 0x38800000u) {
    // Subnormal half: multiples of 2^-24. Scaling by a power of two is exact.
    const float scaled = std::bit_cast<float>(absx) * 16777216.0f;
    const auto mant = static_cast<std::uint32_t>(std::nearbyint(scaled));
    return static_cast<std::uint16_t>(sign | mant);
  }

  const std::uint32_t mant = absx & 0x7fffffu;
  const std::uint32_t exp = (absx >> 23) - 127u + 15u;
  std::uint32_t h = (exp << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;  // carry may bump the exponent
  return static_cast<std::uint16_t>(sign | h);
}

float half_bits_to_float(std::uint16_t bits) {
  const std::uint32_t sign = (static_cast<std::uint32_t>(bits) & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1fu;
  const std::uint32_t mant = bits & 0x3ffu;
  if (exp == 0) {
    const float v = static_cast<float>(mant) * (1.0f / 16777216.0f);
    return sign ? -v : v;
  }
  if (exp == 31) return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp - 15u + 127u) << 23) | (mant << 13));
}

float round_to_half(float value) { return half_bits_to_float(float_to_half_bits(value)); }

}  // namespace mtu
