#pragma once

// Portable counter-based random numbers: Philox4x32-10 (Salmon et al.,
// SC'11) keyed by the 64-bit seed, with the counter laid out as
//   ctr = { block_lo, block_hi, stream, 0 }.
// Each 128-bit block yields two u64 draws, (w0 | w1<<32) then (w2 | w3<<32).
// Normals use Box-Muller on one block: u1 = ((a>>11)+1)*2^-53 in (0,1],
// u2 = (b>>11)*2^-53 in [0,1), z0 = r*cos(2*pi*u2), z1 = r*sin(2*pi*u2).
// Any reimplementation following the above reproduces the streams; the first
// normals for seed 7 are pinned in tests/unit/test_rng.cpp.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "reid/error.hpp"

namespace reid::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

[[nodiscard]] constexpr Block philox4x32_10(Block ctr, Key key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// Sequential view over one Philox stream. Different `stream` ids under the
/// same seed are independent, which lets a generator consume separate streams
/// for separate purposes without coupling their draw counts.
class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint32_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

  [[nodiscard]] Block block(std::uint64_t index) const noexcept {
    return philox4x32_10({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream_, 0},
                         key_);
  }

  std::uint64_t next_u64() noexcept {
    if (cached_ == 0) {
      const Block b = block(counter_++);
      buffer_[0] = b[0] | (static_cast<std::uint64_t>(b[1]) << 32);
      buffer_[1] = b[2] | (static_cast<std::uint64_t>(b[3]) << 32);
      cached_ = 2;
    }
    return buffer_[2 - cached_--];
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal. Each call pair consumes one fresh block.
  double next_normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const std::uint64_t a = next_u64();
    const std::uint64_t b = next_u64();
    const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Unbiased uniform integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) fail(ErrorKind::InvalidParams, "next_below(0)");
    const std::uint64_t limit = std::uint64_t(0) - (std::uint64_t(0) - bound) % bound;  // multiple of bound
    while (true) {
      const std::uint64_t x = next_u64();
      if (limit == 0 || x < limit) return x % bound;
    }
  }

 private:
  Key key_;
  std::uint32_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int cached_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates, drawing from the back: for i = n-1 .. 1 swap(v[i], v[below(i+1)]).
template <typename T>
void shuffle(std::span<T> values, Stream& stream) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.next_below(i));
    std::swap(values[i - 1], values[j]);
  }
}

/// `count` distinct indices from [0, n), uniformly, via a partial forward
/// Fisher-Yates. Returned in draw order.
[[nodiscard]] inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                                         Stream& stream) {
  if (count > n) fail(ErrorKind::InvalidParams, "cannot draw " + std::to_string(count) + " of " + std::to_string(n));
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(stream.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace reid::rng
