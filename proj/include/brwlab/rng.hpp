#pragma once

// Counter-based random streams (Philox4x32-10).
//
// A stream is fully determined by its StreamKey: the seed becomes the Philox
// key and (experiment, replicate, lane) occupy three of the four counter words,
// leaving the fourth as a per-stream block counter. Streams with different
// keys therefore read disjoint counter ranges of the same keyed permutation and
// can be created anywhere, on any thread, without coordination.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace brwlab {

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t experiment = 0;
  std::uint32_t replicate = 0;
  std::uint32_t lane = 0;

  [[nodiscard]] constexpr StreamKey with_replicate(std::uint32_t r) const {
    StreamKey k = *this;
    k.replicate = r;
    return k;
  }
  [[nodiscard]] constexpr StreamKey with_lane(std::uint32_t l) const {
    StreamKey k = *this;
    k.lane = l;
    return k;
  }

  friend constexpr bool operator==(const StreamKey&, const StreamKey&) = default;
};

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Counter round(const Counter& c, const Key& k) {
  const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
  const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

/// Ten-round Philox4x32 bijection of the counter under the key.
constexpr Counter apply(Counter c, Key k) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    c = round(c, k);
  }
  return c;
}

}  // namespace philox

/// A random stream. Satisfies UniformRandomBitGenerator (64-bit output).
/// Handles are cheap and must not be shared between threads; keys may be.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(const StreamKey& key)
      : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
        counter_{0u, key.lane, key.replicate, key.experiment} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  result_type operator()() { return next_u64(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Fair coin from a buffered 64-bit word.
  bool coin() {
    if (bits_left_ == 0) {
      bits_ = next_u64();
      bits_left_ = 64;
    }
    const bool b = bits_ & 1u;
    bits_ >>= 1;
    --bits_left_;
    return b;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double exponential() { return -std::log(uniform_pos()); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Stream::below: empty range");
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  void refill() {
    block_ = philox::apply(counter_, key_);
    if (++counter_[0] == 0) throw std::overflow_error("Stream: block counter exhausted");
    pos_ = 0;
  }

  philox::Key key_;
  philox::Counter counter_;
  philox::Counter block_{};
  int pos_ = 4;
  std::uint64_t bits_ = 0;
  int bits_left_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Stream stream(const StreamKey& key) { return Stream(key); }

/// Experiment identifiers; keep streams of different experiments disjoint.
namespace experiments {
inline constexpr std::uint32_t kCalibration = 1;
inline constexpr std::uint32_t kBoundary = 2;
inline constexpr std::uint32_t kMoments = 3;
inline constexpr std::uint32_t kTree = 10;
inline constexpr std::uint32_t kOracle = 11;
inline constexpr std::uint32_t kSpine = 20;
inline constexpr std::uint32_t kManyToOneTree = 21;
inline constexpr std::uint32_t kManyToOneSpine = 22;
inline constexpr std::uint32_t kDecomposition = 23;
inline constexpr std::uint32_t kPPlus = 24;
inline constexpr std::uint32_t kLadder = 30;
inline constexpr std::uint32_t kDuality = 31;
inline constexpr std::uint32_t kGreen = 32;
inline constexpr std::uint32_t kSurvival = 33;
inline constexpr std::uint32_t kHarmonic = 34;
inline constexpr std::uint32_t kPotential = 35;
inline constexpr std::uint32_t kSenetaHeyde = 40;
inline constexpr std::uint32_t kFirstMoment = 41;
inline constexpr std::uint32_t kTruncated = 42;
inline constexpr std::uint32_t kKillFromK0 = 43;
inline constexpr std::uint32_t kBootstrap = 50;
inline constexpr std::uint32_t kTauberian = 60;
}  // namespace experiments

}  // namespace brwlab
