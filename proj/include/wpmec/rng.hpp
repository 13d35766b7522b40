#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wpmec {

// 64-bit FNV-1a over a byte string; used to derive named substreams.
std::uint64_t fnv1a64(std::string_view s);

// Deterministic substream seed: mixes a run seed with a purpose tag so that
// independent consumers (channel draws, quantizer noise, buffer sampling, ...)
// never share random state.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

// Substream further keyed by an integer (e.g. a frame index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t key);

// Thin wrapper over mt19937_64 with fixed, platform-independent mappings to
// floating point.  std::uniform_real_distribution is not pinned by the
// standard, so all real draws go through u01().
class RandomStream {
 public:
  RandomStream() : eng_(0) {}
  explicit RandomStream(std::uint64_t seed) : eng_(seed) {}
  RandomStream(std::uint64_t seed, std::string_view tag) : eng_(derive_seed(seed, tag)) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform on [0,1) with 53 random bits.
  double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Exponential with mean 1; -log1p(-u) keeps precision near u = 0.
  double exponential() { return -std::log1p(-u01()); }

  // Uniform integer in [0, n) by 128-bit multiply-shift (no modulo bias worth
  // caring about at n << 2^64, and fully deterministic).
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(eng_()) * n) >> 64);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace wpmec
