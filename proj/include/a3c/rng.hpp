#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace a3c {

// Portable random stream. std::mt19937_64 and std::seed_seq are fully
// specified by the standard; the distributions are not, so uniform draws
// and categorical inversion are done by hand to keep logs bit-identical
// across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next_u64() { return engine_(); }

  /// Draws an index from `probs` by cumulative-sum inversion: the first i with
  /// u < cumsum[i]. Rounding leftovers fall on the last positive entry.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = i;
      cum += probs[i];
      if (u < cum) return i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

// Stream ids used when deriving independent generators from one run seed.
namespace stream {
inline constexpr std::uint64_t kEnvironment = 0x656e76ULL;
inline constexpr std::uint64_t kRollout = 0x726f6cULL;
inline constexpr std::uint64_t kWorkerBase = 0x10000ULL;  // + worker id
inline constexpr std::uint64_t kSampleBase = 0x100000000ULL;  // + nominal sample index
}  // namespace stream

}  // namespace a3c
