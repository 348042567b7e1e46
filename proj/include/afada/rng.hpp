#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace afada {

// splitmix64 finalizer; spreads a 64-bit key over the whole seed space.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed of the named substream `purpose` under `root`.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose) {
  return mix64(root ^ mix64(fnv1a(purpose)));
}

/// A deterministic random stream. The engine (mt19937_64) is specified by the
/// standard, and the conversions below are written out so that sequences do
/// not depend on the standard library's distribution implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [lo, hi], unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return lo + static_cast<std::int64_t>(x % range);
  }

  /// Uniform index in [0, n).
  std::size_t pick(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
  }

 private:
  std::mt19937_64 engine_;
};

/// Named per-purpose substreams of one root seed. Changing how much one
/// purpose consumes never shifts another purpose's sequence.
class RandomStreams {
 public:
  explicit RandomStreams(std::uint64_t root)
      : root_(root),
        failure(derive_seed(root, "failure")),
        loss(derive_seed(root, "loss")),
        backoff(derive_seed(root, "backoff")),
        retry(derive_seed(root, "retry-choice")),
        phase(derive_seed(root, "phase")) {}

  std::uint64_t root() const { return root_; }

  RandomStream& robot(std::uint32_t id) {
    auto it = robots_.find(id);
    if (it == robots_.end()) {
      it = robots_.emplace(id, RandomStream(derive_seed(root_, "robot/" + std::to_string(id)))).first;
    }
    return it->second;
  }

 private:
  std::uint64_t root_;
  std::map<std::uint32_t, RandomStream> robots_;

 public:
  RandomStream failure;
  RandomStream loss;
  RandomStream backoff;
  RandomStream retry;
  RandomStream phase;
};

}  // namespace afada
