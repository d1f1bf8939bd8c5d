#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "styleformer/tensor.hpp"

namespace styleformer {

/// 64-bit FNV-1a; used to turn stream labels and parameter names into ids.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Reproducible random stream keyed by (seed, stream id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniform and normal variates are derived here rather than
/// through std::*_distribution, whose algorithms are implementation-defined,
/// so draws agree across standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);
  RngStream(std::uint64_t seed, std::string_view label) : RngStream(seed, fnv1a64(label)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream; same (parent, index) always yields the same child.
  RngStream derive(std::uint64_t index) const;
  RngStream derive(std::string_view label) const { return derive(fnv1a64(label)); }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (cosine branch only, so the state is just the engine).
  double normal();
  std::size_t index(std::size_t bound);

  template <class T>
  Tensor<T> normal_tensor(std::size_t rows, std::size_t cols, double stddev = 1.0,
                          double mean = 0.0) {
    Tensor<T> out(rows, cols);
    for (auto& v : out.data()) v = static_cast<T>(mean + stddev * normal());
    return out;
  }
  template <class T>
  Tensor<T> uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi) {
    Tensor<T> out(rows, cols);
    for (auto& v : out.data()) v = static_cast<T>(uniform(lo, hi));
    return out;
  }

  /// Text snapshot of the full state (seed, stream, engine).
  std::string serialize() const;
  static RngStream deserialize(const std::string& text);

  bool operator==(const RngStream& other) const {
    return seed_ == other.seed_ && stream_ == other.stream_ && engine_ == other.engine_;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace styleformer
