#pragma once

#include <cstdint>

namespace styleformer {

struct OpCounts {
  std::uint64_t matmul_flops = 0;
  std::uint64_t softmax_flops = 0;
  std::uint64_t elementwise_flops = 0;
  /// Largest single attention map materialized (elements).
  std::uint64_t attention_map_peak = 0;
  /// Sum of attention map elements materialized.
  std::uint64_t attention_map_total = 0;

  std::uint64_t total_flops() const noexcept {
    return matmul_flops + softmax_flops + elementwise_flops;
  }
};

/// Scoped instrumentation: while alive, dense kernels on this thread report
/// into it. Counters nest: the innermost one receives the counts and hands
/// them on to the enclosing counter when it goes out of scope.
class OpCounter {
 public:
  OpCounter();
  ~OpCounter();
  OpCounter(const OpCounter&) = delete;
  OpCounter& operator=(const OpCounter&) = delete;

  const OpCounts& counts() const noexcept { return counts_; }
  void reset() noexcept { counts_ = {}; }

  static void add_matmul(std::uint64_t flops) noexcept;
  static void add_softmax(std::uint64_t flops) noexcept;
  static void add_elementwise(std::uint64_t flops) noexcept;
  static void note_attention_map(std::uint64_t elements) noexcept;

 private:
  OpCounts counts_;
  OpCounter* previous_;
};

/// Flops charged per softmax element (max, subtract, exp, sum, divide).
inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 5;

}  // namespace styleformer
