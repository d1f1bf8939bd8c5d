#include "styleformer/op_counter.hpp"

#include <algorithm>

namespace styleformer {

namespace {
thread_local OpCounter* g_active = nullptr;
}

OpCounter::OpCounter() : previous_(g_active) { g_active = this; }

OpCounter::~OpCounter() {
  g_active = previous_;
  if (!previous_) return;
  auto& outer = previous_->counts_;
  outer.matmul_flops += counts_.matmul_flops;
  outer.softmax_flops += counts_.softmax_flops;
  outer.elementwise_flops += counts_.elementwise_flops;
  outer.attention_map_peak = std::max(outer.attention_map_peak, counts_.attention_map_peak);
  outer.attention_map_total += counts_.attention_map_total;
}

void OpCounter::add_matmul(std::uint64_t flops) noexcept {
  if (g_active) g_active->counts_.matmul_flops += flops;
}

void OpCounter::add_softmax(std::uint64_t flops) noexcept {
  if (g_active) g_active->counts_.softmax_flops += flops;
}

void OpCounter::add_elementwise(std::uint64_t flops) noexcept {
  if (g_active) g_active->counts_.elementwise_flops += flops;
}

void OpCounter::note_attention_map(std::uint64_t elements) noexcept {
  if (!g_active) return;
  g_active->counts_.attention_map_peak = std::max(g_active->counts_.attention_map_peak, elements);
  g_active->counts_.attention_map_total += elements;
}

}  // namespace styleformer
