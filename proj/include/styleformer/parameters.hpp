#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "styleformer/autodiff.hpp"
#include "styleformer/rng.hpp"

namespace styleformer {

/// Ordered, name-addressed set of trainable leaves.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
  };

  /// Registers a parameter; names must be unique.
  Var<T> add(std::string name, Tensor<T> init);
  const Var<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t tensor_count() const noexcept { return entries_.size(); }
  /// Total number of scalars.
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Initializer stream for a named parameter. Depends only on (seed, name),
/// so adding or removing other parameters never shifts existing draws.
inline RngStream init_stream(std::uint64_t seed, std::string_view name) {
  return RngStream(seed, "param-init").derive(name);
}

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the PyTorch linear default.
template <class T>
Tensor<T> linear_init(std::size_t rows, std::size_t cols, std::size_t fan_in, RngStream rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_tensor<T>(rows, cols, -bound, bound);
}

}  // namespace styleformer
