#include "styleformer/parameters.hpp"

#include <stdexcept>

namespace styleformer {

template <class T>
Var<T> ParameterStore<T>::add(std::string name, Tensor<T> init) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  Var<T> var(std::move(init), true);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), var});
  return var;
}

template <class T>
const Var<T>& ParameterStore<T>::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return entries_[it->second].var;
}

template <class T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

template <class T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace styleformer
