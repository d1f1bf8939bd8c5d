#include "styleformer/style.hpp"

#include <cmath>
#include <stdexcept>

namespace styleformer {

const char* to_string(StyleRole role) {
  switch (role) {
    case StyleRole::Input: return "style_input";
    case StyleRole::Value: return "style_value";
    case StyleRole::Rgb: return "style_rgb";
    case StyleRole::Conv: return "style_conv";
  }
  return "unknown";
}

template <class T>
ModulatedWeight<T> modulate(const Tensor<T>& weight, const Tensor<T>& style) {
  if (style.rows() != 1 || style.cols() != weight.rows()) {
    throw ShapeError("modulate: style length " + std::to_string(style.size()) +
                     " != weight rows " + std::to_string(weight.rows()));
  }
  ModulatedWeight<T> out;
  out.weight = scale_rows(weight, style);
  out.demod = column_rss(out.weight);
  return out;
}

template <class T>
Tensor<T> apply_demodulated(const Tensor<T>& x, const ModulatedWeight<T>& mw) {
  if (x.cols() != mw.weight.rows()) {
    throw ShapeError("apply_demodulated: input has " + std::to_string(x.cols()) +
                     " columns, weight expects " + std::to_string(mw.weight.rows()));
  }
  return divide_columns(matmul(x, mw.weight), mw.demod);
}

template <class T>
std::vector<double> residual_std_prediction(const Tensor<T>& attention) {
  std::vector<double> out(attention.rows());
  for (std::size_t r = 0; r < attention.rows(); ++r) {
    double s = 0.0;
    for (T a : attention.row(r)) s += static_cast<double>(a) * a;
    out[r] = std::sqrt(s);
  }
  return out;
}

template <class T>
Var<T> demodulated_linear(const Var<T>& x, const Var<T>& weight, const Var<T>& style,
                          bool demodulate) {
  Var<T> y = ag::matmul(x, weight);
  if (!demodulate) return y;
  return ag::divide_columns(y, ag::column_rss(ag::scale_rows(weight, style)));
}

template <class T>
MappingNetwork<T>::MappingNetwork(ParameterStore<T>& store, std::uint64_t seed,
                                  std::size_t z_dim, std::size_t w_dim)
    : z_dim_(z_dim), w_dim_(w_dim) {
  fc1_weight = store.add("mapping.fc1.weight",
                         linear_init<T>(z_dim, w_dim, z_dim, init_stream(seed, "mapping.fc1.weight")));
  fc1_bias = store.add("mapping.fc1.bias", Tensor<T>(1, w_dim));
  fc2_weight = store.add("mapping.fc2.weight",
                         linear_init<T>(w_dim, w_dim, w_dim, init_stream(seed, "mapping.fc2.weight")));
  fc2_bias = store.add("mapping.fc2.bias", Tensor<T>(1, w_dim));
}

template <class T>
Var<T> MappingNetwork<T>::forward(const Var<T>& z) const {
  if (z.cols() != z_dim_ || z.rows() != 1) {
    throw ShapeError("map_latent: expected 1x" + std::to_string(z_dim_) + " latent, got " +
                     shape_string(z.rows(), z.cols()));
  }
  Var<T> h = ag::leaky_relu(ag::add_row_vector(ag::matmul(z, fc1_weight), fc1_bias),
                            static_cast<T>(kLeakySlope));
  return ag::add_row_vector(ag::matmul(h, fc2_weight), fc2_bias);
}

template <class T>
LatentW<T> MappingNetwork<T>::map(const LatentZ<T>& z) const {
  NoGradGuard guard;
  return {forward(constant(z.values)).value()};
}

template <class T>
Var<T> AffineStyle<T>::forward(const Var<T>& w) const {
  return ag::add_row_vector(ag::matmul(w, weight), bias);
}

template <class T>
const AffineStyle<T>& AffineBank<T>::register_layer(const std::string& layer_id,
                                                    std::size_t channels, StyleRole role) {
  if (!store_) throw ConfigError("AffineBank has no parameter store");
  if (layers_.count(layer_id) != 0) throw ConfigError("affine already registered: " + layer_id);
  AffineStyle<T> a;
  a.role = role;
  a.weight = store_->add(layer_id + ".weight",
                         linear_init<T>(w_dim_, channels, w_dim_,
                                        init_stream(seed_, layer_id + ".weight")));
  a.bias = store_->add(layer_id + ".bias", Tensor<T>(1, channels, T{1}));
  return layers_.emplace(layer_id, std::move(a)).first->second;
}

template <class T>
const AffineStyle<T>& AffineBank<T>::at(const std::string& layer_id) const {
  auto it = layers_.find(layer_id);
  if (it == layers_.end()) throw std::out_of_range("unregistered affine layer: " + layer_id);
  return it->second;
}

template <class T>
StyleVector<T> AffineBank<T>::style(const LatentW<T>& w, const std::string& layer_id) const {
  const auto& a = at(layer_id);
  if (w.dim() != w_dim_) throw ShapeError("affine_style: latent dimension mismatch");
  NoGradGuard guard;
  return {a.forward(constant(w.values)).value(), a.role};
}

#define STYLEFORMER_INSTANTIATE_STYLE(T)                                                      \
  template ModulatedWeight<T> modulate(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> apply_demodulated(const Tensor<T>&, const ModulatedWeight<T>&);         \
  template std::vector<double> residual_std_prediction(const Tensor<T>&);                    \
  template Var<T> demodulated_linear(const Var<T>&, const Var<T>&, const Var<T>&, bool);     \
  template class MappingNetwork<T>;                                                          \
  template struct AffineStyle<T>;                                                            \
  template class AffineBank<T>;

STYLEFORMER_INSTANTIATE_STYLE(float)
STYLEFORMER_INSTANTIATE_STYLE(double)

}  // namespace styleformer
