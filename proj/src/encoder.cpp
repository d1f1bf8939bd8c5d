#include "styleformer/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace styleformer {

namespace {

struct VariantEntry {
  const char* name;
  AblationVariant variant;
};

const std::vector<VariantEntry>& variant_table() {
  static const std::vector<VariantEntry> table = [] {
    std::vector<VariantEntry> t;
    AblationVariant v;
    t.push_back({"baseline", v});
    v = {};
    v.style_value = StyleValueMode::Off;
    t.push_back({"style-input-only", v});
    v = {};
    v.style_input = StyleInputMode::Off;
    t.push_back({"style-value-only", v});
    v = {};
    v.style_value = StyleValueMode::TiedToInput;
    t.push_back({"style-tied", v});
    v = {};
    v.residual = ResidualMode::A;
    t.push_back({"residual-a", v});
    v = {};
    v.residual = ResidualMode::B;
    t.push_back({"residual-b", v});
    v = {};
    v.residual = ResidualMode::None;
    t.push_back({"residual-none", v});
    v = {};
    v.layernorm = LayerNormPosition::A;
    t.push_back({"layernorm-a", v});
    v = {};
    v.layernorm = LayerNormPosition::B;
    t.push_back({"layernorm-b", v});
    v = {};
    v.layernorm = LayerNormPosition::None;
    t.push_back({"layernorm-none", v});
    v = {};
    v.feed_forward = true;
    t.push_back({"feed-forward", v});
    return t;
  }();
  return table;
}

const char* layernorm_label(LayerNormPosition p) {
  switch (p) {
    case LayerNormPosition::Pre: return "pre";
    case LayerNormPosition::A: return "a";
    case LayerNormPosition::B: return "b";
    case LayerNormPosition::None: return "none";
  }
  return "?";
}

const char* residual_label(ResidualMode r) {
  switch (r) {
    case ResidualMode::Modified: return "modified";
    case ResidualMode::A: return "a";
    case ResidualMode::B: return "b";
    case ResidualMode::None: return "none";
  }
  return "?";
}

}  // namespace

AblationVariant AblationVariant::named(std::string_view name) {
  for (const auto& e : variant_table()) {
    if (name == e.name) return e.variant;
  }
  throw ConfigError("unknown ablation variant '" + std::string(name) + "'");
}

std::string AblationVariant::name() const {
  for (const auto& e : variant_table()) {
    if (e.variant == *this) return e.name;
  }
  // Combined ablations have no table name; spell out the tuple.
  std::string s = "ln=";
  s += layernorm_label(layernorm);
  s += ",res=";
  s += residual_label(residual);
  s += ",sv=";
  s += style_value == StyleValueMode::On ? "on" : style_value == StyleValueMode::Off ? "off" : "tied";
  s += ",si=";
  s += style_input == StyleInputMode::On ? "on" : "off";
  s += ",ff=";
  s += feed_forward ? "on" : "off";
  return s;
}

std::array<bool, 10> AblationVariant::table_pattern() const {
  return {style_input == StyleInputMode::On,
          style_value != StyleValueMode::Off,
          style_value == StyleValueMode::TiedToInput,
          residual == ResidualMode::A,
          residual == ResidualMode::B,
          residual == ResidualMode::Modified,
          layernorm == LayerNormPosition::A,
          layernorm == LayerNormPosition::B,
          layernorm == LayerNormPosition::Pre,
          feed_forward};
}

const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& e : variant_table()) n.emplace_back(e.name);
    return n;
  }();
  return names;
}

std::array<bool, 10> observed_table_pattern(const std::vector<std::string>& stages) {
  auto has = [&](const char* label) {
    return std::find(stages.begin(), stages.end(), label) != stages.end();
  };
  return {has("mod_input"),
          has("mod_value") || has("mod_value_tied"),
          has("mod_value_tied"),
          has("residual_a"),
          has("residual_b"),
          has("residual_modified"),
          has("layernorm_a"),
          has("layernorm_b"),
          has("layernorm_pre"),
          has("feed_forward")};
}

template <class T>
std::optional<Tensor<T>> noise_for_block(const NoiseSpec& spec, const std::string& block,
                                         std::size_t pixels, std::size_t channels) {
  const std::size_t cols = spec.shared_across_channels ? 1 : channels;
  Tensor<T> sheet;
  switch (spec.mode) {
    case NoiseMode::None:
      return std::nullopt;
    case NoiseMode::Random:
      sheet = RngStream(spec.seed, "noise").derive(spec.sample).derive(block).normal_tensor<T>(
          pixels, cols);
      break;
    case NoiseMode::FixedBuffer: {
      auto it = spec.buffers.find(block);
      if (it == spec.buffers.end()) throw ConfigError("no fixed noise buffer for block " + block);
      const auto& b = it->second;
      if (b.rows() != pixels || (b.cols() != channels && b.cols() != 1)) {
        throw ShapeError("noise buffer for " + block + " is " + shape_string(b.rows(), b.cols()) +
                         ", expected " + shape_string(pixels, channels));
      }
      sheet = b.template cast<T>();
      break;
    }
  }
  if (sheet.cols() == channels) return sheet;
  Tensor<T> full(pixels, channels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) full(p, c) = sheet(p, 0);
  }
  return full;
}

template <class T>
EncoderBlock<T>::EncoderBlock(ParameterStore<T>& store, AffineBank<T>& bank, std::uint64_t seed,
                              EncoderConfig config)
    : config_(std::move(config)) {
  const auto& c = config_;
  const auto& v = c.variant;
  if (c.in_channels == 0 || c.hidden == 0 || c.out_channels == 0 || c.pixels == 0) {
    throw ConfigError(c.name + ": encoder dimensions must be positive");
  }
  (void)c.head_config();  // validates hidden against the head layout
  if (v.style_value == StyleValueMode::TiedToInput && c.in_channels != c.hidden) {
    throw ConfigError(c.name + ": tied styles need in_channels == hidden (" +
                      std::to_string(c.in_channels) + " vs " + std::to_string(c.hidden) + ")");
  }
  const std::string& n = c.name;
  auto init = [&](const std::string& suffix, std::size_t rows, std::size_t cols) {
    const std::string id = n + "." + suffix;
    return store.add(id, linear_init<T>(rows, cols, rows, init_stream(seed, id)));
  };

  if (v.style_input == StyleInputMode::On) {
    style_input_id_ = n + ".style_input";
    style_input_ = bank.register_layer(style_input_id_, c.in_channels, StyleRole::Input);
  }
  if (v.style_value == StyleValueMode::On) {
    style_value_id_ = n + ".style_value";
    style_value_ = bank.register_layer(style_value_id_, c.hidden, StyleRole::Value);
  } else if (v.style_value == StyleValueMode::TiedToInput) {
    style_value_id_ = style_input_id_;
    style_value_ = style_input_;
  }

  if (v.layernorm != LayerNormPosition::None) {
    const std::size_t ln_width =
        v.layernorm == LayerNormPosition::Pre ? c.in_channels : c.out_channels;
    ln_gain = store.add(n + ".ln.gain", Tensor<T>(1, ln_width, T{1}));
    ln_bias = store.add(n + ".ln.bias", Tensor<T>(1, ln_width));
  }
  qkv_weight = init("qkv.weight", c.in_channels, 3 * c.hidden);
  wo = init("wo.weight", c.hidden, c.out_channels);
  switch (v.residual) {
    case ResidualMode::Modified: residual_weight = init("residual.weight", c.hidden, c.out_channels); break;
    case ResidualMode::A:
    case ResidualMode::B: residual_weight = init("residual.weight", c.in_channels, c.out_channels); break;
    case ResidualMode::None: break;
  }
  if (v.feed_forward) {
    ff1 = init("ff1.weight", c.out_channels, 4 * c.out_channels);
    ff2 = init("ff2.weight", 4 * c.out_channels, c.out_channels);
  }
  bias = store.add(n + ".bias", Tensor<T>(1, c.out_channels));
  noise_strength = store.add(n + ".noise_strength", Tensor<T>(1, 1));
  if (c.linformer.active(c.pixels)) {
    const std::string id = n + ".linformer_e";
    e_ = store.add(id, init_stream(seed, id).normal_tensor<T>(
                           c.pixels, c.linformer.k, 1.0 / std::sqrt(static_cast<double>(c.pixels))));
  }
}

template <class T>
std::size_t EncoderBlock<T>::parameter_count() const {
  std::size_t total = 0;
  for (const Var<T>* p : {&ln_gain, &ln_bias, &qkv_weight, &wo, &residual_weight, &bias,
                          &noise_strength, &e_, &ff1, &ff2}) {
    if (p->defined()) total += p->value().size();
  }
  for (const AffineStyle<T>* a : {&style_input_, &style_value_}) {
    if (a->weight.defined()) total += a->weight.value().size() + a->bias.value().size();
  }
  // A tied value style reuses the input affine.
  if (config_.variant.style_value == StyleValueMode::TiedToInput && style_input_.weight.defined()) {
    total -= style_input_.weight.value().size() + style_input_.bias.value().size();
  }
  return total;
}

template <class T>
Var<T> EncoderBlock<T>::forward(const Var<T>& x, const Var<T>& w, const NoiseSpec& noise,
                                EncoderTrace<T>* trace) const {
  const auto& c = config_;
  Var<T> s_in = style_input_.weight.defined() ? style_input_.forward(w)
                                              : constant(Tensor<T>(1, c.in_channels, T{1}));
  Var<T> s_val;
  switch (c.variant.style_value) {
    case StyleValueMode::On: s_val = style_value_.forward(w); break;
    case StyleValueMode::TiedToInput: s_val = s_in; break;
    case StyleValueMode::Off: s_val = constant(Tensor<T>(1, c.hidden, T{1})); break;
  }
  return forward_with_styles(x, s_in, s_val, noise, trace);
}

template <class T>
Var<T> EncoderBlock<T>::forward_with_styles(const Var<T>& x, const Var<T>& style_input,
                                            const Var<T>& style_value, const NoiseSpec& noise,
                                            EncoderTrace<T>* trace) const {
  const auto& c = config_;
  const auto& v = c.variant;
  if (x.cols() != c.in_channels || x.rows() != c.pixels) {
    throw ShapeError(c.name + ": input sheet is " + shape_string(x.rows(), x.cols()) +
                     ", expected " + shape_string(c.pixels, c.in_channels));
  }
  if (style_input.rows() != 1 || style_input.cols() != c.in_channels) {
    throw ShapeError(c.name + ": style_input has " + std::to_string(style_input.cols()) +
                     " entries, expected " + std::to_string(c.in_channels));
  }
  if (style_value.rows() != 1 || style_value.cols() != c.hidden) {
    throw ShapeError(c.name + ": style_value has " + std::to_string(style_value.cols()) +
                     " entries, expected " + std::to_string(c.hidden));
  }
  auto stage = [&](const Var<T>& y, const char* label) {
    if (!all_finite(y.value())) {
      throw NumericError(c.name + ": non-finite values after stage '" + label + "'");
    }
    if (trace) trace->stages.emplace_back(label);
  };
  if (trace) {
    trace->style_input = style_input.value();
    trace->style_value = style_value.value();
  }

  Var<T> xm = x;
  if (v.style_input == StyleInputMode::On) {
    xm = ag::scale_columns(x, style_input);
    stage(xm, "mod_input");
  }
  Var<T> normalized = xm;
  if (v.layernorm == LayerNormPosition::Pre) {
    normalized = ag::add_row_vector(ag::scale_columns(ag::layer_norm_rows(xm), ln_gain), ln_bias);
    stage(normalized, "layernorm_pre");
  }

  Var<T> qkv = demodulated_linear(normalized, qkv_weight, style_input, c.demod.qk);
  Var<T> q = ag::slice_cols(qkv, 0, c.hidden);
  Var<T> k = ag::slice_cols(qkv, c.hidden, c.hidden);
  Var<T> val = ag::slice_cols(qkv, 2 * c.hidden, c.hidden);
  if (c.demod.qk != c.demod.v) {
    // V alone follows its own switch.
    Var<T> raw = ag::matmul(normalized, qkv_weight);
    Var<T> vraw = ag::slice_cols(raw, 2 * c.hidden, c.hidden);
    if (c.demod.v) {
      Var<T> rss = ag::column_rss(ag::scale_rows(qkv_weight, style_input));
      vraw = ag::divide_columns(vraw, ag::slice_cols(rss, 2 * c.hidden, c.hidden));
    }
    val = vraw;
  }
  stage(qkv, "qkv");
  if (trace) {
    trace->normalized = normalized.value();
    trace->q = q.value();
    trace->k = k.value();
    trace->v = val.value();
  }

  Var<T> vm = val;
  if (v.style_value != StyleValueMode::Off) {
    vm = ag::scale_columns(val, style_value);
    stage(vm, v.style_value == StyleValueMode::TiedToInput ? "mod_value_tied" : "mod_value");
  }
  if (trace) trace->value_modulated = vm.value();

  Var<T> keys = k;
  Var<T> values = vm;
  if (e_.defined()) {
    keys = ag::matmul(e_, k, Trans::Yes);
    values = ag::matmul(e_, vm, Trans::Yes);
    stage(values, "linformer");
  }

  std::vector<Var<T>> maps;
  Var<T> heads = multi_head_attention(q, keys, values, c.head_config(), trace ? &maps : nullptr);
  stage(heads, "attention");
  if (trace) {
    trace->attention.clear();
    for (const auto& a : maps) trace->attention.push_back(a.value());
  }

  Var<T> out = demodulated_linear(heads, wo, style_value, c.demod.output);
  stage(out, "integration");
  if (v.layernorm == LayerNormPosition::A) {
    out = ag::add_row_vector(ag::scale_columns(ag::layer_norm_rows(out), ln_gain), ln_bias);
    stage(out, "layernorm_a");
  }
  if (trace) trace->integrated = out.value();

  Var<T> res;
  switch (v.residual) {
    case ResidualMode::Modified:
      res = demodulated_linear(vm, residual_weight, style_value, c.demod.residual);
      stage(res, "residual_modified");
      break;
    case ResidualMode::A:
      res = ag::matmul(x, residual_weight);
      stage(res, "residual_a");
      break;
    case ResidualMode::B:
      res = ag::matmul(normalized, residual_weight);
      stage(res, "residual_b");
      break;
    case ResidualMode::None:
      break;
  }
  Var<T> y = out;
  if (res.defined()) {
    y = ag::add(out, res);
    if (trace) trace->residual = res.value();
  }

  if (v.feed_forward) {
    y = feed_forward_optional(y, ff1, ff2);
    stage(y, "feed_forward");
  }

  auto noise_sheet = noise_for_block<T>(noise, c.name, c.pixels, c.out_channels);
  auto add_bias = [&] {
    y = ag::add_row_vector(y, bias);
    stage(y, "bias");
  };
  auto add_noise = [&] {
    if (!noise_sheet) return;
    y = ag::add(y, ag::scale_by(constant(std::move(*noise_sheet)), noise_strength));
    stage(y, "noise");
  };
  if (c.bias_before_noise) {
    add_bias();
    add_noise();
  } else {
    add_noise();
    add_bias();
  }
  if (trace) trace->pre_activation = y.value();

  y = ag::leaky_relu(y, static_cast<T>(kLeakySlope));
  stage(y, "activation");
  if (v.layernorm == LayerNormPosition::B) {
    y = ag::add_row_vector(ag::scale_columns(ag::layer_norm_rows(y), ln_gain), ln_bias);
    stage(y, "layernorm_b");
  }
  if (trace) trace->output = y.value();
  return y;
}

template <class T>
Var<T> feed_forward_optional(const Var<T>& y, const Var<T>& w1, const Var<T>& w2) {
  if (w1.rows() != y.cols() || w2.cols() != y.cols() || w1.cols() != w2.rows()) {
    throw ShapeError("feed_forward: weights do not match a width-" + std::to_string(y.cols()) +
                     " sheet");
  }
  Var<T> h = ag::leaky_relu(ag::matmul(y, w1), static_cast<T>(kLeakySlope));
  return ag::add(y, ag::matmul(h, w2));
}

#define STYLEFORMER_INSTANTIATE_ENCODER(T)                                                   \
  template std::optional<Tensor<T>> noise_for_block<T>(const NoiseSpec&, const std::string&, \
                                                       std::size_t, std::size_t);            \
  template class EncoderBlock<T>;                                                            \
  template Var<T> feed_forward_optional(const Var<T>&, const Var<T>&, const Var<T>&);

STYLEFORMER_INSTANTIATE_ENCODER(float)
STYLEFORMER_INSTANTIATE_ENCODER(double)

}  // namespace styleformer
