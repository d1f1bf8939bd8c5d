#include "styleformer/generator.hpp"

#include <optional>

namespace styleformer {

const char* to_string(GeneratorMode mode) {
  switch (mode) {
    case GeneratorMode::Styleformer: return "styleformer";
    case GeneratorMode::StyleformerL: return "styleformer-l";
    case GeneratorMode::StyleformerC: return "styleformer-c";
  }
  return "unknown";
}

GeneratorMode parse_generator_mode(std::string_view text) {
  for (auto m : {GeneratorMode::Styleformer, GeneratorMode::StyleformerL, GeneratorMode::StyleformerC}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown generator mode '" + std::string(text) + "'");
}

std::size_t GeneratorConfig::resolution(std::size_t stage) const {
  return start_resolution << stage;
}

bool GeneratorConfig::is_conv_stage(std::size_t stage) const {
  return mode == GeneratorMode::StyleformerC && resolution(stage) > hybrid_cutoff;
}

std::size_t GeneratorConfig::incoming_channels(std::size_t stage) const {
  return stage == 0 ? hidden.at(0) : hidden.at(stage - 1);
}

void GeneratorConfig::validate() const {
  auto fail = [&](const std::string& msg) { throw ConfigError(preset + ": " + msg); };
  if (layers.empty()) fail("no resolution stages");
  if (layers.size() != hidden.size()) {
    fail("layers has " + std::to_string(layers.size()) + " stages but hidden has " +
         std::to_string(hidden.size()));
  }
  if (!heads.empty() && heads.size() != layers.size()) fail("heads must list one entry per stage");
  if (start_resolution == 0) fail("start resolution must be positive");
  if (start_resolution << (layers.size() - 1) != target_resolution) {
    fail("doubling schedule from " + std::to_string(start_resolution) + " over " +
         std::to_string(layers.size()) + " stages ends at " +
         std::to_string(start_resolution << (layers.size() - 1)) + ", not target " +
         std::to_string(target_resolution));
  }
  if (rgb_channels == 0 || z_dim == 0 || w_dim == 0) fail("rgb/z/w dimensions must be positive");
  if (mode == GeneratorMode::StyleformerL && linformer_k == 0) fail("linformer k must be positive");
  for (std::size_t t = 0; t < layers.size(); ++t) {
    if (layers[t] == 0) fail("stage " + std::to_string(t) + " has no blocks");
    if (hidden[t] == 0) fail("stage " + std::to_string(t) + " has zero hidden size");
    if (is_conv_stage(t)) continue;
    const std::size_t h = heads.empty() ? 0 : heads[t];
    if (h == 0 && hidden[t] % kHeadDepth != 0) {
      fail("stage " + std::to_string(t) + " hidden size " + std::to_string(hidden[t]) +
           " is not divisible by " + std::to_string(kHeadDepth));
    }
    if (h != 0 && hidden[t] % h != 0) {
      fail("stage " + std::to_string(t) + " hidden size " + std::to_string(hidden[t]) +
           " is not divisible into " + std::to_string(h) + " heads");
    }
  }
}

namespace {

struct PresetEntry {
  const char* name;
  GeneratorConfig config;
};

GeneratorConfig make_preset(const char* name, std::size_t start, std::size_t target,
                            std::vector<std::size_t> layers, std::vector<std::size_t> hidden,
                            GeneratorMode mode = GeneratorMode::Styleformer) {
  GeneratorConfig c;
  c.preset = name;
  c.start_resolution = start;
  c.target_resolution = target;
  c.layers = std::move(layers);
  c.hidden = std::move(hidden);
  c.mode = mode;
  return c;
}

const std::vector<PresetEntry>& preset_table() {
  static const std::vector<PresetEntry> table = [] {
    using M = GeneratorMode;
    std::vector<PresetEntry> t;
    auto add = [&](GeneratorConfig c) { t.push_back({nullptr, std::move(c)}); };
    add(make_preset("cifar10", 8, 32, {1, 3, 3}, {1024, 512, 512}));
    add(make_preset("stl10", 12, 48, {1, 2, 2}, {1024, 256, 64}));
    add(make_preset("celeba", 8, 64, {1, 2, 1, 1}, {1024, 256, 64, 64}));
    add(make_preset("celeba-l", 8, 64, {1, 2, 1, 1}, {1024, 256, 64, 64}, M::StyleformerL));
    add(make_preset("lsun-church-l", 8, 128, {1, 2, 1, 1, 1}, {1024, 256, 64, 64, 64},
                    M::StyleformerL));
    add(make_preset("clevr-c", 8, 256, {1, 2, 1, 1, 1, 1}, {1024, 256, 256, 256, 256, 128},
                    M::StyleformerC));
    add(make_preset("cityscapes-c", 8, 256, {1, 2, 1, 1, 1, 1}, {1024, 256, 256, 256, 256, 128},
                    M::StyleformerC));
    // The published list has six stages, one short of 8 -> 512; the last
    // convolutional stage is repeated at 512.
    add(make_preset("afhq-cat-c", 8, 512, {1, 2, 1, 1, 1, 1, 1},
                    {1024, 256, 256, 256, 256, 64, 64}, M::StyleformerC));
    auto small = make_preset("ablation-small", 8, 32, {1, 2, 2}, {256, 64, 16});
    small.heads = {0, 0, 1};  // 16 channels: a single 16-deep head
    add(small);
    add(make_preset("one-layer", 32, 32, {1}, {256}));
    auto toy = make_preset("toy", 4, 8, {1, 1}, {32, 32});
    toy.z_dim = 32;
    toy.w_dim = 32;
    add(toy);
    for (auto& e : t) e.name = nullptr;
    return t;
  }();
  return table;
}

}  // namespace

GeneratorConfig GeneratorConfig::preset_config(std::string_view name) {
  for (const auto& e : preset_table()) {
    if (e.config.preset == name) return e.config;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

const std::vector<std::string>& GeneratorConfig::preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& e : preset_table()) n.push_back(e.config.preset);
    return n;
  }();
  return names;
}

template <class T>
Var<T> modulated_conv3x3(const Var<T>& x, std::size_t side, const Var<T>& weight,
                         const Var<T>& style, bool demodulate) {
  const std::size_t cin = x.cols();
  if (weight.rows() != 9 * cin || style.cols() != cin) {
    throw ShapeError("modulated_conv3x3: weight " + shape_string(weight.rows(), weight.cols()) +
                     " / style " + std::to_string(style.cols()) + " do not fit " +
                     std::to_string(cin) + " input channels");
  }
  Var<T> y = ag::conv3x3(ag::scale_columns(x, style), side, weight);
  if (!demodulate) return y;
  // every tap row of channel c is scaled by s_c
  Var<T> tiled = ag::concat_cols(std::vector<Var<T>>(9, style));
  return ag::divide_columns(y, ag::column_rss(ag::scale_rows(weight, tiled)));
}

template <class T>
Var<T> HybridConvBlock<T>::forward(const Var<T>& x, const Var<T>& w0, const Var<T>& w1,
                                   const NoiseSpec& noise) const {
  Var<T> h = x;
  const Var<T>* ws[2] = {&w0, &w1};
  for (int i = 0; i < 2; ++i) {
    h = modulated_conv3x3(h, side, weight[i], style[i].forward(*ws[i]));
    h = ag::add_row_vector(h, bias[i]);
    const std::string key = name + (i == 0 ? ".a" : ".b");
    if (auto n = noise_for_block<T>(noise, key, h.rows(), h.cols())) {
      h = ag::add(h, ag::scale_by(constant(std::move(*n)), noise_strength[i]));
    }
    h = ag::leaky_relu(h, static_cast<T>(kLeakySlope));
    if (!all_finite(h.value())) throw NumericError(key + ": non-finite values after convolution");
  }
  return h;
}

template <class T>
std::size_t HybridConvBlock<T>::parameter_count() const {
  std::size_t total = 0;
  for (int i = 0; i < 2; ++i) {
    total += weight[i].value().size() + bias[i].value().size() + noise_strength[i].value().size();
    total += style[i].weight.value().size() + style[i].bias.value().size();
  }
  return total;
}

template <class T>
Generator<T>::Generator(GeneratorConfig config)
    : config_(std::move(config)), bank_(&store_, config_.seed, config_.w_dim) {
  config_.validate();
  const auto& c = config_;
  const std::uint64_t seed = c.seed;
  mapping_ = MappingNetwork<T>(store_, seed, c.z_dim, c.w_dim);

  const std::size_t n0 = c.start_resolution * c.start_resolution;
  constant_ = store_.add("const", init_stream(seed, "const").normal_tensor<T>(n0, c.hidden[0]));

  for (std::size_t t = 0; t < c.stage_count(); ++t) {
    const std::size_t before = store_.scalar_count();
    const std::string prefix = "s" + std::to_string(t);
    Stage stage;
    stage.resolution = c.resolution(t);
    const std::size_t side = stage.resolution;
    const std::size_t pixels = side * side;
    const std::size_t incoming = c.incoming_channels(t);
    StageSummary sum;
    sum.index = t;
    sum.resolution = side;
    sum.pixels = pixels;
    sum.in_channels = incoming;
    sum.hidden = c.hidden[t];
    sum.blocks = c.layers[t];
    sum.conv = c.is_conv_stage(t);

    if (t == 0 || c.positional_encoding_every_stage) {
      const std::string id = prefix + ".pos";
      stage.positional = store_.add(id, init_stream(seed, id).normal_tensor<T>(pixels, incoming, 0.02));
    }

    std::size_t in = incoming;
    for (std::size_t b = 0; b < c.layers[t]; ++b) {
      if (sum.conv) {
        HybridConvBlock<T> blk;
        blk.name = prefix + ".conv" + std::to_string(b);
        blk.in_channels = in;
        blk.channels = c.hidden[t];
        blk.side = side;
        std::size_t cin = in;
        for (int i = 0; i < 2; ++i) {
          const std::string sub = blk.name + (i == 0 ? ".a" : ".b");
          blk.weight[i] = store_.add(sub + ".weight",
                                     linear_init<T>(9 * cin, c.hidden[t], 9 * cin,
                                                    init_stream(seed, sub + ".weight")));
          blk.bias[i] = store_.add(sub + ".bias", Tensor<T>(1, c.hidden[t]));
          blk.noise_strength[i] = store_.add(sub + ".noise_strength", Tensor<T>(1, 1));
          blk.style[i] = bank_.register_layer(sub + ".style", cin, StyleRole::Conv);
          slots_.push_back({sub, t, side, StyleRole::Conv});
          cin = c.hidden[t];
        }
        stage.convs.push_back(std::move(blk));
      } else {
        EncoderConfig ec;
        ec.name = prefix + ".enc" + std::to_string(b);
        ec.in_channels = in;
        ec.hidden = c.hidden[t];
        ec.out_channels = c.hidden[t];
        ec.pixels = pixels;
        ec.heads_override = c.heads.empty() ? 0 : c.heads[t];
        ec.variant = c.variant;
        ec.linformer.enabled = c.mode == GeneratorMode::StyleformerL;
        ec.linformer.k = c.linformer_k;
        ec.linformer.min_pixels = c.linformer_min_pixels;
        ec.bias_before_noise = c.bias_before_noise;
        stage.encoders.emplace_back(store_, bank_, seed, ec);
        slots_.push_back({ec.name, t, side, StyleRole::Input});
        const auto& blk = stage.encoders.back();
        const auto hc = ec.head_config();
        sum.heads = hc.heads;
        sum.linformer = blk.linformer_active();
        const std::size_t kl = sum.linformer ? c.linformer_k : 0;
        const auto cost = attention_stage_cost(pixels, c.hidden[t], hc.heads, kl);
        sum.attention_flops += cost.flops;
        sum.attention_map_elements += cost.map_elements_per_head * hc.heads;
      }
      in = c.hidden[t];
    }

    const std::string rgb = prefix + ".torgb";
    stage.rgb_weight = store_.add(rgb + ".weight",
                                  linear_init<T>(c.hidden[t], c.rgb_channels, c.hidden[t],
                                                 init_stream(seed, rgb + ".weight")));
    stage.rgb_bias = store_.add(rgb + ".bias", Tensor<T>(1, c.rgb_channels));
    stage.rgb_style = bank_.register_layer(rgb + ".style", c.hidden[t], StyleRole::Rgb);
    slots_.push_back({rgb, t, side, StyleRole::Rgb});

    sum.parameters = store_.scalar_count() - before;
    summaries_.push_back(sum);
    stages_.push_back(std::move(stage));
  }
}

template <class T>
Var<T> Generator<T>::forward(const Var<T>& z, const NoiseSpec& noise, GeneratorTrace<T>* trace) const {
  Var<T> w = mapping_.forward(z);
  return forward_styles(std::vector<Var<T>>(slots_.size(), w), noise, trace);
}

template <class T>
Var<T> Generator<T>::forward_styles(const std::vector<Var<T>>& ws, const NoiseSpec& noise,
                                    GeneratorTrace<T>* trace) const {
  if (ws.size() != slots_.size()) {
    throw ShapeError("generator expects " + std::to_string(slots_.size()) + " style latents, got " +
                     std::to_string(ws.size()));
  }
  for (const auto& w : ws) {
    if (w.rows() != 1 || w.cols() != config_.w_dim) {
      throw ShapeError("style latent must be 1x" + std::to_string(config_.w_dim));
    }
  }
  if (trace) trace->stages.clear();
  Var<T> x = constant_;
  Var<T> img;
  std::size_t slot = 0;
  for (std::size_t t = 0; t < stages_.size(); ++t) {
    const Stage& st = stages_[t];
    std::optional<OpCounter> counter;
    if (trace) counter.emplace();
    StageTrace<T> rec;
    rec.resolution = st.resolution;

    if (st.positional.defined()) x = ag::add(x, st.positional);
    if (trace) rec.entry = x.value();
    for (const auto& blk : st.encoders) {
      EncoderTrace<T> et;
      x = blk.forward(x, ws[slot++], noise, trace ? &et : nullptr);
      if (trace) rec.attention.push_back({std::move(et.attention)});
    }
    for (const auto& blk : st.convs) {
      x = blk.forward(x, ws[slot], ws[slot + 1], noise);
      slot += 2;
    }
    if (trace) rec.output = x.value();

    Var<T> s = st.rgb_style.forward(ws[slot++]);
    Var<T> rgb = ag::add_row_vector(
        demodulated_linear(ag::scale_columns(x, s), st.rgb_weight, s), st.rgb_bias);
    img = t == 0 ? rgb : ag::add(ag::upsample_2x(img, stages_[t - 1].resolution), rgb);
    if (t + 1 < stages_.size()) x = ag::upsample_2x(x, st.resolution);

    if (trace) {
      rec.rgb = rgb.value();
      rec.image = img.value();
      rec.ops = counter->counts();
      counter.reset();  // merges into any enclosing counter
      trace->stages.push_back(std::move(rec));
    }
  }
  return img;
}

template <class T>
FeatureMap<T> Generator<T>::synthesize(const LatentZ<T>& z, const NoiseSpec& noise,
                                       GeneratorTrace<T>* trace) const {
  return synthesize_with_styles(std::vector<LatentW<T>>(slots_.size(), map(z)), noise, trace);
}

template <class T>
FeatureMap<T> Generator<T>::synthesize_with_styles(const std::vector<LatentW<T>>& ws,
                                                   const NoiseSpec& noise,
                                                   GeneratorTrace<T>* trace) const {
  NoGradGuard guard;
  std::vector<Var<T>> vars;
  vars.reserve(ws.size());
  for (const auto& w : ws) vars.push_back(constant(w.values));
  auto sheet = forward_styles(vars, noise, trace);
  return unflatten(sheet.value(), config_.target_resolution, config_.target_resolution);
}

template <class T>
std::vector<LatentW<T>> Generator<T>::mixed_styles(const LatentW<T>& low, const LatentW<T>& high,
                                                   std::size_t cutoff) const {
  std::vector<LatentW<T>> out;
  out.reserve(slots_.size());
  for (const auto& s : slots_) out.push_back(s.resolution <= cutoff ? low : high);
  return out;
}

template <class T>
AttentionExport<T> Generator<T>::export_attention(const LatentZ<T>& z, const NoiseSpec& noise) const {
  GeneratorTrace<T> trace;
  (void)synthesize(z, noise, &trace);
  AttentionExport<T> out;
  for (std::size_t t = 0; t < trace.stages.size(); ++t) {
    for (std::size_t b = 0; b < trace.stages[t].attention.size(); ++b) {
      typename AttentionExport<T>::Block blk;
      blk.stage = t;
      blk.block = b;
      blk.resolution = trace.stages[t].resolution;
      blk.linformer = stages_[t].encoders[b].linformer_active();
      blk.maps = std::move(trace.stages[t].attention[b]);
      out.blocks.push_back(std::move(blk));
    }
  }
  return out;
}

template <class T>
Tensor<T> AttentionExport<T>::heatmap(std::size_t block, std::size_t head,
                                      std::size_t query_pixel) const {
  const auto& b = blocks.at(block);
  if (b.linformer) throw ConfigError("heatmap: Linformer attention columns are not pixels");
  const auto& a = b.maps.heads.at(head);
  if (query_pixel >= a.rows()) throw ShapeError("heatmap: query pixel out of range");
  const std::size_t side = square_side(a.cols());
  Tensor<T> out(side, side);
  for (std::size_t p = 0; p < a.cols(); ++p) out[p] = a(query_pixel, p);
  return out;
}

#define STYLEFORMER_INSTANTIATE_GENERATOR(T)                                                  \
  template Var<T> modulated_conv3x3(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, \
                                    bool);                                                    \
  template struct HybridConvBlock<T>;                                                         \
  template struct AttentionExport<T>;                                                         \
  template class Generator<T>;

STYLEFORMER_INSTANTIATE_GENERATOR(float)
STYLEFORMER_INSTANTIATE_GENERATOR(double)

}  // namespace styleformer
