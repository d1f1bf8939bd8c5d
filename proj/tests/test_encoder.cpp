#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "styleformer/encoder.hpp"

using namespace styleformer;

namespace {

EncoderConfig small_config(AblationVariant v = {}, std::size_t c = 64, std::size_t n = 16) {
  EncoderConfig cfg;
  cfg.name = "enc";
  cfg.in_channels = c;
  cfg.hidden = c;
  cfg.out_channels = c;
  cfg.pixels = n;
  cfg.variant = v;
  return cfg;
}

Var<double> latent(std::uint64_t seed, std::size_t dim = 512) {
  return constant(RngStream(seed, "w").normal_tensor<double>(1, dim));
}

Var<double> sheet(std::uint64_t seed, std::size_t n, std::size_t c) {
  return constant(RngStream(seed, "x").normal_tensor<double>(n, c));
}

}  // namespace

TEST_CASE("baseline variant reproduces the baseline table row") {
  const std::array<bool, 10> baseline{true, true, false, false, false, true, false, false, true, false};
  CHECK(AblationVariant{}.table_pattern() == baseline);
  CHECK(AblationVariant::named("baseline") == AblationVariant{});
  CHECK(AblationVariant{}.name() == "baseline");
  CHECK_THROWS_AS(AblationVariant::named("nope"), ConfigError);
}

TEST_CASE("each named variant executes exactly the stages of its table row") {
  for (const auto& name : ablation_variant_names()) {
    CAPTURE(name);
    const auto v = AblationVariant::named(name);
    CHECK(v.name() == name);
    StandaloneEncoder<double> enc(small_config(v, 32, 9), 3);
    EncoderTrace<double> trace;
    (void)enc.block.forward(sheet(1, 9, 32), latent(2), NoiseSpec::none(), &trace);
    CHECK(observed_table_pattern(trace.stages) == v.table_pattern());
  }
}

TEST_CASE("baseline stage order puts layer norm after input modulation and before Q/K/V") {
  StandaloneEncoder<double> enc(small_config(), 1);
  EncoderTrace<double> trace;
  (void)enc.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::none(), &trace);
  const std::vector<std::string> expected{"mod_input", "layernorm_pre",     "qkv",  "mod_value",
                                          "attention", "integration",       "residual_modified",
                                          "bias",      "activation"};
  CHECK(trace.stages == expected);
  // Normalization statistics come from the modulated input.
  auto xm = scale_columns(sheet(1, 16, 64).value(), trace.style_input);
  CHECK(oracle::max_abs_diff(trace.normalized, layer_norm_rows(xm)) < 1e-12);
}

TEST_CASE("identity-configured block returns the activated attention output") {
  StandaloneEncoder<double> enc(small_config({}, 32, 9), 4);
  auto& b = enc.block;
  b.wo.mutable_value() = Tensor<double>::identity(32);
  b.residual_weight.mutable_value() = Tensor<double>(32, 32);
  b.bias.mutable_value() = Tensor<double>(1, 32);
  Tensor<double> row = RngStream(5, "row").normal_tensor<double>(1, 32);
  Tensor<double> x(9, 32);
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t c = 0; c < 32; ++c) x(p, c) = row(0, c);
  EncoderTrace<double> trace;
  auto ones_in = constant(Tensor<double>(1, 32, 1.0));
  auto y = b.forward_with_styles(constant(x), ones_in, ones_in, NoiseSpec::none(), &trace);
  for (const auto& a : trace.attention)
    for (double v : a.values()) CHECK(v == doctest::Approx(1.0 / 9).epsilon(1e-12));
  auto expected = leaky_relu(trace.integrated, 0.2);
  CHECK(oracle::max_abs_diff(y.value(), expected) < 1e-14);
  for (std::size_t p = 1; p < 9; ++p)
    for (std::size_t c = 0; c < 32; ++c) CHECK(y.value()(p, c) == doctest::Approx(y.value()(0, c)));
  // uniform attention over identical rows returns V itself
  CHECK(oracle::max_abs_diff(trace.integrated, trace.value_modulated) < 1e-12);
}

TEST_CASE("noise-free forward passes are bit-identical") {
  StandaloneEncoder<float> enc(small_config(), 7);
  auto x = constant(RngStream(1, "x").normal_tensor<float>(16, 64));
  auto w = constant(RngStream(2, "w").normal_tensor<float>(1, 512));
  auto a = enc.block.forward(x, w, NoiseSpec::none());
  auto b = enc.block.forward(x, w, NoiseSpec::none());
  CHECK(a.value() == b.value());
}

TEST_CASE("seeded noise is reproducible per sample and differs across samples") {
  StandaloneEncoder<double> enc(small_config(), 7);
  enc.block.noise_strength.mutable_value() = Tensor<double>{{0.5}};
  auto x = sheet(1, 16, 64);
  auto w = latent(2);
  auto a = enc.block.forward(x, w, NoiseSpec::random(9, 0));
  auto b = enc.block.forward(x, w, NoiseSpec::random(9, 0));
  auto c = enc.block.forward(x, w, NoiseSpec::random(9, 1));
  CHECK(a.value() == b.value());
  CHECK(oracle::max_abs_diff(a.value(), c.value()) > 1e-3);

  NoiseSpec shared = NoiseSpec::random(9);
  shared.shared_across_channels = true;
  auto sheet_noise = noise_for_block<double>(shared, "enc", 16, 64);
  REQUIRE(sheet_noise);
  for (std::size_t c = 1; c < 64; ++c) CHECK((*sheet_noise)(3, c) == (*sheet_noise)(3, 0));

  NoiseSpec fixed;
  fixed.mode = NoiseMode::FixedBuffer;
  fixed.buffers["enc"] = Tensor<double>(16, 64, 1.0);
  // strength 0.5 times a unit buffer, before the leaky activation
  EncoderTrace<double> td, te;
  (void)enc.block.forward(x, w, fixed, &td);
  (void)enc.block.forward(x, w, NoiseSpec::none(), &te);
  CHECK(oracle::max_abs_diff(subtract(td.pre_activation, te.pre_activation), Tensor<double>(16, 64, 0.5)) <
        1e-12);
  CHECK_THROWS_AS(enc.block.forward(x, w, [] {
    NoiseSpec n;
    n.mode = NoiseMode::FixedBuffer;
    return n;
  }()), ConfigError);
}

TEST_CASE("bias and noise order is configurable and commutes for additive terms") {
  auto cfg = small_config();
  StandaloneEncoder<double> a(cfg, 3);
  cfg.bias_before_noise = false;
  StandaloneEncoder<double> b(cfg, 3);
  for (auto* enc : {&a, &b}) {
    enc->block.noise_strength.mutable_value() = Tensor<double>{{0.3}};
    enc->block.bias.mutable_value() = Tensor<double>(1, 64, 0.1);
  }
  EncoderTrace<double> ta, tb;
  (void)a.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::random(1), &ta);
  (void)b.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::random(1), &tb);
  CHECK(std::find(ta.stages.begin(), ta.stages.end(), "bias") <
        std::find(ta.stages.begin(), ta.stages.end(), "noise"));
  CHECK(std::find(tb.stages.begin(), tb.stages.end(), "noise") <
        std::find(tb.stages.begin(), tb.stages.end(), "bias"));
  CHECK(oracle::max_abs_diff(ta.pre_activation, tb.pre_activation) < 1e-14);
}

TEST_CASE("demodulated Q/K/V have unit std when the input goes straight to the projection") {
  // No layer norm between Mod Input and the projection: the demodulation
  // assumption (independent unit-std inputs) holds exactly.
  AblationVariant v;
  v.layernorm = LayerNormPosition::None;
  StandaloneEncoder<double> enc(small_config(v, 64, 256), 5);
  std::vector<Tensor<double>> q, k, val;
  for (std::uint64_t trial = 0; trial < 64; ++trial) {
    EncoderTrace<double> t;
    // one latent, many input draws: the column std is a property of the weights
    (void)enc.block.forward(sheet(100 + trial, 256, 64), latent(3), NoiseSpec::none(), &t);
    q.push_back(t.q), k.push_back(t.k), val.push_back(t.v);
  }
  for (auto* parts : {&q, &k, &val}) {
    auto pooled = concat_rows(*parts);
    for (std::size_t c = 0; c < 64; ++c) {
      const double sd = oracle::column_std(pooled, c);
      CHECK(sd > 0.97);
      CHECK(sd < 1.03);
    }
  }
}

TEST_CASE("with pre layer norm the Q/K/V std is set by the input style's rms") {
  // Layer norm after Mod Input rescales every pixel to unit variance, so
  // channel c carries std s_c / rms(s) and demodulation leaves 1 / rms(s).
  StandaloneEncoder<double> enc(small_config({}, 64, 256), 6);
  EncoderTrace<double> first;
  std::vector<Tensor<double>> q;
  for (std::uint64_t trial = 0; trial < 64; ++trial) {
    EncoderTrace<double> t;
    (void)enc.block.forward(sheet(200 + trial, 256, 64), latent(4), NoiseSpec::none(), &t);
    q.push_back(t.q);
    if (trial == 0) first = t;
  }
  double ms = 0;
  for (double s : first.style_input.values()) ms += s * s;
  const double predicted = 1.0 / std::sqrt(ms / 64);
  auto pooled = concat_rows(q);
  double mean_sd = 0;
  for (std::size_t c = 0; c < 64; ++c) mean_sd += oracle::column_std(pooled, c) / 64;
  CHECK(std::abs(mean_sd / predicted - 1) < 0.03);
}

TEST_CASE("pre-activation per-pixel std stays within the attention/residual envelope") {
  // attention branch std sqrt(sum A^2), residual branch std ~1
  StandaloneEncoder<double> enc(small_config({}, 32, 16), 8);
  const std::size_t n = 16, c = 32, latents = 10000;
  std::vector<double> sum(n), sumsq(n), env(n);
  RngStream rng(12, "envelope");
  for (std::size_t m = 0; m < latents; ++m) {
    auto x = constant(rng.normal_tensor<double>(n, c));
    auto w = constant(rng.normal_tensor<double>(1, 512, 0.5));
    EncoderTrace<double> t;
    NoGradGuard guard;
    (void)enc.block.forward(x, w, NoiseSpec::none(), &t);
    for (std::size_t l = 0; l < n; ++l) {
      for (double v : t.pre_activation.row(l)) {
        sum[l] += v;
        sumsq[l] += v * v;
      }
      double a2 = 0;
      for (const auto& a : t.attention)
        for (double e : a.row(l)) a2 += e * e;
      env[l] += std::sqrt(a2 / t.attention.size()) / latents;
    }
  }
  const double delta = 0.05;
  for (std::size_t l = 0; l < n; ++l) {
    const double count = static_cast<double>(latents * c);
    const double mean = sum[l] / count;
    const double sd = std::sqrt(sumsq[l] / count - mean * mean);
    CAPTURE(l);
    CHECK(sd >= 1 - delta);
    CHECK(sd <= 1 + env[l] + delta);
  }
}

TEST_CASE("disabling Q/K demodulation concentrates attention under large styles") {
  double on = 0, off = 0;
  const int seeds = 30;
  for (int seed = 0; seed < seeds; ++seed) {
    for (bool demod : {true, false}) {
      auto cfg = small_config({}, 64, 64);
      cfg.variant.layernorm = LayerNormPosition::None;
      cfg.demod.qk = demod;
      StandaloneEncoder<double> enc(cfg, 100 + seed);
      RngStream s(seed, "styles");
      auto s_in = constant(s.normal_tensor<double>(1, 64, 10.0, 1.0));
      auto s_val = constant(s.normal_tensor<double>(1, 64, 10.0, 1.0));
      EncoderTrace<double> t;
      (void)enc.block.forward_with_styles(sheet(seed, 64, 64), s_in, s_val, NoiseSpec::none(), &t);
      double mx = 0;
      for (const auto& a : t.attention)
        for (std::size_t r = 0; r < a.rows(); ++r)
          mx += *std::max_element(a.row(r).begin(), a.row(r).end()) / (a.rows() * t.attention.size());
      (demod ? on : off) += mx / seeds;
    }
  }
  CHECK(off > on);
}

TEST_CASE("feed-forward is absent by default and adds 8 hidden^2 parameters when on") {
  StandaloneEncoder<double> base(small_config({}, 64), 1);
  StandaloneEncoder<double> ff(small_config(AblationVariant::named("feed-forward"), 64), 1);
  CHECK(ff.block.parameter_count() - base.block.parameter_count() == 8 * 64 * 64);
  CHECK(ff.store.scalar_count() - base.store.scalar_count() == 8 * 64 * 64);

  OpCounter cb;
  (void)base.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::none());
  const auto base_flops = cb.counts().total_flops();
  OpCounter cb2;
  (void)base.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::none());
  CHECK(cb2.counts().total_flops() == base_flops);
  OpCounter cf;
  (void)ff.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::none());
  CHECK(cf.counts().total_flops() > base_flops);
}

TEST_CASE("zero-weight feed-forward is the identity") {
  RngStream rng(3, "ff");
  auto y = constant(rng.normal_tensor<double>(5, 8));
  auto out = feed_forward_optional(y, constant(Tensor<double>(8, 32)), constant(Tensor<double>(32, 8)));
  CHECK(out.value() == y.value());
}

TEST_CASE("shape and configuration errors are reported") {
  StandaloneEncoder<double> enc(small_config(), 1);
  CHECK_THROWS_AS(enc.block.forward(sheet(1, 16, 32), latent(2), NoiseSpec::none()), ShapeError);
  CHECK_THROWS_AS(enc.block.forward(sheet(1, 15, 64), latent(2), NoiseSpec::none()), ShapeError);
  auto bad = small_config();
  bad.hidden = 48;
  CHECK_THROWS_AS(StandaloneEncoder<double>(bad, 1), ConfigError);
  auto tied = small_config(AblationVariant::named("style-tied"));
  tied.hidden = 32;
  tied.out_channels = 32;
  CHECK_THROWS_AS(StandaloneEncoder<double>(tied, 1), ConfigError);
}

TEST_CASE("non-finite intermediates name the failing stage") {
  StandaloneEncoder<double> enc(small_config(), 1);
  enc.block.wo.mutable_value()(0, 0) = std::numeric_limits<double>::infinity();
  try {
    (void)enc.block.forward(sheet(1, 16, 64), latent(2), NoiseSpec::none());
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("integration") != std::string::npos);
  }
}

TEST_CASE("forced Linformer projection runs and keeps attention row-stochastic") {
  auto cfg = small_config({}, 32, 64);
  cfg.linformer.enabled = true;
  cfg.linformer.k = 16;
  StandaloneEncoder<double> plain(cfg, 2);
  CHECK_FALSE(plain.block.linformer_active());
  cfg.linformer.force = true;
  StandaloneEncoder<double> lin(cfg, 2);
  REQUIRE(lin.block.linformer_active());
  EncoderTrace<double> t;
  (void)lin.block.forward(sheet(1, 64, 32), latent(2), NoiseSpec::none(), &t);
  REQUIRE(t.attention.front().cols() == 16);
  for (std::size_t r = 0; r < 64; ++r) {
    double total = 0;
    for (double a : t.attention.front().row(r)) total += a;
    CHECK(std::abs(total - 1) < 1e-12);
  }
}
