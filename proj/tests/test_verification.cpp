#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "styleformer/verification.hpp"

using namespace styleformer;

TEST_CASE("comparisons apply their relation and reject non-finite measurements") {
  CHECK(compare("a", 1.04, Relation::AbsWithin, 1.0, 0.05, "").pass);
  CHECK_FALSE(compare("a", 1.06, Relation::AbsWithin, 1.0, 0.05, "").pass);
  CHECK(compare("a", 105, Relation::RelWithin, 100, 0.05, "").pass);
  CHECK_FALSE(compare("a", 0.9, Relation::AtLeast, 1.0, 0.05, "").pass);
  CHECK(compare("a", 1.0, Relation::AtMost, 1.0, 0, "").pass);
  CHECK_FALSE(compare("a", 0.0, Relation::GreaterThan, 0.0, 0, "").pass);
  CHECK_FALSE(compare("a", NAN, Relation::AtMost, 1.0, 1.0, "").pass);
  VerificationReport empty;
  CHECK_FALSE(empty.pass());
}

TEST_CASE("reports serialize every field and reproduce from their seed") {
  AlgebraParams p;
  p.instances = 20;
  p.seed = 4;
  const auto a = check_associativity(p);
  const auto b = check_associativity(p);
  CHECK(a.to_json() == b.to_json());
  const auto j = nlohmann::json::parse(a.to_json());
  CHECK(j["check"] == "associativity");
  CHECK(j["seed"] == 4);
  CHECK(j["params"]["instances"] == 20);
  REQUIRE(j["comparisons"].size() == 1);
  for (const char* key : {"quantity", "expected", "measured", "tolerance", "relation", "basis", "pass"}) {
    CHECK(j["comparisons"][0].contains(key));
  }
  CHECK(j["verdict"] == "pass");
  CHECK(j.contains("informational"));
  CHECK_FALSE(nlohmann::json::parse(a.to_json(false)).contains("informational"));
  CHECK_THROWS_AS(a.measured_value("missing"), std::out_of_range);
}

TEST_CASE("modulation algebra holds on random instances") {
  AlgebraParams p;
  p.instances = 200;
  const auto r = check_modulation_algebra(p);
  CHECK(r.pass());
  CHECK(r.measured_value("row_scaling_mismatches") == 0);
  CHECK(r.measured_value("max_demod_rel_error") <= 1e-12);
}

TEST_CASE("associativity identity holds on random instances") {
  AlgebraParams p;
  p.instances = 50;
  const auto r = check_associativity(p);
  CHECK(r.pass());
  CHECK(r.measured_value("max_rel_error") <= 1e-10);
}

TEST_CASE("Q/K/V demodulation returns unit column std") {
  QkvStdParams p;
  p.samples = 20000;
  p.band = 0.05;
  SUBCASE("identity weights and unit styles") {
    p.identity = true;
    const auto r = check_qkv_demod_std(p);
    CHECK(r.pass());
    CHECK(r.measured_value("mean_column_std") == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("random weights and styles") {
    p.style_std = 2.0;
    CHECK(check_qkv_demod_std(p).pass());
  }
  SUBCASE("without demodulation a column leaves the band") {
    p.style_std = 2.0;
    p.demodulate = false;
    CHECK_FALSE(check_qkv_demod_std(p).pass());
  }
  p.samples = 100;
  CHECK_THROWS_AS(check_qkv_demod_std(p), ConfigError);
}

TEST_CASE("encoder output std prediction for constructed maps") {
  const auto s = Tensor<double>(1, 32, 1.0);
  const auto wo = RngStream(1, "wo").normal_tensor<double>(32, 32);
  SUBCASE("uniform attention predicts 1/sqrt(n)") {
    const std::vector<Tensor<double>> maps{Tensor<double>(64, 64, 1.0 / 64)};
    for (double v : integrated_std_prediction(maps, s, wo)) CHECK(v == doctest::Approx(1.0 / 8));
    CHECK(encoder_output_std_from_maps(maps, s, wo, 200, 0.05, 3).pass());
  }
  SUBCASE("one-hot attention predicts 1") {
    Tensor<double> a(64, 64);
    for (std::size_t i = 0; i < 64; ++i) a(i, (i * 7) % 64) = 1;
    const std::vector<Tensor<double>> maps{a};
    for (double v : integrated_std_prediction(maps, s, wo)) CHECK(v == doctest::Approx(1.0));
    CHECK(encoder_output_std_from_maps(maps, s, wo, 200, 0.05, 3).pass());
  }
  SUBCASE("two heads with different maps mix by their share of sigma''") {
    const auto s2 = RngStream(2, "s").normal_tensor<double>(1, 64, 0.5, 1.0);
    const auto wo2 = RngStream(2, "wo").normal_tensor<double>(64, 16);
    Tensor<double> eye(16, 16);
    for (std::size_t i = 0; i < 16; ++i) eye(i, i) = 1;
    const std::vector<Tensor<double>> maps{eye, Tensor<double>(16, 16, 1.0 / 16)};
    CHECK(encoder_output_std_from_maps(maps, s2, wo2, 2000, 0.05, 5).pass());
  }
}

TEST_CASE("encoder output std tracks the captured attention maps") {
  EncoderStdParams p;
  p.trials = 200;
  const auto r = check_encoder_output_std(p);
  CHECK(r.pass());
  CHECK(r.measured_value("mean_abs_rel_deviation") < 0.05);
}

TEST_CASE("sigma decay under the normality model") {
  SigmaDecayParams p;
  p.n_list = {1, 16, 64, 256};
  p.trials = 20000;
  const auto r = monte_carlo_sigma_decay(p);
  CHECK(r.pass());
  CHECK(r.measured_value("n1.mean_sigma") == 1.0);
  CHECK(r.measured_value("n64.chebyshev_bound") == 0.96875);
  CHECK(r.measured_value("n64.mean_sigma_sq") == doctest::Approx(2.0 / 64).epsilon(0.02));
  CHECK(r.measured_value("n256.mean_sigma") < r.measured_value("n64.mean_sigma"));
}

TEST_CASE("spectrum curves of constructed maps") {
  Tensor<double> eye(8, 8);
  for (std::size_t i = 0; i < 8; ++i) eye(i, i) = 1;
  const auto c = spectrum_curve(eye);
  for (std::size_t i = 0; i < 8; ++i) CHECK(c.values[i] == doctest::Approx((i + 1) / 8.0));
  const auto u = spectrum_curve(Tensor<double>(8, 8, 1.0 / 8));
  CHECK(u.values.front() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(u.monotone());
  CHECK(c.to_csv().rfind("index,value\n0,0.125", 0) == 0);
  CHECK_THROWS_AS(spectrum_curve(Tensor<double>(4, 4)), NumericError);
  CHECK_THROWS_AS(average_curves({c, spectrum_curve(Tensor<double>(4, 4, 0.25))}, "x"), ShapeError);
}

TEST_CASE("spectrum of generated maps is well formed") {
  Generator<double> g(GeneratorConfig::preset_config("ablation-small"));
  SpectrumParams p;
  p.latents = 3;
  p.stage = 1;
  SpectrumCurve avg;
  const auto r = check_spectrum(g, p, &avg);
  CHECK(r.pass());
  CHECK(r.measured_value("maps") == 3 * 2 * 2);
  CHECK(avg.values.size() == 256);
  CHECK(std::abs(avg.values.back() - 1.0) <= 1e-9);
  p.stage = 7;
  CHECK_THROWS_AS(check_spectrum(g, p), ConfigError);
}

TEST_CASE("gradient check on a function with a known gradient") {
  Var<double> a(RngStream(1, "a").normal_tensor<double>(3, 4), true);
  auto loss = [&] { return ag::sum(ag::hadamard(a, a)); };
  GradientCheckParams p;
  p.probes_per_group = 0;
  const auto r = gradient_check("square", loss, {{"a", a}}, p);
  CHECK(r.pass());
  CHECK(r.measured_value("probes") == 12);
  CHECK(r.measured_value("max_rel_error") < 1e-8);
}

TEST_CASE("gradient check: a probe straddling a leaky-ReLU kink is resolved by a smaller step") {
  Tensor<double> v(1, 3);
  v[0] = 0.7;
  v[1] = 3e-6;  // kink inside [theta - 1e-5, theta + 1e-5], outside at 1e-5 / 8
  v[2] = -0.4;
  Var<double> a(v, true);
  auto loss = [&] { return ag::sum(ag::leaky_relu(a, 0.2)); };
  GradientCheckParams p;
  p.probes_per_group = 0;
  p.step_ladder.clear();
  CHECK_FALSE(gradient_check("kink", loss, {{"a", a}}, p).pass());
  p = GradientCheckParams{};
  p.probes_per_group = 0;
  p.max_refined_fraction = 0.5;
  const auto r = gradient_check("kink", loss, {{"a", a}}, p);
  CHECK(r.pass());
  CHECK(r.measured_value("refined_probes") == 1);
}

TEST_CASE("gradient check: a wrong backward fails at every step") {
  Var<double> a(RngStream(2, "a").normal_tensor<double>(3, 4), true);
  // d/da sum(a * a) is 2a, but the constant factor hides half of it from backward()
  auto loss = [&] { return ag::sum(ag::hadamard(a, constant(a.value()))); };
  GradientCheckParams p;
  p.probes_per_group = 0;
  const auto r = gradient_check("wrong", loss, {{"a", a}}, p);
  CHECK_FALSE(r.pass());
  CHECK(r.measured_value("max_rel_error") > 0.4);
  CHECK(r.measured_value("refined_probes") == 12);
}

TEST_CASE("encoder gradients with forced uniform attention agree to near machine precision") {
  EncoderGradientParams p;
  p.uniform_attention = true;
  p.variant.layernorm = LayerNormPosition::None;
  const auto r = gradient_check_encoder(p);
  CHECK(r.pass());
  CHECK(r.measured_value("max_rel_error") < 1e-6);
}

TEST_CASE("encoder gradients match finite differences for every ablation variant") {
  for (const auto& name : ablation_variant_names()) {
    CAPTURE(name);
    EncoderGradientParams p;
    p.variant = AblationVariant::named(name);
    p.check.probes_per_group = 8;
    const auto r = gradient_check_encoder(p);
    CHECK(r.pass());
    CHECK(r.measured_value("max_rel_error." + std::string("latent")) <= 1e-4);
  }
}

TEST_CASE("generator gradients match finite differences") {
  GradientCheckParams p;
  p.probes_per_group = 4;
  const auto r = gradient_check_generator(GeneratorConfig::preset_config("toy"), p);
  CHECK(r.pass());
}

TEST_CASE("bootstrap interval brackets the sample mean") {
  std::vector<double> xs;
  RngStream r(1, "xs");
  for (int i = 0; i < 200; ++i) xs.push_back(r.normal() + 3);
  const auto [lo, hi] = bootstrap_mean_interval(xs, 1000, 0.95, RngStream(2, "b"));
  CHECK(lo < hi);
  CHECK(lo > 2.6);
  CHECK(hi < 3.4);
  const auto [c0, c1] = bootstrap_mean_interval(std::vector<double>(10, 1.5), 100, 0.95, RngStream(3, "b"));
  CHECK(c0 == 1.5);
  CHECK(c1 == 1.5);
}

TEST_CASE("concentration study separates demod on and off at large style scale") {
  ConcentrationParams p;
  p.seeds = 20;
  p.scale_levels = {0.0, 10.0};
  p.bootstrap = 500;
  const auto r = concentration_study(p);
  CHECK(r.pass());
  CHECK(r.measured_value("level1.mean_max_entry_demod_off") > r.measured_value("level1.mean_max_entry_demod_on"));

  p.pixels = 1;
  p.seeds = 3;
  const auto one = concentration_study(p);
  CHECK(one.measured_value("level1.mean_max_entry_demod_on") == 1.0);
  CHECK(one.measured_value("level1.mean_max_entry_demod_off") == 1.0);
  CHECK_FALSE(one.pass());  // no separation possible with one pixel
}

TEST_CASE("with unit styles and unit-norm Q/K columns demodulation is a no-op") {
  EncoderConfig cfg;
  cfg.name = "unit";
  cfg.in_channels = cfg.hidden = cfg.out_channels = 64;
  cfg.pixels = 32;
  cfg.variant.layernorm = LayerNormPosition::None;
  StandaloneEncoder<double> enc(cfg, 8);
  auto& w = enc.block.qkv_weight.mutable_value();
  for (std::size_t j = 0; j < 128; ++j) {
    double ss = 0;
    for (std::size_t i = 0; i < w.rows(); ++i) ss += w(i, j) * w(i, j);
    for (std::size_t i = 0; i < w.rows(); ++i) w(i, j) /= std::sqrt(ss);
  }
  const auto x = constant(RngStream(1, "x").normal_tensor<double>(32, 64));
  const auto ones = constant(Tensor<double>(1, 64, 1.0));
  EncoderTrace<double> on, off;
  (void)enc.block.forward_with_styles(x, ones, ones, NoiseSpec::none(), &on);
  enc.block.set_demod({.qk = false});
  (void)enc.block.forward_with_styles(x, ones, ones, NoiseSpec::none(), &off);
  for (std::size_t h = 0; h < on.attention.size(); ++h) {
    double worst = 0;
    for (std::size_t i = 0; i < on.attention[h].size(); ++i)
      worst = std::max(worst, std::abs(on.attention[h][i] - off.attention[h][i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("polynomial fits and log-log slopes") {
  const std::vector<double> x{256, 1024, 4096};
  CHECK(polynomial_fit_r2(x, {2 * 256 + 1, 2 * 1024 + 1, 2 * 4096 + 1}, 1) == doctest::Approx(1.0));
  CHECK(loglog_slope(x, {256.0 * 256, 1024.0 * 1024, 4096.0 * 4096}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(polynomial_fit_r2({1, 2}, {1, 2}, 2), ConfigError);
}

TEST_CASE("attention cost scales linearly with Linformer and quadratically without") {
  BenchParams p;
  p.measure = false;
  const auto r = bench_attention(p);
  CHECK(r.pass());
  CHECK(r.measured_value("map_reduction_at_1024") == 4.0);
  CHECK(r.measured_value("n1024.linformer.map_elements") == 1024 * 256);
  CHECK(r.measured_value("n1024.full.map_elements") == 1024 * 1024);

  BenchParams m;
  m.n_list = {64, 128, 256};
  m.linformer_k = 32;
  const auto measured = bench_attention(m);
  CHECK(measured.pass());
  CHECK(measured.measured_value("n128.linformer.measured_map_peak") == 128 * 32);
  CHECK(measured.informational.size() == 6);
  CHECK(nlohmann::json::parse(measured.to_json(false)) == nlohmann::json::parse(bench_attention(m).to_json(false)));
}

TEST_CASE("head sweep records diversity statistics") {
  HeadSweepParams p;
  p.heads = {1, 2, 4};
  p.hidden = 64;
  p.pixels = 64;
  p.latents = 1;
  const auto r = head_sweep(p);
  CHECK(r.pass());
  CHECK(r.measured_value("heads1.mean_pairwise_tv") == 0);
  CHECK(r.measured_value("heads4.mean_pairwise_tv") > 0);
}
