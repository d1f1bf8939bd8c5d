#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "styleformer/attention.hpp"

using namespace styleformer;

TEST_CASE("head configuration follows the fixed depth of 32") {
  auto big = HeadConfig::standard(1024);
  CHECK(big.heads == 32);
  CHECK(big.depth == 32);
  CHECK(HeadConfig::standard(32).heads == 1);
  CHECK(HeadConfig::standard(256).heads == 8);
  CHECK_THROWS_AS(HeadConfig::standard(48), ConfigError);
  CHECK_THROWS_AS(HeadConfig::standard(0), ConfigError);
  auto sweep = HeadConfig::with_heads(256, 4);
  CHECK(sweep.depth == 64);
  CHECK_THROWS_AS(HeadConfig::with_heads(256, 3), ConfigError);
}

TEST_CASE("split and merge heads round trip exactly") {
  RngStream rng(1, "split");
  auto x = rng.normal_tensor<float>(10, 1024);
  auto heads = split_heads(x, HeadConfig::standard(1024));
  REQUIRE(heads.size() == 32);
  CHECK(heads[5].cols() == 32);
  CHECK(heads[5](3, 7) == x(3, 5 * 32 + 7));
  CHECK(merge_heads(heads) == x);
  CHECK_THROWS_AS(split_heads(x, HeadConfig::standard(512)), ShapeError);
}

TEST_CASE("zero queries and keys give uniform attention") {
  auto a = attention_map(Tensor<double>(5, 32), Tensor<double>(7, 32));
  for (double v : a.values()) CHECK(v == doctest::Approx(1.0 / 7).epsilon(1e-15));
  auto one = attention_map(Tensor<double>(1, 32, 0.3), Tensor<double>(1, 32, -2.0));
  CHECK(one == Tensor<double>{{1.0}});
}

TEST_CASE("attention map matches the direct softmax oracle") {
  RngStream rng(2, "amap");
  auto q = rng.normal_tensor<double>(3, 32), k = rng.normal_tensor<double>(3, 32);
  CHECK(oracle::max_abs_diff(attention_map(q, k), oracle::attention(q, k)) < 1e-10);
  CHECK_THROWS_AS(attention_map(q, rng.normal_tensor<double>(3, 16)), ShapeError);
}

TEST_CASE("attend selects rows, averages and matches dense matmul") {
  RngStream rng(3, "attend");
  auto v = rng.normal_tensor<double>(4, 32);
  Tensor<double> perm(4, 4);
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i) perm(i, order[i]) = 1.0;
  auto sel = attend(perm, v);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 32; ++c) CHECK(sel(i, c) == v(order[i], c));

  auto avg = attend(Tensor<double>(3, 4, 0.25), v);
  for (std::size_t c = 0; c < 32; ++c) {
    const double mean = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4;
    for (std::size_t i = 0; i < 3; ++i) CHECK(avg(i, c) == doctest::Approx(mean).epsilon(1e-14));
  }
  auto a = softmax_rows(rng.normal_tensor<double>(6, 4));
  CHECK(oracle::max_abs_diff(attend(a, v), oracle::matmul(a, v)) < 1e-12);
  CHECK_THROWS_AS(attend(a, rng.normal_tensor<double>(5, 32)), ShapeError);
}

TEST_CASE("attend output rows stay in the convex hull of value rows") {
  RngStream rng(4, "hull");
  for (int trial = 0; trial < 20; ++trial) {
    auto v = rng.normal_tensor<double>(9, 32);
    auto a = softmax_rows(rng.normal_tensor<double>(5, 9, 3.0));
    auto out = attend(a, v);
    // Barycentric weights are A's row; a coordinate-free test: every linear
    // functional of the output is bounded by its extremes over V's rows.
    for (int probe = 0; probe < 8; ++probe) {
      auto dir = rng.normal_tensor<double>(32, 1);
      auto pv = matmul(v, dir), po = matmul(out, dir);
      double lo = pv[0], hi = pv[0];
      for (double x : pv.values()) lo = std::min(lo, x), hi = std::max(hi, x);
      for (double x : po.values()) {
        CHECK(x >= lo - 1e-12);
        CHECK(x <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("integrating heads with identity weight and unit style is concatenation") {
  RngStream rng(5, "integ");
  std::vector<Tensor<double>> heads{rng.normal_tensor<double>(6, 32), rng.normal_tensor<double>(6, 32)};
  auto out = integrate_heads(heads, modulate(Tensor<double>::identity(64), Tensor<double>(1, 64, 1.0)));
  CHECK(out == concat_cols(heads));
  heads.push_back(rng.normal_tensor<double>(5, 32));
  CHECK_THROWS_AS(integrate_heads(heads, modulate(Tensor<double>::identity(96), Tensor<double>(1, 96, 1.0))),
                  ShapeError);
}

TEST_CASE("integration divides by brute-force column norms; 256 hidden uses 8 heads") {
  RngStream rng(6, "integ2");
  const auto cfg = HeadConfig::standard(256);
  REQUIRE(cfg.heads == 8);
  auto x = rng.normal_tensor<double>(16, 256);
  auto heads = split_heads(x, cfg);
  auto w = rng.normal_tensor<double>(256, 48);
  auto s = rng.normal_tensor<double>(1, 256, 1.0, 1.0);
  auto out = integrate_heads(heads, modulate(w, s));
  REQUIRE(out.cols() == 48);
  Tensor<double> ws(256, 48);
  for (std::size_t i = 0; i < 256; ++i)
    for (std::size_t j = 0; j < 48; ++j) ws(i, j) = s[i] * w(i, j);
  auto norms = oracle::column_norms(ws);
  auto raw = oracle::matmul(x, ws);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 48; ++j) CHECK(std::abs(out(i, j) - raw(i, j) / norms[j]) < 1e-10);
}

TEST_CASE("linformer at n = 1024, k = 256 shrinks attention maps fourfold") {
  RngStream rng(7, "lin");
  const std::size_t n = 1024;
  LinformerRule rule{true};
  CHECK(rule.active(1024));
  CHECK_FALSE(rule.active(256));
  CHECK_FALSE(LinformerRule{}.active(4096));
  auto q = rng.normal_tensor<float>(n, 32), k = rng.normal_tensor<float>(n, 32),
       v = rng.normal_tensor<float>(n, 32);
  auto e = rng.normal_tensor<float>(n, kLinformerK, 1.0 / 32);
  AttentionTensor<float> lin, full;
  OpCounter c_lin;
  auto out = attention_stage(q, k, v, HeadConfig::standard(32), &e, &lin);
  const auto lin_peak = c_lin.counts().attention_map_peak;
  OpCounter c_full;
  (void)attention_stage(q, k, v, HeadConfig::standard(32), nullptr, &full);
  CHECK(lin.rows() == 1024);
  CHECK(lin.cols() == 256);
  CHECK(out.rows() == n);
  CHECK(c_full.counts().attention_map_peak / lin_peak == 4);
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0;
    for (float a : lin.heads[0].row(r)) {
      CHECK(a > 0.0f);
      total += a;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("a row-selector projection reproduces the selected keys") {
  RngStream rng(8, "selector");
  const std::size_t n = 12, kl = 5;
  auto k = rng.normal_tensor<double>(n, 32), v = rng.normal_tensor<double>(n, 32);
  Tensor<double> e(n, kl);
  for (std::size_t j = 0; j < kl; ++j) e(j, j) = 1.0;
  auto [kp, vp] = linformer_project(k, v, e);
  CHECK(kp == slice_rows(k, 0, kl));
  CHECK(vp == slice_rows(v, 0, kl));
  CHECK_THROWS_AS(linformer_project(k, v, Tensor<double>(n + 1, kl)), ShapeError);
}

TEST_CASE("instrumented attention cost matches the analytic model") {
  RngStream rng(9, "flops");
  const std::size_t hidden = 64;
  const auto cfg = HeadConfig::standard(hidden);
  std::uint64_t prev_lin = 0, prev_full = 0;
  for (std::size_t n : {256u, 1024u, 4096u}) {
    auto q = rng.normal_tensor<float>(n, hidden), k = rng.normal_tensor<float>(n, hidden),
         v = rng.normal_tensor<float>(n, hidden);
    auto e = rng.normal_tensor<float>(n, kLinformerK, 1.0 / std::sqrt(double(n)));
    OpCounter lin;
    (void)attention_stage(q, k, v, cfg, &e);
    CHECK(lin.counts().total_flops() == attention_stage_cost(n, hidden, cfg.heads, kLinformerK).flops);
    if (prev_lin) CHECK(lin.counts().total_flops() == 4 * prev_lin);
    prev_lin = lin.counts().total_flops();
    if (n <= 1024) {
      OpCounter full;
      (void)attention_stage(q, k, v, cfg);
      CHECK(full.counts().total_flops() == attention_stage_cost(n, hidden, cfg.heads, 0).flops);
      if (prev_full) CHECK(full.counts().total_flops() == 16 * prev_full);
      prev_full = full.counts().total_flops();
    }
  }
  // 4096 full path checked analytically only: quadratic growth of the model
  const auto f1 = attention_stage_cost(1024, hidden, cfg.heads, 0).flops;
  const auto f4 = attention_stage_cost(4096, hidden, cfg.heads, 0).flops;
  CHECK(f4 == 16 * f1);
}

TEST_CASE("distinct heads produce distinct attention maps") {
  RngStream rng(10, "diverse");
  auto q = rng.normal_tensor<double>(16, 128), k = rng.normal_tensor<double>(16, 128);
  AttentionTensor<double> maps;
  (void)attention_stage(q, k, k, HeadConfig::standard(128), nullptr, &maps);
  REQUIRE(maps.head_count() == 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(oracle::max_abs_diff(maps.heads[i], maps.heads[j]) > 1e-3);
}

TEST_CASE("graph attention matches the dense stage bit for bit") {
  RngStream rng(11, "graph-attn");
  const auto cfg = HeadConfig::standard(96);
  auto q = rng.normal_tensor<float>(20, 96), k = rng.normal_tensor<float>(20, 96),
       v = rng.normal_tensor<float>(20, 96);
  std::vector<Var<float>> maps;
  auto g = multi_head_attention(constant(q), constant(k), constant(v), cfg, &maps);
  AttentionTensor<float> dense_maps;
  auto d = attention_stage(q, k, v, cfg, nullptr, &dense_maps);
  CHECK(g.value() == d);
  REQUIRE(maps.size() == 3);
  for (std::size_t h = 0; h < 3; ++h) CHECK(maps[h].value() == dense_maps.heads[h]);
  // Head results do not depend on which other heads are evaluated.
  auto solo = attention_map(split_heads(q, cfg)[2], split_heads(k, cfg)[2]);
  CHECK(solo == dense_maps.heads[2]);
}
