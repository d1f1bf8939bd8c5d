#include "styleformer/verification.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "styleformer/op_counter.hpp"

namespace styleformer {

const char* to_string(Relation r) {
  switch (r) {
    case Relation::AbsWithin: return "abs_within";
    case Relation::RelWithin: return "rel_within";
    case Relation::AtLeast: return "at_least";
    case Relation::AtMost: return "at_most";
    case Relation::GreaterThan: return "greater_than";
    case Relation::LessThan: return "less_than";
  }
  return "unknown";
}

Comparison compare(std::string quantity, double measured, Relation relation, double expected,
                   double tolerance, std::string basis) {
  Comparison c{std::move(quantity), expected, measured, tolerance, relation, std::move(basis), false};
  if (std::isfinite(measured)) {
    switch (relation) {
      case Relation::AbsWithin: c.pass = std::abs(measured - expected) <= tolerance; break;
      case Relation::RelWithin: c.pass = std::abs(measured - expected) <= tolerance * std::abs(expected); break;
      case Relation::AtLeast: c.pass = measured >= expected - tolerance; break;
      case Relation::AtMost: c.pass = measured <= expected + tolerance; break;
      case Relation::GreaterThan: c.pass = measured > expected; break;
      case Relation::LessThan: c.pass = measured < expected; break;
    }
  }
  return c;
}

bool VerificationReport::pass() const {
  return !comparisons.empty() &&
         std::all_of(comparisons.begin(), comparisons.end(), [](const Comparison& c) { return c.pass; });
}

double VerificationReport::measured_value(const std::string& name) const {
  for (const auto& [k, v] : measured) {
    if (k == name) return v;
  }
  throw std::out_of_range(check + ": no measurement named '" + name + "'");
}

std::string VerificationReport::to_json(bool include_informational, int indent) const {
  using nlohmann::ordered_json;
  auto pairs = [](const std::vector<std::pair<std::string, double>>& xs) {
    ordered_json o = ordered_json::object();
    for (const auto& [k, v] : xs) o[k] = v;
    return o;
  };
  ordered_json j;
  j["check"] = check;
  j["seed"] = seed;
  j["params"] = pairs(params);
  j["measured"] = pairs(measured);
  j["comparisons"] = ordered_json::array();
  for (const auto& c : comparisons) {
    j["comparisons"].push_back({{"quantity", c.quantity},
                                {"expected", c.expected},
                                {"measured", c.measured},
                                {"tolerance", c.tolerance},
                                {"relation", to_string(c.relation)},
                                {"basis", c.basis},
                                {"pass", c.pass}});
  }
  j["verdict"] = pass() ? "pass" : "fail";
  if (include_informational) j["informational"] = pairs(informational);
  return j.dump(indent);
}

// ---- spectra ------------------------------------------------------------------

bool SpectrumCurve::monotone() const {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[i - 1]) return false;
  }
  return true;
}

std::string SpectrumCurve::to_csv() const {
  std::string out = "index,value\n";
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, values[i]);
    out += buf;
  }
  return out;
}

template <class T>
SpectrumCurve spectrum_curve(const Tensor<T>& matrix) {
  auto sv = svd_singular_values(matrix);
  std::sort(sv.begin(), sv.end(), std::greater<>());
  const double total = std::accumulate(sv.begin(), sv.end(), 0.0);
  if (!(total > 0)) throw NumericError("spectrum_curve: matrix has no nonzero singular value");
  SpectrumCurve c;
  c.matrices = 1;
  c.values.resize(sv.size());
  double run = 0;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    run += sv[i];
    c.values[i] = run / total;
  }
  return c;
}

SpectrumCurve average_curves(const std::vector<SpectrumCurve>& curves, std::string tag) {
  if (curves.empty()) throw ConfigError("average_curves: no curves");
  SpectrumCurve out;
  out.tag = std::move(tag);
  out.values.assign(curves.front().values.size(), 0.0);
  for (const auto& c : curves) {
    if (c.values.size() != out.values.size()) throw ShapeError("average_curves: curve lengths differ");
    for (std::size_t i = 0; i < c.values.size(); ++i) out.values[i] += c.values[i];
    out.matrices += c.matrices;
  }
  for (auto& v : out.values) v /= static_cast<double>(curves.size());
  return out;
}

namespace {

template <class T>
std::vector<Tensor<T>> stage_maps(const AttentionExport<T>& ex, std::size_t stage) {
  std::vector<Tensor<T>> out;
  for (const auto& b : ex.blocks) {
    if (b.stage != stage) continue;
    for (const auto& h : b.maps.heads) out.push_back(h);
  }
  return out;
}

template <class T>
std::vector<SpectrumCurve> spectrum_curves(const Generator<T>& g, const SpectrumParams& p) {
  if (p.stage >= g.stages().size() || g.stages()[p.stage].conv) {
    throw ConfigError("attention_spectrum: stage " + std::to_string(p.stage) + " has no encoder blocks");
  }
  if (p.latents == 0) throw ConfigError("attention_spectrum: need at least one latent");
  std::vector<SpectrumCurve> curves;
  RngStream root(p.seed, "spectrum");
  for (std::size_t i = 0; i < p.latents; ++i) {
    RngStream r = root.derive(i);
    const auto ex = g.export_attention(g.sample_latent(r));
    for (const auto& m : stage_maps(ex, p.stage)) curves.push_back(spectrum_curve(m));
  }
  return curves;
}

}  // namespace

template <class T>
SpectrumCurve attention_spectrum(const Generator<T>& g, const SpectrumParams& p) {
  return average_curves(spectrum_curves(g, p),
                        std::to_string(g.stages()[p.stage].resolution) + "x" +
                            std::to_string(g.stages()[p.stage].resolution));
}

VerificationReport check_spectrum(const Generator<double>& g, const SpectrumParams& p,
                                  SpectrumCurve* average) {
  VerificationReport r;
  r.check = "attention_spectrum";
  r.seed = p.seed;
  r.param("latents", static_cast<double>(p.latents));
  r.param("stage", static_cast<double>(p.stage));
  const auto curves = spectrum_curves(g, p);
  r.param("resolution", static_cast<double>(g.stages()[p.stage].resolution));
  std::size_t non_monotone = 0;
  double worst_end = 0;
  for (const auto& c : curves) {
    if (!c.monotone()) ++non_monotone;
    worst_end = std::max(worst_end, std::abs(c.values.back() - 1.0));
  }
  const auto avg = average_curves(curves, "stage" + std::to_string(p.stage));
  r.measure("maps", static_cast<double>(curves.size()));
  r.measure("curve_length", static_cast<double>(avg.values.size()));
  r.measure("mean_first_value", avg.values.front());
  // rank needed to reach 90% of the spectral mass, averaged
  const auto it = std::lower_bound(avg.values.begin(), avg.values.end(), 0.9);
  r.measure("index_at_90_percent", static_cast<double>(it - avg.values.begin()));
  r.add(compare("non_monotone_curves", static_cast<double>(non_monotone), Relation::AbsWithin, 0, 0,
                "cumulative sums of nonnegative values"));
  r.add(compare("max_endpoint_error", worst_end, Relation::AtMost, 0, 1e-9,
                "normalized cumulative sum ends at 1"));
  r.add(compare("average_monotone", avg.monotone() ? 1 : 0, Relation::AbsWithin, 1, 0,
                "mean of monotone curves"));
  if (average) *average = avg;
  return r;
}

// ---- modulation algebra ------------------------------------------------------------

namespace {

std::size_t draw_dim(RngStream& r, std::size_t max_dim) { return 1 + r.index(max_dim); }

double normwise_rel(const Tensor<double>& a, const Tensor<long double>& ref) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(static_cast<long double>(a[i]) - ref[i]));
    den = std::max(den, std::abs(ref[i]));
  }
  return den == 0 ? static_cast<double>(num) : static_cast<double>(num / den);
}

Tensor<long double> matmul_ld(const Tensor<long double>& a, const Tensor<long double>& b) {
  Tensor<long double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Tensor<long double> widen(const Tensor<double>& a) {
  Tensor<long double> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
  return out;
}

double frobenius_rel(const Tensor<double>& a, const Tensor<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace

VerificationReport check_modulation_algebra(const AlgebraParams& p) {
  VerificationReport r;
  r.check = "modulation_algebra";
  r.seed = p.seed;
  r.param("instances", static_cast<double>(p.instances));
  r.param("max_dim", static_cast<double>(p.max_dim));
  RngStream root(p.seed, "modulation-algebra");
  std::size_t mismatches = 0;
  double demod_err = 0, output_err = 0, assoc_err = 0;
  for (std::size_t i = 0; i < p.instances; ++i) {
    RngStream g = root.derive(i);
    const std::size_t in = draw_dim(g, p.max_dim), out = draw_dim(g, p.max_dim), n = draw_dim(g, p.max_dim);
    const auto w = g.uniform_tensor<double>(in, out, -1, 1);
    const auto s = g.normal_tensor<double>(1, in, 1.0, 1.0);
    const auto x = g.normal_tensor<double>(n, in);
    const auto mw = modulate(w, s);
    for (std::size_t a = 0; a < in; ++a)
      for (std::size_t b = 0; b < out; ++b) mismatches += mw.weight(a, b) != w(a, b) * s[a];

    for (std::size_t b = 0; b < out; ++b) {
      long double ss = 0;
      for (std::size_t a = 0; a < in; ++a) {
        const long double v = static_cast<long double>(w(a, b)) * s[a];
        ss += v * v;
      }
      const long double ref = std::max<long double>(std::sqrt(ss), kDemodFloor);
      demod_err = std::max(demod_err, static_cast<double>(std::abs(mw.demod[b] - ref) / ref));
    }

    // (X W') / sigma against the long-double oracle
    Tensor<long double> wl(in, out);
    for (std::size_t a = 0; a < in; ++a)
      for (std::size_t b = 0; b < out; ++b) wl(a, b) = static_cast<long double>(w(a, b)) * s[a];
    auto ref = matmul_ld(widen(x), wl);
    for (std::size_t b = 0; b < out; ++b) {
      long double ss = 0;
      for (std::size_t a = 0; a < in; ++a) ss += wl(a, b) * wl(a, b);
      const long double sig = std::max<long double>(std::sqrt(ss), kDemodFloor);
      for (std::size_t row = 0; row < n; ++row) ref(row, b) /= sig;
    }
    output_err = std::max(output_err, normwise_rel(apply_demodulated(x, mw), ref));

    // modulating activations equals modulating weights
    assoc_err = std::max(assoc_err, frobenius_rel(matmul(scale_columns(x, s), w), matmul(x, mw.weight)));
  }
  r.measure("row_scaling_mismatches", static_cast<double>(mismatches));
  r.measure("max_demod_rel_error", demod_err);
  r.measure("max_output_rel_error", output_err);
  r.measure("max_activation_vs_weight_rel_error", assoc_err);
  r.add(compare("row_scaling_mismatches", static_cast<double>(mismatches), Relation::AbsWithin, 0, 0,
                "W'_ij = s_i W_ij computed bit-exactly"));
  r.add(compare("max_demod_rel_error", demod_err, Relation::AtMost, 0, 1e-12,
                "long-double oracle sqrt(sum_i (s_i W_ij)^2)"));
  r.add(compare("max_output_rel_error", output_err, Relation::AtMost, 0, 1e-12,
                "long-double oracle (X W') / sigma"));
  r.add(compare("max_activation_vs_weight_rel_error", assoc_err, Relation::AtMost, 0, 1e-12,
                "(X diag(s)) W = X (diag(s) W)"));
  return r;
}

VerificationReport check_associativity(const AlgebraParams& p) {
  VerificationReport r;
  r.check = "associativity";
  r.seed = p.seed;
  r.param("instances", static_cast<double>(p.instances));
  r.param("max_dim", static_cast<double>(p.max_dim));
  RngStream root(p.seed, "associativity");
  double worst = 0;
  for (std::size_t i = 0; i < p.instances; ++i) {
    RngStream g = root.derive(i);
    const std::size_t n = draw_dim(g, p.max_dim), c = draw_dim(g, p.max_dim), o = draw_dim(g, p.max_dim);
    const auto a = softmax_rows(g.normal_tensor<double>(n, n, 2.0));
    const auto s = g.normal_tensor<double>(1, c, 1.0, 1.0);
    const auto v = g.normal_tensor<double>(n, c);
    const auto w = g.uniform_tensor<double>(c, o, -1, 1);
    const auto sv = scale_columns(v, s);
    worst = std::max(worst, frobenius_rel(matmul(matmul(a, sv), w), matmul(a, matmul(sv, w))));
  }
  r.measure("max_rel_error", worst);
  r.add(compare("max_rel_error", worst, Relation::AtMost, 0, 1e-10,
                "matrix product associativity, [A(s*V)]W = A[(s*V)W]"));
  return r;
}

// ---- standard deviation checks ----------------------------------------------------------

VerificationReport check_qkv_demod_std(const QkvStdParams& p) {
  if (p.samples < 10000) throw ConfigError("check_qkv_demod_std: need at least 10^4 samples");
  VerificationReport r;
  r.check = "qkv_demod_std";
  r.seed = p.seed;
  const std::size_t out = p.identity ? p.in_channels : p.out_channels;
  r.param("samples", static_cast<double>(p.samples));
  r.param("in_channels", static_cast<double>(p.in_channels));
  r.param("out_channels", static_cast<double>(out));
  r.param("style_std", p.identity ? 0.0 : p.style_std);
  r.param("demodulate", p.demodulate ? 1 : 0);
  r.param("identity", p.identity ? 1 : 0);

  RngStream root(p.seed, "qkv-std");
  Tensor<double> w, s;
  if (p.identity) {
    w = Tensor<double>(p.in_channels, out);
    for (std::size_t i = 0; i < out; ++i) w(i, i) = 1;
    s = Tensor<double>(1, p.in_channels, 1.0);
  } else {
    w = linear_init<double>(p.in_channels, out, p.in_channels, root.derive("weight"));
    s = root.derive("style").normal_tensor<double>(1, p.in_channels, p.style_std, 1.0);
  }
  const auto mw = modulate(w, s);

  std::vector<double> sum(out, 0.0), sumsq(out, 0.0);
  constexpr std::size_t kChunk = 10000;
  RngStream xs = root.derive("x");
  for (std::size_t done = 0, chunk = 0; done < p.samples; done += kChunk, ++chunk) {
    const std::size_t rows = std::min(kChunk, p.samples - done);
    const auto x = xs.derive(chunk).normal_tensor<double>(rows, p.in_channels);
    const auto y = p.demodulate ? apply_demodulated(x, mw) : matmul(x, mw.weight);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < out; ++j) {
        sum[j] += y(i, j);
        sumsq[j] += y(i, j) * y(i, j);
      }
    }
  }
  double lo = INFINITY, hi = 0, mean_std = 0;
  for (std::size_t j = 0; j < out; ++j) {
    const double m = sum[j] / p.samples;
    const double sd = std::sqrt(std::max(0.0, sumsq[j] / p.samples - m * m));
    lo = std::min(lo, sd);
    hi = std::max(hi, sd);
    mean_std += sd / out;
  }
  r.measure("min_column_std", lo);
  r.measure("max_column_std", hi);
  r.measure("mean_column_std", mean_std);
  const char* basis = "unit-variance inputs: Var(y_j) = sum_i s_i^2 W_ij^2 / sigma_j^2 = 1";
  r.add(compare("min_column_std", lo, Relation::AtLeast, 1.0, p.band, basis));
  r.add(compare("max_column_std", hi, Relation::AtMost, 1.0, p.band, basis));
  return r;
}

template <class T>
std::vector<double> integrated_std_prediction(const std::vector<Tensor<T>>& maps,
                                              const Tensor<T>& style_value, const Tensor<T>& wo) {
  if (maps.empty()) throw ConfigError("integrated_std_prediction: no attention maps");
  const std::size_t heads = maps.size();
  const std::size_t hidden = wo.rows();
  if (hidden % heads != 0 || style_value.cols() != hidden) {
    throw ShapeError("integrated_std_prediction: " + std::to_string(heads) + " heads, style " +
                     std::to_string(style_value.cols()) + ", weight " + shape_string(wo.rows(), wo.cols()));
  }
  const std::size_t depth = hidden / heads, out = wo.cols(), n = maps.front().rows();
  // share[h] = mean over output columns of head h's fraction of sigma''^2
  std::vector<double> share(heads, 0.0);
  for (std::size_t j = 0; j < out; ++j) {
    std::vector<double> part(heads, 0.0);
    double total = 0;
    for (std::size_t c = 0; c < hidden; ++c) {
      const double v = static_cast<double>(style_value[c]) * wo(c, j);
      part[c / depth] += v * v;
      total += v * v;
    }
    total = std::max(total, kDemodFloor * kDemodFloor);
    for (std::size_t h = 0; h < heads; ++h) share[h] += part[h] / total / out;
  }
  std::vector<double> pred(n, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t l = 0; l < n; ++l) {
      double ss = 0;
      for (T a : maps[h].row(l)) ss += static_cast<double>(a) * a;
      pred[l] += share[h] * ss;
    }
  }
  for (auto& v : pred) v = std::sqrt(v);
  return pred;
}

template <class T>
VerificationReport encoder_output_std_from_maps(const std::vector<Tensor<T>>& maps,
                                                const Tensor<T>& style_value,
                                                const Tensor<T>& wo, std::size_t trials,
                                                double tolerance, std::uint64_t seed,
                                                bool demodulate) {
  VerificationReport r;
  r.check = "encoder_output_std";
  r.seed = seed;
  const auto pred = integrated_std_prediction(maps, style_value, wo);
  const std::size_t n = pred.size(), heads = maps.size(), hidden = wo.rows(), out = wo.cols();
  r.param("pixels", static_cast<double>(n));
  r.param("heads", static_cast<double>(heads));
  r.param("hidden", static_cast<double>(hidden));
  r.param("trials", static_cast<double>(trials));
  auto mw = modulate(wo, style_value);
  if (!demodulate) mw.demod = Tensor<T>(1, out, T{1});
  r.param("demodulate", demodulate ? 1 : 0);
  const HeadConfig cfg = HeadConfig::with_heads(hidden, heads);
  std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
  RngStream root(seed, "encoder-output-std");
  for (std::size_t t = 0; t < trials; ++t) {
    // the style enters once, through the modulated integration weight
    const auto v = root.derive(t).normal_tensor<T>(n, hidden);
    const auto parts = split_heads(v, cfg);
    std::vector<Tensor<T>> heads_out;
    for (std::size_t h = 0; h < heads; ++h) heads_out.push_back(attend(maps[h], parts[h]));
    const auto y = integrate_heads(heads_out, mw);
    for (std::size_t l = 0; l < n; ++l) {
      for (T val : y.row(l)) {
        sum[l] += val;
        sumsq[l] += static_cast<double>(val) * val;
      }
    }
  }
  const double count = static_cast<double>(trials * out);
  double dev = 0, mean_pred = 0, mean_meas = 0;
  for (std::size_t l = 0; l < n; ++l) {
    const double m = sum[l] / count;
    const double sd = std::sqrt(std::max(0.0, sumsq[l] / count - m * m));
    dev += std::abs(sd - pred[l]) / pred[l] / n;
    mean_pred += pred[l] / n;
    mean_meas += sd / n;
  }
  r.measure("mean_predicted_std", mean_pred);
  r.measure("mean_measured_std", mean_meas);
  r.measure("mean_abs_rel_deviation", dev);
  r.add(compare("mean_abs_rel_deviation", dev, Relation::LessThan, tolerance, 0,
                "per-pixel std sqrt(sum_l' A_ll'^2) for unit-variance values"));
  return r;
}

VerificationReport check_encoder_output_std(const EncoderStdParams& p) {
  EncoderConfig cfg;
  cfg.name = "probe";
  cfg.in_channels = cfg.hidden = cfg.out_channels = p.hidden;
  cfg.pixels = p.pixels;
  StandaloneEncoder<double> enc(cfg, p.seed, p.w_dim);
  RngStream root(p.seed, "encoder-std-capture");
  EncoderTrace<double> trace;
  {
    NoGradGuard ng;
    (void)enc.block.forward(constant(root.derive("x").normal_tensor<double>(p.pixels, p.hidden)),
                            constant(root.derive("w").normal_tensor<double>(1, p.w_dim)),
                            NoiseSpec::none(), &trace);
  }
  auto r = encoder_output_std_from_maps(trace.attention, trace.style_value, enc.block.wo.value(),
                                        p.trials, p.tolerance, p.seed, p.demodulate);
  r.param("w_dim", static_cast<double>(p.w_dim));
  return r;
}

// ---- sigma decay --------------------------------------------------------------------------

VerificationReport monte_carlo_sigma_decay(const SigmaDecayParams& p) {
  VerificationReport r;
  r.check = "sigma_decay";
  r.seed = p.seed;
  r.param("trials", static_cast<double>(p.trials));
  RngStream root(p.seed, "sigma-decay");
  std::vector<double> sigmas;
  for (std::size_t n : p.n_list) {
    if (n == 0) throw ConfigError("monte_carlo_sigma_decay: n must be positive");
    r.param("n" + std::to_string(n), static_cast<double>(n));
    const std::string tag = "n" + std::to_string(n) + ".";
    if (n == 1) {
      // a single-entry stochastic row is exactly [1]
      r.measure(tag + "mean_sigma", 1.0);
      r.add(compare(tag + "mean_sigma", 1.0, Relation::AbsWithin, 1.0, 0, "row [1] has sum of squares 1"));
      sigmas.push_back(1.0);
      continue;
    }
    RngStream g = root.derive(n);
    const double inv = 1.0 / static_cast<double>(n);
    double sum_sq = 0, sum_sigma = 0;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < p.trials; ++t) {
      double ss = 0, dev = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = inv * g.normal();
        const double a = inv + e;
        ss += a * a;
        dev += e * e;
      }
      sum_sq += ss;
      sum_sigma += std::sqrt(ss);
      hits += std::abs(dev - inv) <= inv;
    }
    const double mean_sq = sum_sq / p.trials, freq = static_cast<double>(hits) / p.trials;
    const double bound = 1.0 - 2.0 / n;
    const double se = std::sqrt(std::max(bound, 0.0) * (1 - std::max(bound, 0.0)) / p.trials);
    sigmas.push_back(sum_sigma / p.trials);
    r.measure(tag + "mean_sigma_sq", mean_sq);
    r.measure(tag + "mean_sigma", sigmas.back());
    r.measure(tag + "chebyshev_frequency", freq);
    r.measure(tag + "chebyshev_bound", bound);
    r.add(compare(tag + "mean_sigma_sq", mean_sq, Relation::RelWithin, 2.0 / n, 0.10,
                  "E[sum A^2] = 1/n + n * (1/n^2) = 2/n under the normality model"));
    r.add(compare(tag + "chebyshev_frequency", freq, Relation::AtLeast, bound, 3 * se,
                  "Chebyshev: Pr[|sum(A-1/n)^2 - 1/n| <= 1/n] >= 1 - 2/n, minus 3 binomial std errors"));
  }
  for (std::size_t i = 1; i < sigmas.size(); ++i) {
    const bool ascending_n = p.n_list[i] > p.n_list[i - 1];
    r.add(compare("sigma_n" + std::to_string(p.n_list[i]) + "_vs_n" + std::to_string(p.n_list[i - 1]),
                  sigmas[i], ascending_n ? Relation::LessThan : Relation::GreaterThan, sigmas[i - 1], 0,
                  "sigma decreases as the pixel count grows"));
  }
  return r;
}

// ---- gradients -------------------------------------------------------------------------------

VerificationReport gradient_check(const std::string& name, const std::function<Var<double>()>& loss,
                                  std::vector<GradientGroup> groups, const GradientCheckParams& p) {
  VerificationReport r;
  r.check = "gradient_check:" + name;
  r.seed = p.seed;
  r.param("probes_per_group", static_cast<double>(p.probes_per_group));
  r.param("step", p.step);
  r.param("groups", static_cast<double>(groups.size()));

  for (auto& g : groups) g.var.zero_grad();
  loss().backward();
  std::vector<Tensor<double>> analytic;
  for (const auto& g : groups) {
    analytic.push_back(g.var.grad());
    if (!all_finite(analytic.back())) throw NumericError(name + ": non-finite gradient for " + g.name);
  }

  auto eval = [&] {
    NoGradGuard ng;
    return loss().value()[0];
  };
  const double base = eval();
  if (!std::isfinite(base)) throw NumericError(name + ": non-finite loss");
  r.measure("loss", base);

  RngStream root(p.seed, "gradient-probes");
  double worst = 0;
  std::size_t probes = 0, refined = 0;
  std::string worst_group;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    Tensor<double>& value = groups[gi].var.mutable_value();
    std::vector<std::size_t> idx(value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (p.probes_per_group != 0 && p.probes_per_group < idx.size()) {
      RngStream pick = root.derive(groups[gi].name);
      for (std::size_t i = 0; i < p.probes_per_group; ++i) {
        std::swap(idx[i], idx[i + pick.index(idx.size() - i)]);
      }
      idx.resize(p.probes_per_group);
    }
    double group_worst = 0;
    for (std::size_t i : idx) {
      const double theta = value[i];
      const double a = analytic[gi][i];
      auto rel_at = [&](double h) {
        value[i] = theta + h;
        const double up = eval();
        value[i] = theta - h;
        const double down = eval();
        value[i] = theta;
        const double fd = (up - down) / (2 * h);
        return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), p.floor});
      };
      const double h = p.step * std::max(1.0, std::abs(theta));
      double rel = rel_at(h);
      if (rel > p.tolerance && !p.step_ladder.empty()) {
        // A leaky-ReLU kink inside [theta - h, theta + h] or roundoff on a
        // tiny derivative spoils this one step; a wrong gradient misses at all.
        ++refined;
        for (double f : p.step_ladder) {
          rel = std::min(rel, rel_at(h * f));
          if (rel <= p.tolerance) break;
        }
      }
      group_worst = std::max(group_worst, rel);
      ++probes;
    }
    r.measure("max_rel_error." + groups[gi].name, group_worst);
    if (group_worst >= worst) {
      worst = group_worst;
      worst_group = groups[gi].name;
    }
  }
  r.measure("probes", static_cast<double>(probes));
  r.measure("max_rel_error", worst);
  r.add(compare("max_rel_error", worst, Relation::AtMost, 0, p.tolerance,
                "central finite differences" + (worst_group.empty() ? std::string() : " (worst: " + worst_group + ")")));
  const double refined_fraction = probes ? static_cast<double>(refined) / probes : 0.0;
  r.measure("refined_probes", static_cast<double>(refined));
  r.add(compare("refined_probe_fraction", refined_fraction, Relation::AtMost, 0, p.max_refined_fraction,
                "probes that needed a step other than the base step stay rare"));
  return r;
}

namespace {

Var<double> projected_sum(const Var<double>& out, const Tensor<double>& weights) {
  return ag::sum(ag::hadamard(out, constant(weights)));
}

}  // namespace

VerificationReport gradient_check_encoder(const EncoderGradientParams& p) {
  EncoderConfig cfg;
  cfg.name = "grad";
  cfg.in_channels = cfg.hidden = cfg.out_channels = p.hidden;
  cfg.pixels = p.pixels;
  cfg.variant = p.variant;
  StandaloneEncoder<double> enc(cfg, p.check.seed, p.w_dim);
  if (p.uniform_attention) {
    auto& q = enc.block.qkv_weight.mutable_value();
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < p.hidden; ++j) q(i, j) = 0;
  }
  RngStream root(p.check.seed, "encoder-gradient");
  Var<double> x(root.derive("x").normal_tensor<double>(p.pixels, p.hidden), true);
  Var<double> w(root.derive("w").normal_tensor<double>(1, p.w_dim), true);
  const auto proj = root.derive("projection").normal_tensor<double>(p.pixels, p.hidden);
  std::vector<GradientGroup> groups{{"input", x}, {"latent", w}};
  for (const auto& e : enc.store.entries()) {
    // a zeroed Q projection sits on the demod floor, where the map is not smooth
    if (p.uniform_attention && e.name == "grad.qkv.weight") continue;
    groups.push_back({e.name, e.var});
  }
  auto loss = [&] { return projected_sum(enc.block.forward(x, w, NoiseSpec::none()), proj); };
  auto r = gradient_check("encoder/" + p.variant.name() + (p.uniform_attention ? "/uniform" : ""),
                          loss, std::move(groups), p.check);
  r.param("pixels", static_cast<double>(p.pixels));
  r.param("hidden", static_cast<double>(p.hidden));
  return r;
}

VerificationReport gradient_check_generator(const GeneratorConfig& config, const GradientCheckParams& p) {
  Generator<double> g(config);
  RngStream root(p.seed, "generator-gradient");
  Var<double> z(root.derive("z").normal_tensor<double>(1, config.z_dim), true);
  const std::size_t px = config.target_resolution * config.target_resolution;
  const auto proj = root.derive("projection").normal_tensor<double>(px, config.rgb_channels);
  std::vector<GradientGroup> groups{{"latent", z}};
  for (const auto& e : g.parameters().entries()) groups.push_back({e.name, e.var});
  auto loss = [&] { return projected_sum(g.forward(z, NoiseSpec::none()), proj); };
  auto r = gradient_check("generator/" + config.preset, loss, std::move(groups), p);
  return r;
}

// ---- concentration -----------------------------------------------------------------------------

std::pair<double, double> bootstrap_mean_interval(const std::vector<double>& xs, std::size_t resamples,
                                                  double confidence, RngStream rng) {
  if (xs.empty() || resamples == 0) throw ConfigError("bootstrap_mean_interval: empty input");
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += xs[rng.index(xs.size())];
    m = s / xs.size();
  }
  std::sort(means.begin(), means.end());
  const double tail = (1 - confidence) / 2;
  auto at = [&](double q) {
    const auto i = static_cast<std::size_t>(std::floor(q * (resamples - 1)));
    return means[std::min(i, resamples - 1)];
  };
  return {at(tail), at(1 - tail)};
}

namespace {

double mean_max_entry(const std::vector<Tensor<double>>& maps) {
  double total = 0;
  std::size_t rows = 0;
  for (const auto& a : maps) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto row = a.row(r);
      total += *std::max_element(row.begin(), row.end());
      ++rows;
    }
  }
  return total / rows;
}

}  // namespace

VerificationReport concentration_study(const ConcentrationParams& p) {
  if (p.seeds == 0) throw ConfigError("concentration_study: need at least one seed");
  VerificationReport r;
  r.check = "concentration";
  r.seed = p.seed;
  r.param("pixels", static_cast<double>(p.pixels));
  r.param("hidden", static_cast<double>(p.hidden));
  r.param("seeds", static_cast<double>(p.seeds));
  r.param("bootstrap", static_cast<double>(p.bootstrap));
  r.param("confidence", p.confidence);
  r.param("demodulate", p.demodulate ? 1 : 0);
  RngStream root(p.seed, "concentration");
  for (std::size_t li = 0; li < p.scale_levels.size(); ++li) {
    const double level = p.scale_levels[li];
    std::vector<double> diffs, on_v, off_v;
    for (std::size_t s = 0; s < p.seeds; ++s) {
      RngStream g = root.derive(li).derive(s);
      EncoderConfig cfg;
      cfg.name = "concentration";
      cfg.in_channels = cfg.hidden = cfg.out_channels = p.hidden;
      cfg.pixels = p.pixels;
      cfg.variant.layernorm = LayerNormPosition::None;
      StandaloneEncoder<double> enc(cfg, g.next_u64());
      auto x = constant(g.normal_tensor<double>(p.pixels, p.hidden));
      auto s_in = constant(g.normal_tensor<double>(1, p.hidden, level, 1.0));
      auto s_val = constant(g.normal_tensor<double>(1, p.hidden, level, 1.0));
      double m[2];
      for (int off = 0; off < 2; ++off) {
        DemodSwitches d;
        d.qk = off == 0 && p.demodulate;
        enc.block.set_demod(d);
        EncoderTrace<double> t;
        NoGradGuard ng;
        (void)enc.block.forward_with_styles(x, s_in, s_val, NoiseSpec::none(), &t);
        m[off] = mean_max_entry(t.attention);
      }
      on_v.push_back(m[0]);
      off_v.push_back(m[1]);
      diffs.push_back(m[1] - m[0]);
    }
    const double on = std::accumulate(on_v.begin(), on_v.end(), 0.0) / p.seeds;
    const double off = std::accumulate(off_v.begin(), off_v.end(), 0.0) / p.seeds;
    const auto [lo, hi] = bootstrap_mean_interval(diffs, p.bootstrap, p.confidence, root.derive("bootstrap").derive(li));
    const std::string key = "level" + std::to_string(li);
    r.param(key + ".scale_std", level);
    r.measure(key + ".mean_max_entry_demod_on", on);
    r.measure(key + ".mean_max_entry_demod_off", off);
    r.measure(key + ".diff_ci_low", lo);
    r.measure(key + ".diff_ci_high", hi);
    if (level >= 10) {
      r.add(compare(key + ".diff_ci_low", lo, Relation::GreaterThan, 0, 0,
                    "without Q/K demodulation attention concentrates on few pixels"));
    }
  }
  if (r.comparisons.empty()) {
    r.add(compare("levels_at_or_above_10", 0, Relation::GreaterThan, 0, 0,
                  "the study needs a style scale level >= 10"));
  }
  return r;
}

// ---- attention cost ------------------------------------------------------------------------------

double polynomial_fit_r2(const std::vector<double>& x, const std::vector<double>& y, std::size_t degree) {
  if (x.size() != y.size() || x.size() < degree + 1) throw ConfigError("polynomial_fit_r2: too few points");
  const Eigen::Index m = static_cast<Eigen::Index>(x.size());
  // scale x to keep the Vandermonde matrix well conditioned
  const double xs = *std::max_element(x.begin(), x.end());
  Eigen::MatrixXd a(m, degree + 1);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (std::size_t d = 0; d <= degree; ++d) a(i, d) = std::pow(x[i] / xs, static_cast<double>(d));
    b(i) = y[i];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd res = b - a * coef;
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  if (ss_tot == 0) return 1.0;
  return 1.0 - res.squaredNorm() / ss_tot;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

VerificationReport bench_attention(const BenchParams& p) {
  if (p.n_list.size() < 3) throw ConfigError("bench_attention: need at least three sizes");
  VerificationReport r;
  r.check = "attention_cost";
  r.seed = p.seed;
  r.param("linformer_k", static_cast<double>(p.linformer_k));
  r.param("hidden", static_cast<double>(p.hidden));
  const HeadConfig cfg = HeadConfig::standard(p.hidden);
  std::vector<double> ns, full_flops, full_elems, lin_flops, lin_elems;
  std::size_t mismatches = 0;
  RngStream root(p.seed, "bench");
  for (std::size_t n : p.n_list) {
    const std::string tag = "n" + std::to_string(n) + ".";
    r.param(tag + "pixels", static_cast<double>(n));
    const auto full = attention_stage_cost(n, p.hidden, cfg.heads, 0);
    const auto lin = attention_stage_cost(n, p.hidden, cfg.heads, p.linformer_k);
    ns.push_back(static_cast<double>(n));
    full_flops.push_back(static_cast<double>(full.flops));
    full_elems.push_back(static_cast<double>(full.map_elements_per_head));
    lin_flops.push_back(static_cast<double>(lin.flops));
    lin_elems.push_back(static_cast<double>(lin.map_elements_per_head));
    r.measure(tag + "full.flops", full_flops.back());
    r.measure(tag + "full.map_elements", full_elems.back());
    r.measure(tag + "linformer.flops", lin_flops.back());
    r.measure(tag + "linformer.map_elements", lin_elems.back());
    if (!p.measure) continue;
    RngStream g = root.derive(n);
    const auto q = g.normal_tensor<float>(n, p.hidden);
    const auto k = g.normal_tensor<float>(n, p.hidden);
    const auto v = g.normal_tensor<float>(n, p.hidden);
    const auto e = g.normal_tensor<float>(n, p.linformer_k, 1.0 / std::sqrt(static_cast<double>(n)));
    for (int linformer = 0; linformer < 2; ++linformer) {
      OpCounter counter;
      const auto t0 = std::chrono::steady_clock::now();
      (void)attention_stage<float>(q, k, v, cfg, linformer ? &e : nullptr);
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto& expect = linformer ? lin : full;
      const auto& got = counter.counts();
      mismatches += got.total_flops() != expect.flops;
      mismatches += got.attention_map_peak != expect.map_elements_per_head;
      const std::string path = tag + (linformer ? "linformer." : "full.");
      r.measure(path + "measured_flops", static_cast<double>(got.total_flops()));
      r.measure(path + "measured_map_peak", static_cast<double>(got.attention_map_peak));
      r.informational.emplace_back(path + "seconds", sec);
    }
  }
  const auto at1024 = [&](std::size_t k) { return attention_stage_cost(1024, p.hidden, cfg.heads, k); };
  const double reduction = static_cast<double>(at1024(0).map_elements_per_head) /
                           static_cast<double>(at1024(p.linformer_k).map_elements_per_head);
  r.measure("map_reduction_at_1024", reduction);
  r.add(compare("linformer.flops.linear_r2", polynomial_fit_r2(ns, lin_flops, 1), Relation::AtLeast, 0.99, 0,
                "O(nk) attention"));
  r.add(compare("linformer.map_elements.linear_r2", polynomial_fit_r2(ns, lin_elems, 1), Relation::AtLeast,
                0.99, 0, "O(nk) attention"));
  r.add(compare("full.flops.quadratic_r2", polynomial_fit_r2(ns, full_flops, 2), Relation::AtLeast, 0.99, 0,
                "O(n^2) attention"));
  r.add(compare("full.map_elements.quadratic_r2", polynomial_fit_r2(ns, full_elems, 2), Relation::AtLeast,
                0.99, 0, "O(n^2) attention"));
  r.add(compare("linformer.map_elements.loglog_slope", loglog_slope(ns, lin_elems), Relation::AbsWithin, 1.0,
                0.05, "map elements n*k"));
  r.add(compare("full.map_elements.loglog_slope", loglog_slope(ns, full_elems), Relation::AbsWithin, 2.0, 0.05,
                "map elements n^2"));
  r.add(compare("map_reduction_at_1024", reduction, Relation::AbsWithin, 1024.0 / p.linformer_k, 0,
                "n / k at n = 1024"));
  for (std::size_t i = 1; i < ns.size(); ++i) {
    r.add(compare("linformer.map_growth.n" + std::to_string(p.n_list[i]), lin_elems[i] / lin_elems[i - 1],
                  Relation::AbsWithin, ns[i] / ns[i - 1], 0, "map elements scale exactly with n at fixed k"));
  }
  if (p.measure) {
    r.add(compare("measured_vs_analytic_mismatches", static_cast<double>(mismatches), Relation::AbsWithin, 0, 0,
                  "instrumented kernel counts"));
  }
  return r;
}

// ---- head sweep ---------------------------------------------------------------------------------------

VerificationReport head_sweep(const HeadSweepParams& p) {
  VerificationReport r;
  r.check = "head_sweep";
  r.seed = p.seed;
  r.param("hidden", static_cast<double>(p.hidden));
  r.param("pixels", static_cast<double>(p.pixels));
  r.param("latents", static_cast<double>(p.latents));
  bool finite = true;
  for (std::size_t h : p.heads) {
    EncoderConfig cfg;
    cfg.name = "sweep";
    cfg.in_channels = cfg.hidden = cfg.out_channels = p.hidden;
    cfg.pixels = p.pixels;
    cfg.heads_override = h;
    StandaloneEncoder<double> enc(cfg, p.seed);
    double tv = 0, peak = 0;
    std::size_t pairs = 0;
    RngStream root(p.seed, "head-sweep");
    for (std::size_t i = 0; i < p.latents; ++i) {
      RngStream g = root.derive(i);
      EncoderTrace<double> t;
      NoGradGuard ng;
      (void)enc.block.forward(constant(g.normal_tensor<double>(p.pixels, p.hidden)),
                              constant(g.normal_tensor<double>(1, enc.w_dim())), NoiseSpec::none(), &t);
      for (const auto& a : t.attention) finite = finite && all_finite(a);
      peak += mean_max_entry(t.attention) / p.latents;
      for (std::size_t a = 0; a < t.attention.size(); ++a) {
        for (std::size_t b = a + 1; b < t.attention.size(); ++b) {
          double d = 0;
          for (std::size_t e = 0; e < t.attention[a].size(); ++e) d += std::abs(t.attention[a][e] - t.attention[b][e]);
          tv += 0.5 * d / p.pixels;
          ++pairs;
        }
      }
    }
    const std::string tag = "heads" + std::to_string(h) + ".";
    r.measure(tag + "mean_pairwise_tv", pairs ? tv / pairs : 0.0);
    r.measure(tag + "mean_max_entry", peak);
  }
  r.add(compare("finite_maps", finite ? 1 : 0, Relation::AbsWithin, 1, 0, "softmax of finite logits"));
  return r;
}

#define STYLEFORMER_INSTANTIATE_VERIFICATION(T)                                                     \
  template SpectrumCurve spectrum_curve(const Tensor<T>&);                                        \
  template SpectrumCurve attention_spectrum(const Generator<T>&, const SpectrumParams&);          \
  template std::vector<double> integrated_std_prediction(const std::vector<Tensor<T>>&,           \
                                                         const Tensor<T>&, const Tensor<T>&);     \
  template VerificationReport encoder_output_std_from_maps(const std::vector<Tensor<T>>&,         \
                                                           const Tensor<T>&, const Tensor<T>&,    \
                                                           std::size_t, double, std::uint64_t,    \
                                                           bool);

STYLEFORMER_INSTANTIATE_VERIFICATION(float)
STYLEFORMER_INSTANTIATE_VERIFICATION(double)

}  // namespace styleformer
