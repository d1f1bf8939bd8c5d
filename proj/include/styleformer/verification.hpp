#pragma once

// Executable checks of the modulation/demodulation algebra, the variance
// derivations, attention concentration and spectra, gradient correctness and
// attention cost scaling. Every check returns a VerificationReport whose
// content is a pure function of its parameters and seed.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "styleformer/generator.hpp"

namespace styleformer {

enum class Relation {
  AbsWithin,   // |measured - expected| <= tolerance
  RelWithin,   // |measured - expected| <= tolerance * |expected|
  AtLeast,     // measured >= expected - tolerance
  AtMost,      // measured <= expected + tolerance
  GreaterThan, // measured > expected
  LessThan,    // measured < expected
};

const char* to_string(Relation r);

struct Comparison {
  std::string quantity;
  double expected = 0;
  double measured = 0;
  double tolerance = 0;
  Relation relation = Relation::AbsWithin;
  std::string basis;  // where the expected value comes from
  bool pass = false;
};

Comparison compare(std::string quantity, double measured, Relation relation, double expected,
                   double tolerance, std::string basis);

struct VerificationReport {
  std::string check;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> params;
  std::vector<std::pair<std::string, double>> measured;
  std::vector<Comparison> comparisons;
  /// Hardware-dependent numbers (wall clock); never part of the verdict and
  /// left out of the deterministic serialization.
  std::vector<std::pair<std::string, double>> informational;

  bool pass() const;
  void param(std::string name, double v) { params.emplace_back(std::move(name), v); }
  void measure(std::string name, double v) { measured.emplace_back(std::move(name), v); }
  const Comparison& add(Comparison c) { return comparisons.emplace_back(std::move(c)); }
  double measured_value(const std::string& name) const;

  /// JSON with keys check, seed, params, measured, comparisons (quantity,
  /// expected, measured, tolerance, relation, basis, pass), verdict and,
  /// optionally, informational.
  std::string to_json(bool include_informational = true, int indent = 2) const;
};

/// Normalized cumulative singular values of one matrix or averaged over many:
/// value[i] = sum_{j<=i} sigma_j / sum_j sigma_j, sigma descending.
struct SpectrumCurve {
  std::string tag;
  std::size_t matrices = 0;
  std::vector<double> values;

  bool monotone() const;
  std::string to_csv() const;  // header "index,value"
};

template <class T>
SpectrumCurve spectrum_curve(const Tensor<T>& matrix);

/// Averages curves of identical length.
SpectrumCurve average_curves(const std::vector<SpectrumCurve>& curves, std::string tag);

// ---- modulation / demodulation algebra -----------------------------------

struct AlgebraParams {
  std::size_t instances = 1000;
  std::size_t max_dim = 48;
  std::uint64_t seed = 0;
};

/// Row scaling of diag(s) W is bit-exact; demod coefficients match a
/// long-double oracle to 1e-12 relative; X diag(s) W == X (diag(s) W) to 1e-12.
VerificationReport check_modulation_algebra(const AlgebraParams& p);

/// [A (s * V)] W vs A [(s * V) W] over random row-stochastic A.
VerificationReport check_associativity(const AlgebraParams& p);

struct QkvStdParams {
  std::size_t samples = 100000;
  std::size_t in_channels = 64;
  std::size_t out_channels = 96;  // Q, K and V columns of a 32-wide block
  double style_std = 1.0;         // s = 1 + style_std * N(0, 1)
  bool demodulate = true;
  bool identity = false;          // W = I, s = 1
  double band = 0.05;
  std::uint64_t seed = 0;
};

/// Unit-std inputs through Mod Input -> projection -> demod; every column std
/// must land in [1 - band, 1 + band].
VerificationReport check_qkv_demod_std(const QkvStdParams& p);

struct EncoderStdParams {
  std::size_t pixels = 64;
  std::size_t hidden = 32;
  std::size_t trials = 400;
  std::size_t w_dim = 64;
  double tolerance = 0.05;
  bool demodulate = true;  // false divides by 1 instead of sigma'' (negative control)
  std::uint64_t seed = 0;
};

/// Monte Carlo over unit-std values with the attention maps held fixed:
/// per-pixel std of the integrated output (after sigma'') against the
/// prediction from the maps. Returns the mean absolute relative deviation.
template <class T>
VerificationReport encoder_output_std_from_maps(const std::vector<Tensor<T>>& maps,
                                                const Tensor<T>& style_value,
                                                const Tensor<T>& wo, std::size_t trials,
                                                double tolerance, std::uint64_t seed,
                                                bool demodulate = true);

/// Captures the maps of a real encoder block for a random latent, then runs
/// encoder_output_std_from_maps with its value style and output weight.
VerificationReport check_encoder_output_std(const EncoderStdParams& p);

/// Per-pixel std prediction sqrt(sum_h sum_l' A_h[l,l']^2 * c_hj) averaged
/// over output columns j, where c_hj is head h's share of sigma''_j^2.
template <class T>
std::vector<double> integrated_std_prediction(const std::vector<Tensor<T>>& maps,
                                              const Tensor<T>& style_value, const Tensor<T>& wo);

// ---- sigma decay under the normality model -------------------------------

struct SigmaDecayParams {
  std::vector<std::size_t> n_list{16, 64, 256, 1024};
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
};

/// Rows A_l = 1/n + N(0, 1/n^2) per entry. For every n: E[sum A^2] within
/// 10% of 2/n and Pr[|sum (A - 1/n)^2 - 1/n| <= 1/n] >= 1 - 2/n minus three
/// binomial standard errors; mean sigma strictly decreasing in n. n = 1 is
/// the degenerate row [1] with sigma = 1.
VerificationReport monte_carlo_sigma_decay(const SigmaDecayParams& p);

// ---- spectra ----------------------------------------------------------------

struct SpectrumParams {
  std::size_t latents = 50;
  std::size_t stage = 1;
  std::uint64_t seed = 0;
};

/// Averaged curve over every head of every encoder block of one stage, for
/// `latents` random latents.
template <class T>
SpectrumCurve attention_spectrum(const Generator<T>& g, const SpectrumParams& p);

/// Curve well-formedness over the generated maps: each curve monotone with
/// endpoint 1 +- 1e-9.
VerificationReport check_spectrum(const Generator<double>& g, const SpectrumParams& p,
                                  SpectrumCurve* average = nullptr);

// ---- gradients --------------------------------------------------------------

struct GradientCheckParams {
  std::size_t probes_per_group = 16;  // 0 = every entry
  double step = 1e-5;                 // relative to max(1, |theta|)
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so gradients that are zero up
  /// to finite-difference roundoff are compared absolutely.
  double floor = 1e-6;
  /// Step multipliers retried when the base step misses the tolerance.
  std::vector<double> step_ladder{0.5, 0.25, 0.125, 2.0, 4.0};
  double max_refined_fraction = 0.01;
  std::uint64_t seed = 0;
};

struct GradientGroup {
  std::string name;
  Var<double> var;
};

/// Central differences against backward() for a scalar loss. The loss must
/// rebuild its graph from the current group values on every call.
VerificationReport gradient_check(const std::string& name,
                                  const std::function<Var<double>()>& loss,
                                  std::vector<GradientGroup> groups,
                                  const GradientCheckParams& p);

struct EncoderGradientParams {
  std::size_t pixels = 16;
  std::size_t hidden = 64;
  std::size_t w_dim = 32;
  AblationVariant variant;
  GradientCheckParams check;
  bool uniform_attention = false;  // zero the Q projection
};

/// Every parameter of one encoder block plus its input sheet and latent.
VerificationReport gradient_check_encoder(const EncoderGradientParams& p);

/// Every parameter group of a small generator plus the input latent.
VerificationReport gradient_check_generator(const GeneratorConfig& config,
                                            const GradientCheckParams& p);

// ---- concentration -----------------------------------------------------------

struct ConcentrationParams {
  std::size_t pixels = 64;
  std::size_t hidden = 64;
  std::size_t seeds = 100;
  std::vector<double> scale_levels{0.0, 1.0, 10.0};
  std::size_t bootstrap = 2000;
  double confidence = 0.95;
  bool demodulate = true;  // false turns Q/K demod off in both arms (negative control)
  std::uint64_t seed = 0;
};

/// Mean max attention entry with Q/K demod on vs off per style scale, paired
/// over seeds. Verdict: at every level >= 10 the lower bootstrap bound of
/// mean(off - on) is > 0.
VerificationReport concentration_study(const ConcentrationParams& p);

/// Percentile bootstrap interval of the mean.
std::pair<double, double> bootstrap_mean_interval(const std::vector<double>& xs,
                                                  std::size_t resamples, double confidence,
                                                  RngStream rng);

// ---- attention cost ------------------------------------------------------------

struct BenchParams {
  std::vector<std::size_t> n_list{256, 1024, 4096};
  std::size_t linformer_k = kLinformerK;
  std::size_t hidden = 32;
  bool measure = true;  // run the kernels under OpCounter (and time them)
  std::uint64_t seed = 0;
};

/// Least-squares polynomial fit of degree `degree`; returns R^2.
double polynomial_fit_r2(const std::vector<double>& x, const std::vector<double>& y,
                         std::size_t degree);
/// Slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Analytic and measured FLOPs / map sizes for full and Linformer attention.
VerificationReport bench_attention(const BenchParams& p);

// ---- head sweep ------------------------------------------------------------------

struct HeadSweepParams {
  std::vector<std::size_t> heads{1, 2, 4, 8};
  std::size_t hidden = 256;
  std::size_t pixels = 1024;
  std::size_t latents = 2;
  std::uint64_t seed = 0;
};

/// One-layer encoder at 32x32 with varying head counts; records mean pairwise
/// total-variation distance between heads' maps and mean max entry. Purely
/// descriptive (no verdict beyond finiteness).
VerificationReport head_sweep(const HeadSweepParams& p);

}  // namespace styleformer
