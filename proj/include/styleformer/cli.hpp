#pragma once

// Command layer behind the styleformer-cli tool. Every command resolves a
// RunConfig, writes it to <out>/run_config.json and then its own outputs;
// re-running from that file reproduces the outputs byte for byte.
//
// RunConfig JSON schema:
//   command        generate | verify | mix | ablate | bench | train-toy | spectrum | attn-dump
//   generator      generator config object (see config_io.hpp)
//   seed           unsigned integer; the only source of randomness
//   out            output directory
//   precision      "single" | "double"
//   checks         array of check names (verify)
//   count, cutoff, steps, metric_every, latents, stage      unsigned integers
//   query          integer pixel index, -1 for the centre pixel (attn-dump)
//   rows, cols     arrays of unsigned latent seeds (mix)
//   variant        ablation variant name (ablate)
//   quick, disable_demod, raw    booleans
//   resume         checkpoint path or "" (train-toy)
//   train          toy training config object (train-toy, ablate)

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "styleformer/generator.hpp"
#include "styleformer/toy.hpp"

namespace styleformer {

enum class Precision { Single, Double };
const char* to_string(Precision p);
Precision parse_precision(std::string_view name);

/// Exit codes of the tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;

struct RunConfig {
  std::string command;
  GeneratorConfig generator = GeneratorConfig::preset_config("cifar10");
  std::uint64_t seed = 0;
  std::string out = "out";
  Precision precision = Precision::Double;
  std::vector<std::string> checks{"all"};  // "all" expands to every check

  std::size_t count = 4;
  std::size_t cutoff = 0;  // 0 = the generator's hybrid cutoff
  std::size_t steps = 2000;
  std::size_t metric_every = 250;
  std::size_t latents = 50;
  std::size_t stage = 1;
  long long query = -1;
  std::vector<std::uint64_t> rows{1, 2, 3}, cols{4, 5, 6};
  std::string variant = "baseline";
  bool quick = false;
  bool disable_demod = false;
  bool raw = false;
  std::string resume;
  TrainConfig train;

  /// Applies the single-seed rule: the generator and toy-training seeds are
  /// overwritten by `seed`.
  void propagate_seed();
  std::string to_json(int indent = 2) const;
  static RunConfig from_json(std::string_view text);
};

/// Names accepted by verify's check selection.
const std::vector<std::string>& verification_check_names();

/// (rows + 1) x (cols + 1) cells. Row 0 / column 0 hold the pure-latent
/// images of the column / row seeds; cell (i, j) takes styles at resolutions
/// <= cutoff from row seed i and the rest from column seed j. Cell (0, 0) is
/// empty. Noise is off so cells are comparable. The cutoff must be one of
/// the generator's stage resolutions.
template <class T>
std::vector<std::vector<FeatureMap<double>>> style_mix_grid(const Generator<T>& g,
                                                            const std::vector<std::uint64_t>& rows,
                                                            const std::vector<std::uint64_t>& cols,
                                                            std::size_t cutoff);

/// Latent seed of image i of a generate run.
std::uint64_t image_seed(std::uint64_t run_seed, std::size_t index);

/// Executes one resolved run; returns an exit code. Diagnostics go to `err`.
int execute(const RunConfig& run, std::ostream& out, std::ostream& err);

/// Full command-line entry: parses `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace styleformer
