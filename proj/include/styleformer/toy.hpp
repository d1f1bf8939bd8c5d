#pragma once

// Desk-scale adversarial training: synthetic two-mode blob images, a small
// MLP discriminator, the non-saturating logistic loss (optional R1) and Adam.

#include <memory>
#include <string>
#include <vector>

#include "styleformer/generator.hpp"

namespace styleformer {

/// Image i: background -0.5 plus one Gaussian blob whose mode (left/top vs
/// right/bottom centre and colour) is a fair coin flip. Centres jitter by
/// +-jitter pixels, amplitude is uniform in [0.75, 1.25].
struct ToyDatasetRecipe {
  std::size_t side = 8;
  std::size_t channels = 3;
  std::size_t size = 4096;
  double blob_sigma = 1.2;
  double jitter = 0.5;
  std::uint64_t seed = 0;
  bool operator==(const ToyDatasetRecipe&) const = default;
};

class ToyDataset {
 public:
  explicit ToyDataset(ToyDatasetRecipe recipe);

  const ToyDatasetRecipe& recipe() const noexcept { return recipe_; }
  std::size_t size() const noexcept { return images_.rows(); }
  std::size_t dim() const noexcept { return images_.cols(); }
  /// size x (side * side * channels), pixel-major (y, x, c).
  const Tensor<double>& images() const noexcept { return images_; }
  Tensor<double> batch(const std::vector<std::size_t>& indices) const;

  /// One image drawn from the recipe's distribution with its own stream.
  static Tensor<double> draw(const ToyDatasetRecipe& recipe, RngStream& rng);

 private:
  ToyDatasetRecipe recipe_;
  Tensor<double> images_;
};

struct MomentDistances {
  double mean = 0;          // || mu_s - mu_d ||_2 over pixel dims
  double covariance = 0;    // || Sigma_s - Sigma_d ||_F
  double channel_mean = 0;  // || per-channel means ||_2 difference
};

/// Rows are images in (y, x, c) order. Population (1/N) covariance.
/// Needs >= 256 samples.
MomentDistances moment_metrics(const Tensor<double>& samples, const Tensor<double>& data,
                               std::size_t channels = 3);

/// flatten -> hidden layers (leaky ReLU 0.2) -> one logit.
class ToyDiscriminator {
 public:
  ToyDiscriminator() = default;
  ToyDiscriminator(ParameterStore<double>& store, std::uint64_t seed, std::size_t input_dim,
                   const std::vector<std::size_t>& hidden);

  /// batch x input_dim -> batch x 1
  Var<double> forward(const Var<double>& x) const;
  /// Per-row input gradient of the logit, as a graph (exact for the
  /// piecewise-linear network), for the R1 penalty.
  Var<double> input_gradient(const Var<double>& x) const;
  std::size_t parameter_count() const;

 private:
  std::vector<Var<double>> weights_, biases_;
};

struct TrainConfig {
  GeneratorConfig generator = GeneratorConfig::preset_config("toy");
  ToyDatasetRecipe data;
  std::vector<std::size_t> disc_hidden{64, 32};
  std::size_t batch = 16;
  double lr_g = 2.5e-3;
  double lr_d = 2.5e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
  double r1_gamma = 0.0;  // off by default
  bool noise = true;      // per-pixel noise in the generator during training
  std::size_t metric_samples = 256;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json(int indent = 2) const;
  static TrainConfig from_json(std::string_view text);
};

struct StepRecord {
  std::uint64_t step = 0;
  double d_loss = 0;
  double g_loss = 0;
  double r1 = 0;
};

struct MetricRecord {
  std::uint64_t step = 0;
  MomentDistances distances;
};

/// Adam moments for one parameter store, in store order.
struct AdamState {
  std::vector<Tensor<double>> m, v;
};

class ToyTrainer {
 public:
  explicit ToyTrainer(TrainConfig config);
  ToyTrainer(const ToyTrainer&) = delete;
  ToyTrainer& operator=(const ToyTrainer&) = delete;

  /// One discriminator update, then one generator update. Throws
  /// NumericError naming the step if a loss is not finite.
  StepRecord step();
  /// Runs `steps` steps; records metrics every `metric_every` steps (0 = never)
  /// and at the end.
  void train(std::size_t steps, std::size_t metric_every = 0);

  /// Moment distances of `metric_samples` generator samples (fixed latents,
  /// no noise) against the dataset.
  MomentDistances evaluate() const;
  /// metric_samples x dim generator images for the fixed evaluation latents.
  Tensor<double> samples(std::size_t count) const;

  const TrainConfig& config() const noexcept { return config_; }
  std::uint64_t steps_done() const noexcept { return step_; }
  const std::vector<StepRecord>& history() const noexcept { return history_; }
  const std::vector<MetricRecord>& metrics() const noexcept { return metrics_; }
  const Generator<double>& generator() const noexcept { return *generator_; }
  Generator<double>& generator() noexcept { return *generator_; }
  const ParameterStore<double>& discriminator_parameters() const noexcept { return d_store_; }
  const ToyDataset& dataset() const noexcept { return data_; }

  /// Versioned binary checkpoint: magic "SFCKPT", format version, JSON header
  /// (train config, step, blob table), then little-endian float64 blobs.
  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<ToyTrainer> load_checkpoint(const std::string& path);

  /// "step,d_loss,g_loss,r1" rows.
  std::string history_csv() const;
  /// "step,mean_distance,covariance_distance,channel_mean_distance" rows.
  std::string metrics_csv() const;

 private:
  Var<double> fake_batch(std::uint64_t step, const char* label) const;

  TrainConfig config_;
  ToyDataset data_;
  std::unique_ptr<Generator<double>> generator_;
  ParameterStore<double> d_store_;
  ToyDiscriminator disc_;
  AdamState adam_g_, adam_d_;
  std::uint64_t step_ = 0;
  std::vector<StepRecord> history_;
  std::vector<MetricRecord> metrics_;
};

/// In-place Adam step with bias correction; `t` is the 1-based step count.
void adam_update(ParameterStore<double>& store, AdamState& state, double lr, double beta1,
                 double beta2, double eps, std::uint64_t t);

}  // namespace styleformer
