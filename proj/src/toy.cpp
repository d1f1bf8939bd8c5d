#include "styleformer/toy.hpp"

#include <Eigen/Core>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_detail.hpp"

namespace styleformer {

using detail::Json;

// ---------------------------------------------------------------- dataset

Tensor<double> ToyDataset::draw(const ToyDatasetRecipe& r, RngStream& rng) {
  static const double kColour[2][3] = {{1.2, 0.6, 0.0}, {0.0, 0.6, 1.2}};
  const int mode = rng.uniform() < 0.5 ? 0 : 1;
  const double side = static_cast<double>(r.side);
  const double base = mode == 0 ? 0.3 * side : 0.7 * side;
  const double cy = base + r.jitter * (2 * rng.uniform() - 1);
  const double cx = base + r.jitter * (2 * rng.uniform() - 1);
  const double amp = 0.75 + 0.5 * rng.uniform();
  Tensor<double> img(1, r.side * r.side * r.channels);
  const double inv = 1.0 / (2 * r.blob_sigma * r.blob_sigma);
  for (std::size_t y = 0; y < r.side; ++y) {
    for (std::size_t x = 0; x < r.side; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const double blob = amp * std::exp(-(dy * dy + dx * dx) * inv);
      for (std::size_t c = 0; c < r.channels; ++c) {
        img[(y * r.side + x) * r.channels + c] = -0.5 + blob * kColour[mode][c % 3];
      }
    }
  }
  return img;
}

ToyDataset::ToyDataset(ToyDatasetRecipe recipe) : recipe_(recipe) {
  if (recipe.side == 0 || recipe.channels == 0 || recipe.size == 0) {
    throw ConfigError("toy dataset: side, channels and size must be positive");
  }
  if (!(recipe.blob_sigma > 0) || !(recipe.jitter >= 0)) {
    throw ConfigError("toy dataset: blob_sigma must be positive and jitter non-negative");
  }
  const std::size_t dim = recipe.side * recipe.side * recipe.channels;
  images_ = Tensor<double>(recipe.size, dim);
  const RngStream root(recipe.seed, "toy-data");
  for (std::size_t i = 0; i < recipe.size; ++i) {
    RngStream rng = root.derive(i);
    const auto img = draw(recipe, rng);
    std::copy(img.data().begin(), img.data().end(), images_.row(i).begin());
  }
}

Tensor<double> ToyDataset::batch(const std::vector<std::size_t>& indices) const {
  Tensor<double> out(indices.size(), dim());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= size()) throw ShapeError("toy dataset: index out of range");
    const auto src = images_.row(indices[b]);
    std::copy(src.begin(), src.end(), out.row(b).begin());
  }
  return out;
}

// ---------------------------------------------------------------- metrics

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Moments {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd cov;
};

Moments moments(const Tensor<double>& x) {
  Eigen::Map<const RowMat> m(x.data().data(), x.rows(), x.cols());
  Moments out;
  out.mean = m.colwise().mean();
  const RowMat centred = m.rowwise() - out.mean;
  out.cov = (centred.transpose() * centred) / static_cast<double>(x.rows());
  return out;
}

}  // namespace

MomentDistances moment_metrics(const Tensor<double>& samples, const Tensor<double>& data,
                               std::size_t channels) {
  if (samples.rows() < 256) {
    throw ConfigError("moment metrics need at least 256 samples, got " +
                      std::to_string(samples.rows()));
  }
  if (data.rows() == 0 || samples.cols() != data.cols()) {
    throw ShapeError("moment metrics: sample and data dimensions differ");
  }
  if (channels == 0 || data.cols() % channels != 0) {
    throw ShapeError("moment metrics: dimension is not a multiple of the channel count");
  }
  const auto s = moments(samples);
  const auto d = moments(data);
  MomentDistances out;
  out.mean = (s.mean - d.mean).norm();
  out.covariance = (s.cov - d.cov).norm();
  Eigen::VectorXd ch = Eigen::VectorXd::Zero(channels);
  const Eigen::RowVectorXd diff = s.mean - d.mean;
  for (Eigen::Index i = 0; i < diff.size(); ++i) ch[i % channels] += diff[i];
  out.channel_mean = (ch / static_cast<double>(diff.size() / channels)).norm();
  return out;
}

// ---------------------------------------------------------------- discriminator

ToyDiscriminator::ToyDiscriminator(ParameterStore<double>& store, std::uint64_t seed,
                                   std::size_t input_dim, const std::vector<std::size_t>& hidden) {
  std::size_t fan_in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string base = "disc.fc" + std::to_string(i);
    weights_.push_back(store.add(base + ".weight", linear_init<double>(fan_in, widths[i], fan_in,
                                                                        init_stream(seed, base + ".weight"))));
    biases_.push_back(store.add(base + ".bias", Tensor<double>(1, widths[i])));
    fan_in = widths[i];
  }
}

Var<double> ToyDiscriminator::forward(const Var<double>& x) const {
  Var<double> h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = ag::add_row_vector(ag::matmul(h, weights_[i]), biases_[i]);
    if (i + 1 < weights_.size()) h = ag::leaky_relu(h, 0.2);
  }
  return h;
}

Var<double> ToyDiscriminator::input_gradient(const Var<double>& x) const {
  // d logit / dx = W_L^T, then back through each (mask, W_i^T) pair.
  std::vector<Var<double>> masks;
  Var<double> h = x;
  for (std::size_t i = 0; i + 1 < weights_.size(); ++i) {
    const auto pre = ag::add_row_vector(ag::matmul(h, weights_[i]), biases_[i]);
    masks.push_back(ag::leaky_relu_slopes(pre, 0.2));
    h = ag::leaky_relu(pre, 0.2);
  }
  Var<double> g = ag::matmul(constant(Tensor<double>(x.rows(), 1, 1.0)), weights_.back(),
                             Trans::No, Trans::Yes);
  for (std::size_t i = masks.size(); i-- > 0;) {
    g = ag::matmul(ag::hadamard(g, masks[i]), weights_[i], Trans::No, Trans::Yes);
  }
  return g;
}

std::size_t ToyDiscriminator::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.value().size();
  for (const auto& b : biases_) n += b.value().size();
  return n;
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  generator.validate();
  const auto side = generator.target_resolution;
  if (data.side != side || data.channels != generator.rgb_channels) {
    throw ConfigError("train config: dataset is " + std::to_string(data.side) + "x" +
                      std::to_string(data.side) + "x" + std::to_string(data.channels) +
                      " but the generator emits " + std::to_string(side) + "x" +
                      std::to_string(side) + "x" + std::to_string(generator.rgb_channels));
  }
  if (batch == 0) throw ConfigError("train config: batch must be positive");
  if (!(lr_g >= 0) || !(lr_d >= 0)) throw ConfigError("train config: learning rates must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("train config: Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("train config: eps must be positive");
  if (!(r1_gamma >= 0)) throw ConfigError("train config: r1_gamma must be >= 0");
  if (metric_samples < 256) throw ConfigError("train config: metric_samples must be >= 256");
  if (disc_hidden.empty()) throw ConfigError("train config: discriminator needs a hidden layer");
  std::size_t fan_in = side * side * data.channels, count = 0;
  for (auto h : disc_hidden) {
    if (h == 0) throw ConfigError("train config: zero-width discriminator layer");
    count += fan_in * h + h;
    fan_in = h;
  }
  count += fan_in + 1;
  if (count >= 100000) {
    throw ConfigError("train config: discriminator has " + std::to_string(count) +
                      " parameters, limit is 100000");
  }
}

namespace {

Json recipe_json(const ToyDatasetRecipe& r) {
  Json j;
  j["side"] = r.side;
  j["channels"] = r.channels;
  j["size"] = r.size;
  j["blob_sigma"] = r.blob_sigma;
  j["jitter"] = r.jitter;
  j["seed"] = r.seed;
  return j;
}

Json train_json(const TrainConfig& c) {
  Json j;
  j["generator"] = detail::to_json_value(c.generator);
  j["data"] = recipe_json(c.data);
  j["disc_hidden"] = c.disc_hidden;
  j["batch"] = c.batch;
  j["lr_g"] = c.lr_g;
  j["lr_d"] = c.lr_d;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["r1_gamma"] = c.r1_gamma;
  j["noise"] = c.noise;
  j["metric_samples"] = c.metric_samples;
  j["seed"] = c.seed;
  return j;
}

std::size_t as_size(const Json& j, const std::string& key) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw ConfigError(key + " must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

double as_double(const Json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError(key + " must be a number");
  return j.get<double>();
}

TrainConfig train_from(const Json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  bool data_given = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "generator") c.generator = detail::generator_config_from(v);
    else if (key == "data") {
      if (!v.is_object()) throw ConfigError("data must be an object");
      data_given = true;
      for (const auto& [k, dv] : v.items()) {
        const std::string name = "data." + k;
        if (k == "side") c.data.side = as_size(dv, name);
        else if (k == "channels") c.data.channels = as_size(dv, name);
        else if (k == "size") c.data.size = as_size(dv, name);
        else if (k == "blob_sigma") c.data.blob_sigma = as_double(dv, name);
        else if (k == "jitter") c.data.jitter = as_double(dv, name);
        else if (k == "seed") c.data.seed = as_size(dv, name);
        else throw ConfigError("train config: unknown key '" + name + "'");
      }
    } else if (key == "disc_hidden") {
      if (!v.is_array()) throw ConfigError("disc_hidden must be an array");
      c.disc_hidden.clear();
      for (const auto& e : v) c.disc_hidden.push_back(as_size(e, key));
    } else if (key == "batch") c.batch = as_size(v, key);
    else if (key == "lr_g") c.lr_g = as_double(v, key);
    else if (key == "lr_d") c.lr_d = as_double(v, key);
    else if (key == "beta1") c.beta1 = as_double(v, key);
    else if (key == "beta2") c.beta2 = as_double(v, key);
    else if (key == "eps") c.eps = as_double(v, key);
    else if (key == "r1_gamma") c.r1_gamma = as_double(v, key);
    else if (key == "noise") {
      if (!v.is_boolean()) throw ConfigError("noise must be a boolean");
      c.noise = v.get<bool>();
    } else if (key == "metric_samples") c.metric_samples = as_size(v, key);
    else if (key == "seed") c.seed = as_size(v, key);
    else throw ConfigError("train config: unknown key '" + key + "'");
  }
  if (!data_given) {
    c.data.side = c.generator.target_resolution;
    c.data.channels = c.generator.rgb_channels;
  }
  c.validate();
  return c;
}

}  // namespace

std::string TrainConfig::to_json(int indent) const { return train_json(*this).dump(indent); }

TrainConfig TrainConfig::from_json(std::string_view text) {
  return train_from(detail::parse_json(text, "train config"));
}

// ---------------------------------------------------------------- trainer

void adam_update(ParameterStore<double>& store, AdamState& state, double lr, double beta1,
                 double beta2, double eps, std::uint64_t t) {
  const auto& entries = store.entries();
  if (state.m.size() != entries.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& e : entries) {
      state.m.emplace_back(e.var.rows(), e.var.cols());
      state.v.emplace_back(e.var.rows(), e.var.cols());
    }
  }
  const double c1 = 1 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var<double> p = entries[i].var;
    const Tensor<double> g = p.grad();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    auto w = p.mutable_value().data();
    const auto gd = g.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1 * m[k] + (1 - beta1) * gd[k];
      v[k] = beta2 * v[k] + (1 - beta2) * gd[k] * gd[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

namespace {

AdamState zero_state(const ParameterStore<double>& store) {
  AdamState s;
  for (const auto& e : store.entries()) {
    s.m.emplace_back(e.var.rows(), e.var.cols());
    s.v.emplace_back(e.var.rows(), e.var.cols());
  }
  return s;
}

void require_finite_loss(double value, const char* what, std::uint64_t step) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(what) + " is not finite at step " + std::to_string(step));
  }
}

}  // namespace

ToyTrainer::ToyTrainer(TrainConfig config) : config_(std::move(config)), data_([&] {
  config_.validate();
  return config_.data;
}()) {
  generator_ = std::make_unique<Generator<double>>(config_.generator);
  disc_ = ToyDiscriminator(d_store_, config_.seed ^ 0x5d15c0ULL, data_.dim(), config_.disc_hidden);
  adam_g_ = zero_state(generator_->parameters());
  adam_d_ = zero_state(d_store_);
}

Var<double> ToyTrainer::fake_batch(std::uint64_t step, const char* label) const {
  // Stateless: latents and noise depend only on (seed, step, phase, row).
  const RngStream root = RngStream(config_.seed, "toy-latent").derive(label).derive(step);
  const std::uint64_t noise_seed = RngStream(config_.seed, "toy-noise").derive(label).next_u64();
  const auto side = config_.generator.target_resolution;
  std::vector<Var<double>> rows;
  for (std::size_t b = 0; b < config_.batch; ++b) {
    RngStream rng = root.derive(b);
    const auto z = generator_->sample_latent(rng);
    const NoiseSpec noise = config_.noise ? NoiseSpec::random(noise_seed, step * config_.batch + b)
                                          : NoiseSpec::none();
    const auto sheet = generator_->forward(constant(z.values), noise);
    rows.push_back(ag::reshape(sheet, 1, side * side * config_.generator.rgb_channels));
  }
  return ag::concat_rows(rows);
}

StepRecord ToyTrainer::step() {
  const std::uint64_t t = step_ + 1;
  StepRecord rec;
  rec.step = t;
  auto& g_store = generator_->parameters();

  // Discriminator.
  Tensor<double> fake_value;
  {
    NoGradGuard no_grad;
    fake_value = fake_batch(step_, "d").value();
  }
  RngStream pick = RngStream(config_.seed, "toy-batch").derive(step_);
  std::vector<std::size_t> idx(config_.batch);
  for (auto& i : idx) i = pick.index(data_.size());
  const Var<double> real(data_.batch(idx), config_.r1_gamma > 0);

  d_store_.zero_grad();
  Var<double> d_loss = ag::add(ag::mean(ag::softplus(disc_.forward(constant(fake_value)))),
                               ag::mean(ag::softplus(ag::scale(disc_.forward(real), -1.0))));
  rec.d_loss = d_loss.value()[0];
  if (config_.r1_gamma > 0) {
    const auto grad = disc_.input_gradient(real);
    const auto r1 = ag::scale(ag::sum(ag::hadamard(grad, grad)), 1.0 / static_cast<double>(config_.batch));
    rec.r1 = r1.value()[0];
    d_loss = ag::add(d_loss, ag::scale(r1, 0.5 * config_.r1_gamma));
  }
  require_finite_loss(d_loss.value()[0], "discriminator loss", t);
  d_loss.backward();
  adam_update(d_store_, adam_d_, config_.lr_d, config_.beta1, config_.beta2, config_.eps, t);

  // Generator.
  g_store.zero_grad();
  const auto fake = fake_batch(step_, "g");
  const auto g_loss = ag::mean(ag::softplus(ag::scale(disc_.forward(fake), -1.0)));
  rec.g_loss = g_loss.value()[0];
  require_finite_loss(rec.g_loss, "generator loss", t);
  g_loss.backward();
  d_store_.zero_grad();
  adam_update(g_store, adam_g_, config_.lr_g, config_.beta1, config_.beta2, config_.eps, t);
  for (const auto& e : g_store.entries()) {
    if (!all_finite(e.var.value())) {
      throw NumericError("generator parameter " + e.name + " is not finite at step " + std::to_string(t));
    }
  }

  step_ = t;
  history_.push_back(rec);
  return rec;
}

void ToyTrainer::train(std::size_t steps, std::size_t metric_every) {
  for (std::size_t i = 0; i < steps; ++i) {
    step();
    if (metric_every != 0 && step_ % metric_every == 0 && i + 1 < steps) {
      metrics_.push_back({step_, evaluate()});
    }
  }
  metrics_.push_back({step_, evaluate()});
}

Tensor<double> ToyTrainer::samples(std::size_t count) const {
  Tensor<double> out(count, data_.dim());
  const RngStream root(config_.seed, "toy-eval-latent");
  for (std::size_t i = 0; i < count; ++i) {
    RngStream rng = root.derive(i);
    const auto img = generator_->synthesize(generator_->sample_latent(rng), NoiseSpec::none());
    std::copy(img.data.begin(), img.data.end(), out.row(i).begin());
  }
  return out;
}

MomentDistances ToyTrainer::evaluate() const {
  return moment_metrics(samples(config_.metric_samples), data_.images(), config_.data.channels);
}

std::string ToyTrainer::history_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "step,d_loss,g_loss,r1\n";
  for (const auto& r : history_) os << r.step << ',' << r.d_loss << ',' << r.g_loss << ',' << r.r1 << '\n';
  return os.str();
}

std::string ToyTrainer::metrics_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "step,mean_distance,covariance_distance,channel_mean_distance\n";
  for (const auto& r : metrics_) {
    os << r.step << ',' << r.distances.mean << ',' << r.distances.covariance << ','
       << r.distances.channel_mean << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '\0', '\n'};
constexpr std::uint64_t kFormatVersion = 1;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
    return r;
  }
  return v;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw ConfigError("checkpoint " + path + ": truncated");
  return to_le(v);
}

struct Blob {
  std::string name;
  Tensor<double> value;
};

std::vector<Blob> collect(const ParameterStore<double>& store, const AdamState& adam,
                          const std::string& prefix) {
  std::vector<Blob> out;
  const auto& e = store.entries();
  for (const auto& p : e) out.push_back({prefix + "/param/" + p.name, p.var.value()});
  for (std::size_t i = 0; i < e.size(); ++i) out.push_back({prefix + "/adam_m/" + e[i].name, adam.m[i]});
  for (std::size_t i = 0; i < e.size(); ++i) out.push_back({prefix + "/adam_v/" + e[i].name, adam.v[i]});
  return out;
}

}  // namespace

void ToyTrainer::save_checkpoint(const std::string& path) const {
  auto blobs = collect(generator_->parameters(), adam_g_, "g");
  for (auto& b : collect(d_store_, adam_d_, "d")) blobs.push_back(std::move(b));
  Tensor<double> hist(history_.size(), 4);
  for (std::size_t i = 0; i < history_.size(); ++i) {
    hist(i, 0) = static_cast<double>(history_[i].step);
    hist(i, 1) = history_[i].d_loss;
    hist(i, 2) = history_[i].g_loss;
    hist(i, 3) = history_[i].r1;
  }
  blobs.push_back({"history", hist});
  Tensor<double> met(metrics_.size(), 4);
  for (std::size_t i = 0; i < metrics_.size(); ++i) {
    met(i, 0) = static_cast<double>(metrics_[i].step);
    met(i, 1) = metrics_[i].distances.mean;
    met(i, 2) = metrics_[i].distances.covariance;
    met(i, 3) = metrics_[i].distances.channel_mean;
  }
  blobs.push_back({"metrics", met});

  Json header;
  header["format_version"] = kFormatVersion;
  header["train_config"] = train_json(config_);
  header["step"] = step_;
  Json table = Json::array();
  for (const auto& b : blobs) table.push_back({{"name", b.name}, {"rows", b.value.rows()}, {"cols", b.value.cols()}});
  header["blobs"] = table;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof kMagic);
  put_u64(os, kFormatVersion);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : blobs) {
    for (double x : b.value.data()) put_u64(os, std::bit_cast<std::uint64_t>(x));
  }
  if (!os) throw ConfigError("failed writing checkpoint: " + path);
}

std::unique_ptr<ToyTrainer> ToyTrainer::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path);
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ConfigError("checkpoint " + path + ": bad magic");
  }
  const auto version = get_u64(is, path);
  if (version != kFormatVersion) {
    throw ConfigError("checkpoint " + path + ": unsupported format version " + std::to_string(version));
  }
  const auto len = get_u64(is, path);
  if (len > (1u << 28)) throw ConfigError("checkpoint " + path + ": header too large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("checkpoint " + path + ": truncated");
  const Json header = detail::parse_json(text, "checkpoint header");

  auto trainer = std::make_unique<ToyTrainer>(train_from(header.at("train_config")));
  std::map<std::string, Tensor<double>> blobs;
  for (const auto& entry : header.at("blobs")) {
    const auto rows = entry.at("rows").get<std::size_t>();
    const auto cols = entry.at("cols").get<std::size_t>();
    Tensor<double> t(rows, cols);
    for (auto& x : t.data()) x = std::bit_cast<double>(get_u64(is, path));
    blobs.emplace(entry.at("name").get<std::string>(), std::move(t));
  }

  auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw ConfigError("checkpoint " + path + ": missing blob " + name);
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw ConfigError("checkpoint " + path + ": blob " + name + " has the wrong shape");
    }
    return it->second;
  };
  auto restore = [&](ParameterStore<double>& store, AdamState& adam, const std::string& prefix) {
    const auto& e = store.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
      Var<double> p = e[i].var;
      p.mutable_value() = take(prefix + "/param/" + e[i].name, p.rows(), p.cols());
      adam.m[i] = take(prefix + "/adam_m/" + e[i].name, p.rows(), p.cols());
      adam.v[i] = take(prefix + "/adam_v/" + e[i].name, p.rows(), p.cols());
    }
  };
  restore(trainer->generator_->parameters(), trainer->adam_g_, "g");
  restore(trainer->d_store_, trainer->adam_d_, "d");

  trainer->step_ = header.at("step").get<std::uint64_t>();
  const auto hist = blobs.count("history") ? blobs.at("history") : Tensor<double>();
  for (std::size_t i = 0; i < hist.rows(); ++i) {
    trainer->history_.push_back({static_cast<std::uint64_t>(hist(i, 0)), hist(i, 1), hist(i, 2), hist(i, 3)});
  }
  const auto met = blobs.count("metrics") ? blobs.at("metrics") : Tensor<double>();
  for (std::size_t i = 0; i < met.rows(); ++i) {
    trainer->metrics_.push_back({static_cast<std::uint64_t>(met(i, 0)), {met(i, 1), met(i, 2), met(i, 3)}});
  }
  return trainer;
}

}  // namespace styleformer
