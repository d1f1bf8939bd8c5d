#include "styleformer/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json_detail.hpp"
#include "styleformer/config_io.hpp"
#include "styleformer/report_io.hpp"
#include "styleformer/verification.hpp"

namespace styleformer {

namespace fs = std::filesystem;
using detail::Json;

const char* to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }

Precision parse_precision(std::string_view name) {
  if (name == "single") return Precision::Single;
  if (name == "double") return Precision::Double;
  throw ConfigError("unknown precision '" + std::string(name) + "' (single|double)");
}

const std::vector<std::string>& verification_check_names() {
  static const std::vector<std::string> names{
      "modulation_algebra", "associativity", "qkv_std",        "encoder_output_std", "sigma_decay",
      "concentration",      "gradients",     "attention_cost", "spectrum"};
  return names;
}

std::uint64_t image_seed(std::uint64_t run_seed, std::size_t index) {
  return RngStream(run_seed, "generate-image").derive(index).next_u64();
}

// ---------------------------------------------------------------- RunConfig

void RunConfig::propagate_seed() {
  generator.seed = seed;
  train.seed = seed;
  train.generator.seed = seed;
}

std::string RunConfig::to_json(int indent) const {
  Json j;
  j["command"] = command;
  j["generator"] = detail::to_json_value(generator);
  j["seed"] = seed;
  j["out"] = out;
  j["precision"] = styleformer::to_string(precision);
  j["checks"] = checks;
  j["count"] = count;
  j["cutoff"] = cutoff;
  j["steps"] = steps;
  j["metric_every"] = metric_every;
  j["latents"] = latents;
  j["stage"] = stage;
  j["query"] = query;
  j["rows"] = rows;
  j["cols"] = cols;
  j["variant"] = variant;
  j["quick"] = quick;
  j["disable_demod"] = disable_demod;
  j["raw"] = raw;
  j["resume"] = resume;
  j["train"] = Json::parse(train.to_json());
  return j.dump(indent);
}

namespace {

std::uint64_t json_u64(const Json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(key + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool json_bool(const Json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key + " must be a boolean");
  return v.get<bool>();
}

std::string json_string(const Json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  return v.get<std::string>();
}

std::vector<std::uint64_t> json_u64s(const Json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key + " must be an array");
  std::vector<std::uint64_t> out;
  for (const auto& e : v) out.push_back(json_u64(e, key));
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text) {
  const Json j = detail::parse_json(text, "run config");
  if (!j.is_object() || !j.contains("command")) throw ConfigError("run config needs a command");
  RunConfig r;
  for (const auto& [key, v] : j.items()) {
    if (key == "command") r.command = json_string(v, key);
    else if (key == "generator") r.generator = detail::generator_config_from(v);
    else if (key == "seed") r.seed = json_u64(v, key);
    else if (key == "out") r.out = json_string(v, key);
    else if (key == "precision") r.precision = parse_precision(json_string(v, key));
    else if (key == "checks") {
      if (!v.is_array()) throw ConfigError("checks must be an array");
      r.checks.clear();
      for (const auto& e : v) r.checks.push_back(json_string(e, key));
    } else if (key == "count") r.count = json_u64(v, key);
    else if (key == "cutoff") r.cutoff = json_u64(v, key);
    else if (key == "steps") r.steps = json_u64(v, key);
    else if (key == "metric_every") r.metric_every = json_u64(v, key);
    else if (key == "latents") r.latents = json_u64(v, key);
    else if (key == "stage") r.stage = json_u64(v, key);
    else if (key == "query") {
      if (!v.is_number_integer()) throw ConfigError("query must be an integer");
      r.query = v.get<long long>();
    } else if (key == "rows") r.rows = json_u64s(v, key);
    else if (key == "cols") r.cols = json_u64s(v, key);
    else if (key == "variant") r.variant = json_string(v, key);
    else if (key == "quick") r.quick = json_bool(v, key);
    else if (key == "disable_demod") r.disable_demod = json_bool(v, key);
    else if (key == "raw") r.raw = json_bool(v, key);
    else if (key == "resume") r.resume = json_string(v, key);
    else if (key == "train") r.train = TrainConfig::from_json(v.dump());
    else throw ConfigError("run config: unknown key '" + key + "'");
  }
  return r;
}

// ---------------------------------------------------------------- style mixing

template <class T>
std::vector<std::vector<FeatureMap<double>>> style_mix_grid(const Generator<T>& g,
                                                            const std::vector<std::uint64_t>& rows,
                                                            const std::vector<std::uint64_t>& cols,
                                                            std::size_t cutoff) {
  const auto& cfg = g.config();
  bool in_schedule = false;
  for (std::size_t t = 0; t < cfg.stage_count(); ++t) in_schedule |= cfg.resolution(t) == cutoff;
  if (!in_schedule) {
    throw ConfigError("mix: cutoff " + std::to_string(cutoff) + " is not a stage resolution (" +
                      std::to_string(cfg.start_resolution) + ".." + std::to_string(cfg.target_resolution) + ")");
  }
  if (rows.empty() || cols.empty()) throw ConfigError("mix: need at least one row and one column seed");
  auto w_of = [&](std::uint64_t seed) {
    RngStream r(seed, "z");
    return g.map(g.sample_latent(r));
  };
  auto pure = [&](const LatentW<T>& w) {
    return to_double(g.synthesize_with_styles(std::vector<LatentW<T>>(g.style_slots().size(), w), NoiseSpec::none()));
  };
  std::vector<LatentW<T>> wr, wc;
  for (auto s : rows) wr.push_back(w_of(s));
  for (auto s : cols) wc.push_back(w_of(s));
  std::vector<std::vector<FeatureMap<double>>> grid(rows.size() + 1,
                                                    std::vector<FeatureMap<double>>(cols.size() + 1));
  for (std::size_t j = 0; j < cols.size(); ++j) grid[0][j + 1] = pure(wc[j]);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    grid[i + 1][0] = pure(wr[i]);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      grid[i + 1][j + 1] = to_double(g.synthesize_with_styles(g.mixed_styles(wr[i], wc[j], cutoff), NoiseSpec::none()));
    }
  }
  return grid;
}

template std::vector<std::vector<FeatureMap<double>>> style_mix_grid(const Generator<float>&,
                                                                     const std::vector<std::uint64_t>&,
                                                                     const std::vector<std::uint64_t>&,
                                                                     std::size_t);
template std::vector<std::vector<FeatureMap<double>>> style_mix_grid(const Generator<double>&,
                                                                     const std::vector<std::uint64_t>&,
                                                                     const std::vector<std::uint64_t>&,
                                                                     std::size_t);

// ---------------------------------------------------------------- commands

namespace {

struct Context {
  const RunConfig& run;
  fs::path dir;
  std::ostream& out;
  std::ostream& err;

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Json distances_json(const MomentDistances& d) {
  Json j;
  j["mean"] = d.mean;
  j["covariance"] = d.covariance;
  j["channel_mean"] = d.channel_mean;
  return j;
}

template <class T>
int generate_t(const Context& c) {
  const Generator<T> g(c.run.generator);
  Json manifest;
  manifest["command"] = "generate";
  manifest["preset"] = c.run.generator.preset;
  manifest["config_hash"] = hex64(config_hash(c.run.generator));
  manifest["seed"] = c.run.seed;
  manifest["precision"] = to_string(c.run.precision);
  Json images = Json::array();
  for (std::size_t i = 0; i < c.run.count; ++i) {
    const std::uint64_t s = image_seed(c.run.seed, i);
    RngStream r(s, "z");
    const auto img = to_double(g.synthesize(g.sample_latent(r), NoiseSpec::random(s)));
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.png", i);
    write_png(c.path(name), img);
    Json e;
    e["file"] = name;
    e["latent_seed"] = s;
    e["height"] = img.height;
    e["width"] = img.width;
    if (c.run.raw) {
      std::snprintf(name, sizeof name, "img_%04zu.raw", i);
      write_raw(c.path(name), img);
      e["raw"] = name;
    }
    images.push_back(e);
  }
  manifest["images"] = images;
  write_text(c.path("manifest.json"), manifest.dump(2) + "\n");
  c.out << "generated " << c.run.count << " images (" << c.run.generator.target_resolution << "x"
        << c.run.generator.target_resolution << ") in " << c.dir.string() << "\n";
  return kExitOk;
}

int cmd_generate(const Context& c) {
  if (c.run.count == 0) throw ConfigError("generate: count must be positive");
  return c.run.precision == Precision::Single ? generate_t<float>(c) : generate_t<double>(c);
}

std::vector<VerificationReport> run_check(const std::string& name, const RunConfig& run) {
  const bool q = run.quick;
  const bool demod = !run.disable_demod;
  const std::uint64_t seed = run.seed;
  if (name == "modulation_algebra") return {check_modulation_algebra({q ? 100u : 1000u, 48, seed})};
  if (name == "associativity") return {check_associativity({q ? 20u : 100u, 48, seed})};
  if (name == "qkv_std") {
    QkvStdParams p;
    p.samples = q ? 20000 : 100000;
    p.demodulate = demod;
    p.seed = seed;
    return {check_qkv_demod_std(p)};
  }
  if (name == "encoder_output_std") {
    EncoderStdParams p;
    p.trials = q ? 150 : 400;
    p.demodulate = demod;
    p.seed = seed;
    return {check_encoder_output_std(p)};
  }
  if (name == "sigma_decay") {
    SigmaDecayParams p;
    p.trials = q ? 20000 : 100000;
    p.seed = seed;
    return {monte_carlo_sigma_decay(p)};
  }
  if (name == "concentration") {
    ConcentrationParams p;
    p.seeds = q ? 30 : 100;
    p.bootstrap = q ? 500 : 2000;
    p.demodulate = demod;
    p.seed = seed;
    return {concentration_study(p)};
  }
  if (name == "gradients") {
    std::vector<VerificationReport> out;
    for (const auto& v : ablation_variant_names()) {
      EncoderGradientParams p;
      p.variant = AblationVariant::named(v);
      p.check.probes_per_group = q ? 4 : 16;
      p.check.seed = seed;
      auto r = gradient_check_encoder(p);
      r.check = "gradients." + v;
      out.push_back(std::move(r));
    }
    return out;
  }
  if (name == "attention_cost") {
    BenchParams p;
    p.measure = !q;
    p.seed = seed;
    return {bench_attention(p)};
  }
  if (name == "spectrum") {
    auto cfg = GeneratorConfig::preset_config("ablation-small");
    cfg.seed = seed;
    const Generator<double> g(cfg);
    return {check_spectrum(g, {q ? 3u : 25u, 1, seed})};
  }
  throw ConfigError("unknown check '" + name + "'");
}

std::vector<std::string> selected_checks(const RunConfig& run) {
  if (run.checks.empty()) throw ConfigError("no checks selected");
  std::vector<std::string> out;
  for (const auto& c : run.checks) {
    if (c == "all") {
      for (const auto& n : verification_check_names()) out.push_back(n);
      continue;
    }
    const auto& names = verification_check_names();
    if (std::find(names.begin(), names.end(), c) == names.end()) {
      throw ConfigError("unknown check '" + c + "'");
    }
    out.push_back(c);
  }
  return out;
}

/// Writes each report (deterministic part) plus its timing; returns the
/// summary entries.
Json write_reports(const Context& c, const std::vector<VerificationReport>& reports, bool& all_pass,
                   std::vector<std::string>& failing) {
  fs::create_directories(c.dir / "reports");
  Json entries = Json::array();
  for (const auto& r : reports) {
    const std::string file = "reports/" + r.check + ".json";
    write_text(c.path(file), r.to_json(false) + "\n");
    if (!r.informational.empty()) {
      Json t;
      for (const auto& [k, v] : r.informational) t[k] = v;
      write_text(c.path("reports/" + r.check + ".timing.json"), t.dump(2) + "\n");
    }
    Json e;
    e["check"] = r.check;
    e["pass"] = r.pass();
    e["file"] = file;
    entries.push_back(e);
    c.out << (r.pass() ? "PASS " : "FAIL ") << r.check << "\n";
    if (!r.pass()) {
      all_pass = false;
      failing.push_back(r.check);
      for (const auto& cmp : r.comparisons) {
        if (!cmp.pass) {
          c.err << "  " << r.check << ": " << cmp.quantity << " measured " << cmp.measured << ", "
                << to_string(cmp.relation) << " " << cmp.expected << " (tol " << cmp.tolerance << ")\n";
        }
      }
    }
  }
  return entries;
}

int cmd_verify(const Context& c) {
  const auto names = selected_checks(c.run);
  std::vector<VerificationReport> reports;
  for (const auto& n : names) {
    const auto t0 = std::chrono::steady_clock::now();
    auto rs = run_check(n, c.run);
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& r : rs) {
      r.informational.emplace_back("check_seconds", sec);
      reports.push_back(std::move(r));
    }
  }
  bool pass = true;
  std::vector<std::string> failing;
  Json summary;
  summary["command"] = "verify";
  summary["seed"] = c.run.seed;
  summary["disable_demod"] = c.run.disable_demod;
  summary["checks"] = write_reports(c, reports, pass, failing);
  summary["failing"] = failing;
  summary["pass"] = pass;
  write_text(c.path("summary.json"), summary.dump(2) + "\n");
  if (!pass) {
    c.err << "failing checks:";
    for (const auto& f : failing) c.err << " " << f;
    c.err << "\n";
    return kExitCheckFailed;
  }
  c.out << "all " << reports.size() << " reports pass\n";
  return kExitOk;
}

template <class T>
int mix_t(const Context& c) {
  const Generator<T> g(c.run.generator);
  const std::size_t cutoff = c.run.cutoff ? c.run.cutoff : c.run.generator.hybrid_cutoff;
  const auto grid = style_mix_grid(g, c.run.rows, c.run.cols, cutoff);
  write_png(c.path("mix.png"), compose_grid(grid));
  Json m;
  m["command"] = "mix";
  m["config_hash"] = hex64(config_hash(c.run.generator));
  m["cutoff"] = cutoff;
  m["rows"] = c.run.rows;
  m["cols"] = c.run.cols;
  m["file"] = "mix.png";
  write_text(c.path("manifest.json"), m.dump(2) + "\n");
  c.out << "wrote " << (c.run.rows.size() + 1) << "x" << (c.run.cols.size() + 1) << " mixing grid (cutoff "
        << cutoff << ") to " << c.path("mix.png") << "\n";
  return kExitOk;
}

int cmd_mix(const Context& c) {
  return c.run.precision == Precision::Single ? mix_t<float>(c) : mix_t<double>(c);
}

struct ToyOutcome {
  MomentDistances initial, final;
  bool finite = true;
  std::string error;
};

ToyOutcome train_toy(const Context& c, std::unique_ptr<ToyTrainer> trainer, std::size_t steps, std::size_t every,
                     const std::string& prefix) {
  ToyOutcome o;
  o.initial = trainer->evaluate();
  try {
    trainer->train(steps, every);
    o.final = trainer->metrics().back().distances;
  } catch (const NumericError& e) {
    o.finite = false;
    o.error = e.what();
  }
  write_text(c.path(prefix + "history.csv"), trainer->history_csv());
  write_text(c.path(prefix + "metrics.csv"), trainer->metrics_csv());
  if (o.finite) {
    trainer->save_checkpoint(c.path(prefix + "checkpoint.bin"));
    const auto s = trainer->samples(16);
    const auto side = trainer->config().data.side, ch = trainer->config().data.channels;
    std::vector<std::vector<FeatureMap<double>>> cells(4, std::vector<FeatureMap<double>>(4));
    for (std::size_t i = 0; i < 16; ++i) {
      FeatureMap<double> img(side, side, ch);
      std::copy(s.row(i).begin(), s.row(i).end(), img.data.begin());
      cells[i / 4][i % 4] = enlarge(img, std::max<std::size_t>(1, 32 / side));
    }
    write_png(c.path(prefix + "samples.png"), compose_grid(cells));
  }
  return o;
}

Json toy_json(const ToyOutcome& o, std::size_t steps) {
  Json j;
  j["steps"] = steps;
  j["finite"] = o.finite;
  j["initial"] = distances_json(o.initial);
  if (o.finite) {
    j["final"] = distances_json(o.final);
    j["channel_mean_shrink"] = 1.0 - o.final.channel_mean / o.initial.channel_mean;
    j["mean_shrink"] = 1.0 - o.final.mean / o.initial.mean;
  } else {
    j["error"] = o.error;
  }
  return j;
}

int cmd_train_toy(const Context& c) {
  std::unique_ptr<ToyTrainer> trainer = c.run.resume.empty() ? std::make_unique<ToyTrainer>(c.run.train)
                                                              : ToyTrainer::load_checkpoint(c.run.resume);
  const auto o = train_toy(c, std::move(trainer), c.run.steps, c.run.metric_every, "");
  auto j = toy_json(o, c.run.steps);
  j["command"] = "train-toy";
  j["resumed_from"] = c.run.resume;
  write_text(c.path("train_summary.json"), j.dump(2) + "\n");
  if (!o.finite) {
    c.err << o.error << "\n";
    return kExitCheckFailed;
  }
  c.out << "trained " << c.run.steps << " steps; channel-mean distance " << o.initial.channel_mean << " -> "
        << o.final.channel_mean << "\n";
  return kExitOk;
}

int cmd_ablate(const Context& c) {
  const auto variant = AblationVariant::named(c.run.variant);
  GeneratorConfig with = c.run.generator, base = c.run.generator;
  with.variant = variant;
  base.variant = AblationVariant{};
  with.validate();

  EncoderGradientParams gp;
  gp.variant = variant;
  gp.check.probes_per_group = c.run.quick ? 4 : 16;
  gp.check.seed = c.run.seed;
  auto grad = gradient_check_encoder(gp);
  grad.check = "gradients." + c.run.variant;
  bool pass = true;
  std::vector<std::string> failing;
  const auto reports = write_reports(c, {grad}, pass, failing);

  TrainConfig tc = c.run.train;
  tc.generator.variant = variant;
  const std::size_t steps = c.run.quick ? 50 : c.run.steps;
  const auto o = train_toy(c, std::make_unique<ToyTrainer>(tc), steps, c.run.metric_every, "toy_");
  pass = pass && o.finite;

  Json j;
  j["command"] = "ablate";
  j["variant"] = c.run.variant;
  j["variant_config"] = detail::to_json_value(variant);
  j["config_hash"] = hex64(config_hash(with));
  j["default_config_hash"] = hex64(config_hash(base));
  j["matches_default"] = config_hash(with) == config_hash(base);
  j["reports"] = reports;
  j["toy"] = toy_json(o, steps);
  j["pass"] = pass;
  write_text(c.path("ablate.json"), j.dump(2) + "\n");
  c.out << "variant " << c.run.variant << ": config " << hex64(config_hash(with))
        << (config_hash(with) == config_hash(base) ? " (default build)" : "") << ", gradients "
        << (grad.pass() ? "pass" : "FAIL") << ", toy " << (o.finite ? "finite" : "NaN") << "\n";
  if (!o.finite) c.err << o.error << "\n";
  return pass ? kExitOk : kExitCheckFailed;
}

int cmd_bench(const Context& c) {
  BenchParams p;
  p.measure = !c.run.quick;
  p.seed = c.run.seed;
  const auto r = bench_attention(p);
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,k,full_flops,linformer_flops,full_map_elements,linformer_map_elements,full_seconds,"
         "linformer_seconds\n";
  auto info = [&](const std::string& key) {
    for (const auto& [k, v] : r.informational)
      if (k == key) return std::to_string(v);
    return std::string();
  };
  for (std::size_t n : p.n_list) {
    const std::string t = "n" + std::to_string(n) + ".";
    csv << n << ',' << p.linformer_k << ',' << r.measured_value(t + "full.flops") << ','
        << r.measured_value(t + "linformer.flops") << ',' << r.measured_value(t + "full.map_elements") << ','
        << r.measured_value(t + "linformer.map_elements") << ',' << info(t + "full.seconds") << ','
        << info(t + "linformer.seconds") << '\n';
  }
  write_text(c.path("bench.csv"), csv.str());
  bool pass = true;
  std::vector<std::string> failing;
  write_reports(c, {r}, pass, failing);
  return pass ? kExitOk : kExitCheckFailed;
}

int cmd_spectrum(const Context& c) {
  if (c.run.latents == 0) throw ConfigError("spectrum: latents must be positive");
  const Generator<double> g(c.run.generator);
  SpectrumCurve avg;
  const auto r = check_spectrum(g, {c.run.latents, c.run.stage, c.run.seed}, &avg);
  write_text(c.path("spectrum.csv"), avg.to_csv());
  bool pass = true;
  std::vector<std::string> failing;
  write_reports(c, {r}, pass, failing);
  return pass ? kExitOk : kExitCheckFailed;
}

template <class T>
int attn_dump_t(const Context& c) {
  const Generator<T> g(c.run.generator);
  RngStream r(c.run.seed, "z");
  const auto ex = g.export_attention(g.sample_latent(r));
  fs::create_directories(c.dir / "attn");
  Json maps = Json::array(), skipped = Json::array();
  for (std::size_t b = 0; b < ex.blocks.size(); ++b) {
    const auto& blk = ex.blocks[b];
    if (blk.linformer) {
      skipped.push_back({{"stage", blk.stage}, {"block", blk.block}, {"reason", "linformer projection"}});
      continue;
    }
    const std::size_t side = blk.resolution, n = side * side;
    const std::size_t query = c.run.query < 0 ? (side / 2) * side + side / 2 : static_cast<std::size_t>(c.run.query);
    if (query >= n) {
      throw ConfigError("attn-dump: query pixel " + std::to_string(query) + " outside a " + std::to_string(side) +
                        "x" + std::to_string(side) + " block");
    }
    for (std::size_t h = 0; h < blk.maps.head_count(); ++h) {
      double sum = 0;
      const auto heat = heatmap_image(ex.heatmap(b, h, query).template cast<double>(), &sum);
      const std::string file = "attn/s" + std::to_string(blk.stage) + "_b" + std::to_string(blk.block) + "_h" +
                               std::to_string(h) + ".png";
      write_png(c.path(file), enlarge(heat, std::max<std::size_t>(1, 128 / side)));
      maps.push_back({{"stage", blk.stage}, {"block", blk.block}, {"head", h}, {"resolution", side},
                      {"query", query}, {"sum", sum}, {"file", file}});
    }
  }
  if (maps.empty()) throw ConfigError("attn-dump: every block uses the Linformer projection; no pixel heatmaps");
  Json j;
  j["command"] = "attn-dump";
  j["config_hash"] = hex64(config_hash(c.run.generator));
  j["maps"] = maps;
  j["skipped"] = skipped;
  write_text(c.path("attn_dump.json"), j.dump(2) + "\n");
  c.out << "wrote " << maps.size() << " heatmaps to " << (c.dir / "attn").string() << "\n";
  return kExitOk;
}

int cmd_attn_dump(const Context& c) {
  return c.run.precision == Precision::Single ? attn_dump_t<float>(c) : attn_dump_t<double>(c);
}

const std::vector<std::pair<std::string, std::function<int(const Context&)>>>& commands() {
  static const std::vector<std::pair<std::string, std::function<int(const Context&)>>> table{
      {"generate", cmd_generate}, {"verify", cmd_verify},   {"mix", cmd_mix},
      {"ablate", cmd_ablate},     {"bench", cmd_bench},     {"train-toy", cmd_train_toy},
      {"spectrum", cmd_spectrum}, {"attn-dump", cmd_attn_dump}};
  return table;
}

}  // namespace

int execute(const RunConfig& run, std::ostream& out, std::ostream& err) {
  try {
    const auto& table = commands();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == run.command; });
    if (it == table.end()) throw ConfigError("unknown command '" + run.command + "'");
    run.generator.validate();
    run.train.validate();
    const fs::path dir(run.out);
    fs::create_directories(dir);
    write_text((dir / "run_config.json").string(), run.to_json() + "\n");
    return it->second(Context{run, dir, out, err});
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ShapeError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

// ---------------------------------------------------------------- argument parsing

namespace {

struct Flags {
  std::optional<std::string> config, preset, out, precision, checks, variant, resume, rows, cols;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count, cutoff, steps, metric_every, latents, stage;
  std::optional<long long> query;
  bool quick = false, disable_demod = false, raw = false;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s, const char* what) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      if (item.find('-') != std::string::npos) throw std::invalid_argument("negative");
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + item + "' is not an unsigned seed");
    }
  }
  return out;
}

RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig run;
  run.command = command;
  if (command == "train-toy") run.steps = 2000;
  if (f.config) {
    const std::string text = read_text(*f.config);
    const Json j = detail::parse_json(text, f.config->c_str());
    if (j.is_object() && j.contains("command")) {
      run = RunConfig::from_json(text);
      if (run.command != command) {
        throw ConfigError("config file is a '" + run.command + "' run, not '" + command + "'");
      }
    } else if (command == "train-toy") {
      run.train = TrainConfig::from_json(text);
    } else {
      run.generator = generator_config_from_json(text);
    }
  }
  if (f.preset) {
    const auto& names = GeneratorConfig::preset_names();
    if (std::find(names.begin(), names.end(), *f.preset) == names.end()) {
      throw ConfigError("unknown preset '" + *f.preset + "'");
    }
    const auto p = GeneratorConfig::preset_config(*f.preset);
    if (command == "train-toy") {
      run.train.generator = p;
      run.train.data.side = p.target_resolution;
      run.train.data.channels = p.rgb_channels;
    } else {
      run.generator = p;
    }
  }
  if (f.seed) run.seed = *f.seed;
  if (f.out) run.out = *f.out;
  if (f.precision) run.precision = parse_precision(*f.precision);
  if (f.checks) run.checks = split_list(*f.checks);
  if (f.variant) run.variant = *f.variant;
  if (f.resume) run.resume = *f.resume;
  if (f.rows) run.rows = parse_seeds(*f.rows, "--rows");
  if (f.cols) run.cols = parse_seeds(*f.cols, "--cols");
  if (f.count) run.count = *f.count;
  if (f.cutoff) run.cutoff = *f.cutoff;
  if (f.steps) run.steps = *f.steps;
  if (f.metric_every) run.metric_every = *f.metric_every;
  if (f.latents) run.latents = *f.latents;
  if (f.stage) run.stage = *f.stage;
  if (f.query) run.query = *f.query;
  if (f.quick) run.quick = true;
  if (f.disable_demod) run.disable_demod = true;
  if (f.raw) run.raw = true;
  run.propagate_seed();
  return run;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Styleformer generator, verification harness and toy trainer", "styleformer-cli"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "RunConfig, generator config or (train-toy) training config JSON");
  app.add_option("--seed", f.seed, "single source of randomness");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--precision", f.precision, "single|double");
  app.add_option("--preset", f.preset, "generator preset name");

  auto* gen = app.add_subcommand("generate", "synthesize images from random latents");
  gen->add_option("--count", f.count, "number of images");
  gen->add_flag("--raw", f.raw, "also write float64 raw dumps");

  auto* ver = app.add_subcommand("verify", "run verification checks");
  ver->add_option("--checks", f.checks, "comma-separated check names or 'all'");
  ver->add_flag("--quick", f.quick, "reduced sample sizes");
  ver->add_flag("--disable-demod", f.disable_demod, "negative control: turn demodulation off in the std and "
                                                    "concentration checks");

  auto* mix = app.add_subcommand("mix", "style-mixing grid");
  mix->add_option("--rows", f.rows, "comma-separated row latent seeds");
  mix->add_option("--cols", f.cols, "comma-separated column latent seeds");
  mix->add_option("--cutoff", f.cutoff, "highest resolution taking row styles");

  auto* abl = app.add_subcommand("ablate", "gradient check and toy training of one ablation variant");
  abl->add_option("--variant", f.variant, "variant name");
  abl->add_option("--steps", f.steps, "toy training steps");
  abl->add_flag("--quick", f.quick, "fewer probes and 50 training steps");

  auto* bench = app.add_subcommand("bench", "attention cost model, full vs Linformer");
  bench->add_flag("--quick", f.quick, "analytic counts only");

  auto* toy = app.add_subcommand("train-toy", "adversarial training on synthetic blob images");
  toy->add_option("--steps", f.steps, "training steps");
  toy->add_option("--metric-every", f.metric_every, "metric interval (0 = end only)");
  toy->add_option("--resume", f.resume, "checkpoint to continue from");

  auto* spec = app.add_subcommand("spectrum", "cumulative singular-value curves of attention maps");
  spec->add_option("--latents", f.latents, "number of latents");
  spec->add_option("--stage", f.stage, "stage index");

  auto* attn = app.add_subcommand("attn-dump", "per-head attention heatmaps for one query pixel");
  attn->add_option("--query", f.query, "query pixel index (-1 = centre)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  RunConfig run;
  try {
    run = resolve(command, f);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return execute(run, out, err);
}

}  // namespace styleformer
