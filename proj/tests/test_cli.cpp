#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "styleformer/cli.hpp"
#include "styleformer/config_io.hpp"
#include "styleformer/report_io.hpp"

using namespace styleformer;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("styleformer_cli_" + name);
  fs::remove_all(p);
  return p;
}

json load(const fs::path& p) { return json::parse(read_text(p.string())); }

FeatureMap<double> ramp(std::size_t h, std::size_t w, std::size_t c) {
  FeatureMap<double> m(h, w, c);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = -1.0 + 2.0 * i / (m.data.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("8-bit conversion maps [-1, 1] onto [0, 255] with clamping") {
  FeatureMap<double> m(1, 4, 1);
  m.data = {-1.0, 0.0, 1.0, 3.0};
  const auto rgb = to_rgb8(m);
  REQUIRE(rgb.size() == 12);
  CHECK(rgb[0] == 0);
  CHECK(rgb[3] == 128);  // 127.5 rounds half up
  CHECK(rgb[6] == 255);
  CHECK(rgb[9] == 255);
  CHECK(rgb[4] == rgb[3]);  // grey replicated
  CHECK_THROWS_AS(to_rgb8(FeatureMap<double>(2, 2, 2)), ShapeError);
}

TEST_CASE("PNG and raw dumps round trip") {
  const auto dir = scratch("io");
  fs::create_directories(dir);
  const auto img = ramp(5, 7, 3);
  write_png((dir / "a.png").string(), img);
  const auto back = read_png((dir / "a.png").string());
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == to_rgb8(img));

  write_raw((dir / "a.raw").string(), img);
  const auto raw = read_raw((dir / "a.raw").string());
  CHECK(raw.height == 5);
  CHECK(raw.width == 7);
  CHECK(raw.channels == 3);
  CHECK(raw.data == img.data);
  CHECK(fs::file_size(dir / "a.raw") == 8 + 24 + 5 * 7 * 3 * 8);
  write_text((dir / "bad.raw").string(), "nope");
  CHECK_THROWS_AS(read_raw((dir / "bad.raw").string()), ConfigError);
  CHECK_THROWS_AS(read_png((dir / "bad.raw").string()), ConfigError);
}

TEST_CASE("grid composition places cells with background padding") {
  std::vector<std::vector<FeatureMap<double>>> cells(2, std::vector<FeatureMap<double>>(3));
  cells[0][1] = FeatureMap<double>(2, 2, 1, 0.5);
  cells[1][2] = FeatureMap<double>(2, 2, 1, 0.25);
  const auto g = compose_grid(cells, 1);
  CHECK(g.height == 1 + 2 * 3);
  CHECK(g.width == 1 + 3 * 3);
  CHECK(g(0, 0, 0) == -1.0);
  CHECK(g(1, 4, 0) == 0.5);
  CHECK(g(4, 7, 0) == 0.25);
  CHECK(g(1, 1, 0) == -1.0);  // empty cell stays background
  cells[1][0] = FeatureMap<double>(3, 2, 1);
  CHECK_THROWS_AS(compose_grid(cells), ShapeError);
}

TEST_CASE("heatmaps require a normalized map") {
  Tensor<double> m(2, 2, 0.25);
  double sum = 0;
  const auto img = heatmap_image(m, &sum);
  CHECK(sum == doctest::Approx(1.0));
  CHECK(img.channels == 3);
  CHECK(img(0, 0, 0) == 1.0);  // every entry is the peak -> white
  m(0, 0) = 0.3;
  CHECK_THROWS_AS(heatmap_image(m), NumericError);
}

TEST_CASE("run config JSON round trip") {
  RunConfig r;
  r.command = "mix";
  r.seed = 9;
  r.rows = {7, 8};
  r.cutoff = 16;
  r.precision = Precision::Single;
  r.query = 12;
  r.train.batch = 4;
  r.propagate_seed();
  const auto back = RunConfig::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.generator.seed == 9);
  CHECK(back.train.seed == 9);
  CHECK_THROWS_AS(RunConfig::from_json("{\"seed\": 1}"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json("{\"command\": \"mix\", \"bogus\": 1}"), ConfigError);
}

TEST_CASE("generate: PNGs, manifest and byte-identical reruns from the persisted config") {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  auto r = cli({"generate", "--preset", "toy", "--seed", "7", "--count", "3", "--raw", "--out", a.string()});
  REQUIRE(r.code == kExitOk);
  const auto m = load(a / "manifest.json");
  CHECK(m["images"].size() == 3);
  CHECK(m["config_hash"] == hex64(config_hash([] {
          auto c = GeneratorConfig::preset_config("toy");
          c.seed = 7;
          return c;
        }())));
  CHECK(m["images"][1]["latent_seed"].get<std::uint64_t>() == image_seed(7, 1));
  const auto png = read_png((a / "img_0002.png").string());
  CHECK(png.width == 8);
  CHECK(png.height == 8);
  CHECK(png.pixels == to_rgb8(read_raw((a / "img_0002.raw").string())));

  r = cli({"generate", "--config", (a / "run_config.json").string(), "--out", b.string()});
  REQUIRE(r.code == kExitOk);
  for (const char* f : {"img_0000.png", "img_0001.png", "img_0002.png", "img_0002.raw", "manifest.json"}) {
    CHECK_MESSAGE(read_text((a / f).string()) == read_text((b / f).string()), f);
  }
  // Different seed, different pixels.
  const auto c = scratch("gen_c");
  REQUIRE(cli({"generate", "--preset", "toy", "--seed", "8", "--count", "1", "--out", c.string()}).code == kExitOk);
  CHECK(read_text((a / "img_0000.png").string()) != read_text((c / "img_0000.png").string()));
}

TEST_CASE("generate: preset output sizes, both precisions") {
  struct Case {
    const char* preset;
    std::size_t side;
    const char* precision;
  };
  for (const auto& k : {Case{"celeba", 64, "double"}, Case{"clevr-c", 256, "single"}, Case{"cifar10", 32, "single"}}) {
    const auto dir = scratch(std::string("size_") + k.preset);
    const auto r = cli({"generate", "--preset", k.preset, "--count", "1", "--precision", k.precision, "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    const auto png = read_png((dir / "img_0000.png").string());
    CHECK(png.width == k.side);
    CHECK(png.height == k.side);
  }
}

TEST_CASE("configuration errors exit with code 2") {
  const auto dir = scratch("errors");
  CHECK(cli({}).code == kExitConfigError);
  CHECK(cli({"frobnicate"}).code == kExitConfigError);
  CHECK(cli({"generate", "--preset", "nope", "--out", dir.string()}).code == kExitConfigError);
  CHECK(cli({"generate", "--precision", "half", "--out", dir.string()}).code == kExitConfigError);
  CHECK(cli({"generate", "--config", (dir / "missing.json").string()}).code == kExitConfigError);
  CHECK(cli({"generate", "--count", "0", "--preset", "toy", "--out", dir.string()}).code == kExitConfigError);
  fs::create_directories(dir);
  write_text((dir / "bad.json").string(), "{\"preset\": \"toy\", \"layers\": [1, 1, 1]}");
  CHECK(cli({"generate", "--config", (dir / "bad.json").string(), "--out", dir.string()}).code == kExitConfigError);
  write_text((dir / "other.json").string(), "{\"command\": \"mix\"}");
  CHECK(cli({"generate", "--config", (dir / "other.json").string(), "--out", dir.string()}).code == kExitConfigError);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("verify: empty or unknown selections are configuration errors") {
  const auto dir = scratch("verify_sel");
  auto r = cli({"verify", "--checks", "", "--out", dir.string()});
  CHECK(r.code == kExitConfigError);
  CHECK(r.err.find("no checks selected") != std::string::npos);
  r = cli({"verify", "--checks", "bogus", "--out", dir.string()});
  CHECK(r.code == kExitConfigError);
}

TEST_CASE("verify: selected checks pass and write reports") {
  const auto dir = scratch("verify_ok");
  const auto r = cli({"verify", "--checks", "modulation_algebra,associativity,qkv_std,encoder_output_std,concentration",
                      "--quick", "--out", dir.string()});
  CHECK_MESSAGE(r.code == kExitOk, r.err);
  const auto s = load(dir / "summary.json");
  CHECK(s["pass"] == true);
  CHECK(s["checks"].size() == 5);
  CHECK(fs::exists(dir / "reports" / "concentration.json"));
  CHECK(load(dir / "reports" / "qkv_demod_std.json")["verdict"] == "pass");
}

TEST_CASE("verify: disabling demodulation makes the std and concentration checks fail") {
  const auto dir = scratch("verify_neg");
  const auto r = cli({"verify", "--checks", "qkv_std,encoder_output_std,concentration", "--quick", "--disable-demod",
                      "--out", dir.string()});
  CHECK(r.code == kExitCheckFailed);
  const auto s = load(dir / "summary.json");
  CHECK(s["pass"] == false);
  CHECK(s["failing"].size() == 3);
  CHECK(r.err.find("failing checks") != std::string::npos);
}

TEST_CASE("mix: diagonal equals the axis images; top cutoff keeps row images") {
  auto cfg = GeneratorConfig::preset_config("toy");
  cfg.seed = 3;
  const Generator<double> g(cfg);
  const std::vector<std::uint64_t> seeds{11, 12, 13};
  const auto grid = style_mix_grid(g, seeds, seeds, 4);
  REQUIRE(grid.size() == 4);
  REQUIRE(grid[0].size() == 4);
  CHECK(grid[0][0].data.empty());
  for (std::size_t i = 1; i <= 3; ++i) {
    CHECK(grid[i][i].data == grid[i][0].data);
    CHECK(grid[i][i].data == grid[0][i].data);
  }
  CHECK_FALSE(grid[1][2].data == grid[1][0].data);

  const auto top = style_mix_grid(g, {1, 2}, {3, 4, 5}, 8);
  for (std::size_t i = 1; i <= 2; ++i)
    for (std::size_t j = 1; j <= 3; ++j) CHECK(top[i][j].data == top[i][0].data);

  CHECK_THROWS_AS(style_mix_grid(g, {1}, {2}, 5), ConfigError);
  CHECK_THROWS_AS(style_mix_grid(g, {}, {2}, 4), ConfigError);

  const auto dir = scratch("mix");
  const auto r = cli({"mix", "--preset", "toy", "--rows", "1,2,3", "--cols", "4,5,6", "--cutoff", "4", "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  const auto png = read_png((dir / "mix.png").string());
  CHECK(png.width == 2 + 4 * (8 + 2));
  CHECK(cli({"mix", "--preset", "toy", "--cutoff", "32", "--out", dir.string()}).code == kExitConfigError);
  CHECK(cli({"mix", "--preset", "toy", "--rows", "1,x", "--out", dir.string()}).code == kExitConfigError);
}

TEST_CASE("ablate: baseline hashes equal the default build; unknown variants are rejected") {
  const auto dir = scratch("ablate");
  auto r = cli({"ablate", "--variant", "baseline", "--quick", "--preset", "toy", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto j = load(dir / "ablate.json");
  CHECK(j["matches_default"] == true);
  CHECK(j["config_hash"] == j["default_config_hash"]);
  CHECK(j["toy"]["finite"] == true);
  CHECK(fs::exists(dir / "toy_checkpoint.bin"));

  const auto d2 = scratch("ablate_b");
  r = cli({"ablate", "--variant", "style-value-only", "--quick", "--preset", "toy", "--out", d2.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(load(d2 / "ablate.json")["matches_default"] == false);
  CHECK(cli({"ablate", "--variant", "nope", "--out", d2.string()}).code == kExitConfigError);
}

TEST_CASE("bench: CSV with full and Linformer columns") {
  const auto dir = scratch("bench");
  REQUIRE(cli({"bench", "--quick", "--out", dir.string()}).code == kExitOk);
  std::istringstream csv(read_text((dir / "bench.csv").string()));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "n,k,full_flops,linformer_flops,full_map_elements,linformer_map_elements,full_seconds,linformer_seconds");
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].rfind("1024,256,", 0) == 0);
  CHECK(rows[1].find(",1048576,262144,") != std::string::npos);
}

TEST_CASE("spectrum: curve CSV ends at one") {
  const auto dir = scratch("spectrum");
  REQUIRE(cli({"spectrum", "--preset", "toy", "--stage", "1", "--latents", "2", "--out", dir.string()}).code == kExitOk);
  std::istringstream csv(read_text((dir / "spectrum.csv").string()));
  std::string line, last;
  std::getline(csv, line);
  CHECK(line == "index,value");
  while (std::getline(csv, line)) last = line;
  const double end = std::stod(last.substr(last.find(',') + 1));
  CHECK(std::abs(end - 1.0) <= 1e-9);
}

TEST_CASE("attn-dump: heatmaps renormalize to one and Linformer blocks are skipped") {
  const auto dir = scratch("attn");
  REQUIRE(cli({"attn-dump", "--preset", "toy", "--out", dir.string()}).code == kExitOk);
  const auto j = load(dir / "attn_dump.json");
  REQUIRE(j["maps"].size() == 2);
  for (const auto& m : j["maps"]) {
    CHECK(std::abs(m["sum"].get<double>() - 1.0) <= 1e-6);
    CHECK(fs::exists(dir / m["file"].get<std::string>()));
  }
  CHECK(cli({"attn-dump", "--preset", "toy", "--query", "64", "--out", dir.string()}).code == kExitConfigError);

  // Force every block onto the Linformer path: nothing left to draw.
  const auto d2 = scratch("attn_l");
  fs::create_directories(d2);
  auto c = GeneratorConfig::preset_config("toy");
  c.mode = GeneratorMode::StyleformerL;
  c.linformer_min_pixels = 16;
  c.linformer_k = 8;
  write_text((d2 / "g.json").string(), generator_config_to_json(c));
  CHECK(cli({"attn-dump", "--config", (d2 / "g.json").string(), "--out", d2.string()}).code == kExitConfigError);
}

TEST_CASE("train-toy: outputs, resume and reproducibility") {
  const auto a = scratch("toy_a"), b = scratch("toy_b");
  auto r = cli({"train-toy", "--steps", "6", "--metric-every", "3", "--seed", "2", "--out", a.string()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (const char* f : {"history.csv", "metrics.csv", "checkpoint.bin", "samples.png", "train_summary.json"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
  r = cli({"train-toy", "--config", (a / "run_config.json").string(), "--out", b.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_text((a / "history.csv").string()) == read_text((b / "history.csv").string()));
  CHECK(read_text((a / "checkpoint.bin").string()) == read_text((b / "checkpoint.bin").string()));

  // 3 + 3 resumed steps equal 6 straight steps.
  const auto c = scratch("toy_c"), d = scratch("toy_d");
  REQUIRE(cli({"train-toy", "--steps", "3", "--metric-every", "0", "--seed", "2", "--out", c.string()}).code == kExitOk);
  REQUIRE(cli({"train-toy", "--steps", "3", "--metric-every", "0", "--resume", (c / "checkpoint.bin").string(),
               "--out", d.string()})
              .code == kExitOk);
  CHECK(read_text((d / "history.csv").string()) == read_text((a / "history.csv").string()));

  // A training config file (not a run config) is accepted too.
  const auto e = scratch("toy_e");
  fs::create_directories(e);
  TrainConfig t;
  t.batch = 4;
  write_text((e / "t.json").string(), t.to_json());
  REQUIRE(cli({"train-toy", "--config", (e / "t.json").string(), "--steps", "2", "--out", e.string()}).code == kExitOk);
  CHECK(load(e / "run_config.json")["train"]["batch"] == 4);
}
