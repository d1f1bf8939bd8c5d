#include "styleformer/report_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace styleformer {

namespace {

constexpr char kRawMagic[8] = {'S', 'F', 'R', 'A', 'W', '\0', '\0', '\1'};

std::uint64_t le64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
    return r;
  }
  return v;
}

// Errors surface as exceptions after the longjmp; keep libpng quiet.
void png_quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_quiet_warning(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

std::vector<std::uint8_t> to_rgb8(const FeatureMap<double>& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("to_rgb8: expected 1 or 3 channels, got " + std::to_string(image.channels));
  }
  const std::size_t pixels = image.height * image.width;
  std::vector<std::uint8_t> out(pixels * 3);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = image.data[p * image.channels + (image.channels == 1 ? 0 : c)];
      const double q = std::floor((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5 + 0.5);
      out[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
    }
  }
  return out;
}

void write_png(const std::string& path, const FeatureMap<double>& image) {
  if (image.height == 0 || image.width == 0) throw ShapeError("write_png: empty image");
  const auto rgb = to_rgb8(image);
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ConfigError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw NumericError("write_png: libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ConfigError("write_png: libpng failed writing " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + y * image.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Rgb8Image read_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ConfigError("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw NumericError("read_png: libpng initialisation failed");
  }
  Rgb8Image out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ConfigError("read_png: not a readable PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != out.width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ConfigError("read_png: unsupported pixel layout in " + path);
  }
  out.pixels.resize(out.width * out.height * 3);
  for (std::size_t y = 0; y < out.height; ++y) png_read_row(png, out.pixels.data() + y * out.width * 3, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_raw(const std::string& path, const FeatureMap<double>& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os.write(kRawMagic, sizeof kRawMagic);
  for (std::uint64_t v : {std::uint64_t(image.height), std::uint64_t(image.width), std::uint64_t(image.channels)}) {
    v = le64(v);
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
  for (double x : image.data) {
    const std::uint64_t v = le64(std::bit_cast<std::uint64_t>(x));
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
  if (!os) throw ConfigError("failed writing " + path);
}

FeatureMap<double> read_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kRawMagic, 8) != 0) throw ConfigError("bad raw dump magic: " + path);
  std::uint64_t dims[3];
  for (auto& d : dims) {
    if (!is.read(reinterpret_cast<char*>(&d), 8)) throw ConfigError("truncated raw dump: " + path);
    d = le64(d);
  }
  if (dims[0] * dims[1] * dims[2] > (std::uint64_t(1) << 32)) throw ConfigError("raw dump too large: " + path);
  FeatureMap<double> out(dims[0], dims[1], dims[2]);
  for (auto& x : out.data) {
    std::uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw ConfigError("truncated raw dump: " + path);
    x = std::bit_cast<double>(le64(v));
  }
  return out;
}

FeatureMap<double> compose_grid(const std::vector<std::vector<FeatureMap<double>>>& cells, std::size_t pad) {
  std::size_t rows = cells.size(), cols = 0, h = 0, w = 0, ch = 0;
  for (const auto& row : cells) {
    cols = std::max(cols, row.size());
    for (const auto& c : row) {
      if (c.data.empty()) continue;
      if (h == 0) {
        h = c.height;
        w = c.width;
        ch = c.channels;
      } else if (c.height != h || c.width != w || c.channels != ch) {
        throw ShapeError("compose_grid: cells differ in shape");
      }
    }
  }
  if (h == 0) throw ShapeError("compose_grid: no non-empty cells");
  FeatureMap<double> out(pad + rows * (h + pad), pad + cols * (w + pad), ch, -1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto& cell = cells[r][c];
      if (cell.data.empty()) continue;
      const std::size_t y0 = pad + r * (h + pad), x0 = pad + c * (w + pad);
      for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(cell.data.begin() + y * w * ch, w * ch,
                    out.data.begin() + ((y0 + y) * out.width + x0) * ch);
      }
    }
  }
  return out;
}

FeatureMap<double> heatmap_image(const Tensor<double>& map, double* sum) {
  double total = 0, peak = 0;
  for (double v : map.data()) {
    total += v;
    peak = std::max(peak, v);
  }
  if (!(std::abs(total - 1.0) <= 1e-6)) {
    throw NumericError("heatmap_image: map sums to " + std::to_string(total) + ", expected 1");
  }
  if (sum) *sum = total;
  FeatureMap<double> out(map.rows(), map.cols(), 3);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double t = peak > 0 ? map[i] / peak : 0.0;  // in [0, 1]
    const double rgb[3] = {std::clamp(3 * t, 0.0, 1.0), std::clamp(3 * t - 1, 0.0, 1.0),
                           std::clamp(3 * t - 2, 0.0, 1.0)};
    for (std::size_t c = 0; c < 3; ++c) out.data[i * 3 + c] = 2 * rgb[c] - 1;
  }
  return out;
}

FeatureMap<double> enlarge(const FeatureMap<double>& image, std::size_t factor) {
  if (factor == 0) throw ConfigError("enlarge: factor must be positive");
  FeatureMap<double> out(image.height * factor, image.width * factor, image.channels);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        out.data[(y * out.width + x) * image.channels + c] = image(y / factor, x / factor, c);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << text;
  if (!os) throw ConfigError("failed writing " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace styleformer
