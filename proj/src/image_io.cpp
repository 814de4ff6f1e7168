#include "tl/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "tl/errors.hpp"

namespace tl {

namespace {

using File = std::unique_ptr<FILE, int (*)(FILE*)>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

// libpng reports errors by longjmp; the message is kept for the exception
// thrown after the jump lands.
thread_local std::string png_error_message;

void png_fail(png_structp png, png_const_charp msg) {
  png_error_message = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

Image read_png(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) throw IoError("png: " + png_error_message + " in " + path.string());
  png_init_io(png, f.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info), type = png_get_color_type(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != w * 3) throw IoError("png: unexpected row layout in " + path.string());

  img = Image(w, h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.rgb.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return img;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError("ppm: " + path.string() + " is not binary P6");
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    int64_t v = -1;
    in >> v;
    return v;
  };
  const int64_t w = next_int(), h = next_int(), maxval = next_int();
  if (!in || w < 1 || h < 1 || maxval < 1 || maxval > 255) throw IoError("ppm: bad header in " + path.string());
  in.get();
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw IoError("ppm: truncated " + path.string());
  if (maxval != 255)
    for (uint8_t& v : img.rgb) v = static_cast<uint8_t>(std::lround(v * 255.0 / static_cast<double>(maxval)));
  return img;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  unsigned char sig[8] = {};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.read(reinterpret_cast<char*>(sig), 8);
  }
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
  throw IoError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw IoError("png: " + png_error_message + " writing " + path.string());
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.rgb.data() + y * img.width * 3));
  png_write_end(png, nullptr);
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

Image center_crop_resize(const Image& img, int64_t size) {
  if (size < 1) throw ConfigError("crop size must be positive");
  const int64_t side = std::min(img.width, img.height);
  const int64_t x0 = (img.width - side) / 2, y0 = (img.height - side) / 2;
  Image out(size, size);
  // Box filter: output pixel (x, y) averages source cells overlapping its footprint.
  const double scale = static_cast<double>(side) / static_cast<double>(size);
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const double sy0 = y * scale, sy1 = (y + 1) * scale, sx0 = x * scale, sx1 = (x + 1) * scale;
      double acc[3] = {0, 0, 0}, wsum = 0;
      for (int64_t sy = static_cast<int64_t>(sy0); sy < std::min<int64_t>(side, static_cast<int64_t>(std::ceil(sy1))); ++sy)
        for (int64_t sx = static_cast<int64_t>(sx0); sx < std::min<int64_t>(side, static_cast<int64_t>(std::ceil(sx1))); ++sx) {
          const double wy = std::min<double>(sy + 1, sy1) - std::max<double>(sy, sy0);
          const double wx = std::min<double>(sx + 1, sx1) - std::max<double>(sx, sx0);
          const double wgt = wy * wx;
          if (wgt <= 0) continue;
          const uint8_t* p = img.pixel(x0 + sx, y0 + sy);
          for (int c = 0; c < 3; ++c) acc[c] += wgt * p[c];
          wsum += wgt;
        }
      uint8_t* q = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) q[c] = static_cast<uint8_t>(std::clamp(std::lround(acc[c] / wsum), 0L, 255L));
    }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  const int64_t H = img.height, W = img.width;
  std::vector<double> v(static_cast<std::size_t>(3 * H * W));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) v[(c * H + y) * W + x] = img.pixel(x, y)[c] / 127.5 - 1.0;
  return Tensor::from({3, H, W}, std::move(v));
}

Image tensor_to_image(const Tensor& t) {
  if (!((t.rank() == 3 && t.dim(0) == 3) || (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 3)))
    throw ShapeError("tensor_to_image: expected 3×H×W, got " + shape_str(t.shape()));
  const int64_t H = t.dim(-2), W = t.dim(-1);
  Image img(W, H);
  const auto d = t.data();
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        const double v = std::clamp(d[(c * H + y) * W + x], -1.0, 1.0);
        img.pixel(x, y)[c] = static_cast<uint8_t>(std::lround((v + 1.0) * 127.5));
      }
  return img;
}

}  // namespace tl
