#include "dsct/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "dsct/errors.hpp"

namespace dsct {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw IngestionError(path.string() + ": " + what);
}

// Skips whitespace and '#' comments between PPM header fields.
std::size_t read_header_number(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    }
    c = in.get();
  }
  if (!in || !std::isdigit(c)) fail(path, "malformed PPM header");
  std::size_t value = 0;
  while (in && std::isdigit(c)) {
    value = value * 10 + static_cast<std::size_t>(c - '0');
    if (value > (1u << 24)) fail(path, "PPM header value out of range");
    c = in.get();
  }
  // Exactly one whitespace byte separates the header from the pixels.
  if (!in || !std::isspace(c)) fail(path, "malformed PPM header");
  return value;
}

Image8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') fail(path, "not a binary PPM (P6)");
  Image8 img;
  img.width = read_header_number(in, path);
  img.height = read_header_number(in, path);
  const std::size_t maxval = read_header_number(in, path);
  if (img.width == 0 || img.height == 0) fail(path, "zero image extent");
  if (maxval != 255) fail(path, "only 8-bit PPM (maxval 255) is supported");
  img.rgb.resize(img.width * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) fail(path, "truncated pixel data");
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

Image8 read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(path, std::string("PNG read failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image8 img;
  img.width = image.width;
  img.height = image.height;
  img.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(path, "PNG decode failed: " + message);
  }
  return img;
}

}  // namespace

Image8 read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  const auto got = static_cast<std::size_t>(in.gcount());
  in.close();
  if (got >= 2 && sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  fail(path, "unrecognized image format (expected PPM P6 or PNG)");
}

void write_ppm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IngestionError(path.string() + ": write failed");
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw IngestionError(path.string() + ": PNG write failed: " + png.message);
  }
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    write_png(path, image);
  } else {
    write_ppm(path, image);
  }
}

Tensor<float> image_to_tensor(const Image8& image) {
  const std::size_t plane = image.width * image.height;
  Tensor<float> t(Shape{3, image.height, image.width});
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      t[c * plane + p] = static_cast<float>(image.rgb[p * 3 + c]) / 255.0f;
    }
  }
  return t;
}

Image8 tensor_to_image(const Tensor<float>& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) {
    throw DimensionError("tensor_to_image: expected [3,H,W], got " + shape_str(frame.shape()));
  }
  Image8 img;
  img.height = frame.dim(1);
  img.width = frame.dim(2);
  const std::size_t plane = img.width * img.height;
  img.rgb.resize(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float raw = frame[c * plane + p];
      if (std::isnan(raw)) throw NumericError("tensor_to_image: NaN pixel");
      const float v = std::clamp(raw, 0.0f, 1.0f);
      // nearbyint honours the default round-to-nearest-even mode.
      img.rgb[p * 3 + c] = static_cast<std::uint8_t>(std::nearbyint(v * 255.0f));
    }
  }
  return img;
}

}  // namespace dsct
