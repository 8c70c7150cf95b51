#include <png.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>

#include "flowedit/errors.hpp"
#include "flowedit/image.hpp"

namespace flowedit {

namespace {

bool is_ppm(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" || ext == ".pnm";
}

std::string describe(const std::filesystem::path& path) { return "'" + path.string() + "'"; }

}  // namespace

Image read_image(const std::filesystem::path& path) { return is_ppm(path) ? read_ppm(path) : read_png(path); }

void write_image(const std::filesystem::path& path, const Image& image) {
  if (is_ppm(path)) write_ppm(path, image);
  else write_png(path, image);
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot read PNG " + describe(path) + ": " + png.message);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw IoError("unsupported PNG " + describe(path) + ": only 8-bit channels are supported, file has 16-bit samples");
  }
  png.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG " + describe(path) + ": " + msg);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width));
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = static_cast<float>(buffer[i * 4 + c]) / 255.0f;
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw IoError("refusing to write empty image to " + describe(path));
  std::vector<png_byte> buffer(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), to_u8);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + describe(path) + ": " + png.message);
  }
}

namespace {

// Reads the next whitespace-separated header token, skipping # comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + describe(path));
  if (ppm_token(in) != "P6") throw IoError("unsupported PPM " + describe(path) + ": expected binary P6");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ppm_token(in));
    h = std::stoi(ppm_token(in));
    maxval = std::stoi(ppm_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PPM header in " + describe(path));
  }
  if (w <= 0 || h <= 0) throw IoError("invalid PPM dimensions in " + describe(path));
  if (maxval != 255) throw IoError("unsupported PPM " + describe(path) + ": only maxval 255 is supported");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError("truncated PPM " + describe(path));
  Image img(h, w);
  std::transform(raw.begin(), raw.end(), img.pixels.begin(), [](unsigned char v) { return v / 255.0f; });
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + describe(path) + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raw.begin(), to_u8);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write failed for " + describe(path));
}

}  // namespace flowedit
