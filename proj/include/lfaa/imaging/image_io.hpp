#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/imaging/image.hpp"

namespace lfaa {

namespace detail {

inline std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

inline ImageTensor from_bytes(const std::vector<std::uint8_t>& bytes, ImageShape shape) {
  ImageArray arr(shape);
  for (std::size_t i = 0; i < bytes.size(); ++i) arr[i] = bytes[i] / 255.0;
  return ImageTensor(std::move(arr));
}

inline std::vector<std::uint8_t> to_bytes(const ImageArray& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = std::clamp(img[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

inline ImageTensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot decode image " + path.string() + ": " + image.message);
  // Grey stays 1 channel; anything with colour is decoded as RGB (alpha dropped).
  const bool grey = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = grey ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode image " + path.string() + ": " + msg);
  }
  return from_bytes(buf, {static_cast<int>(image.height), static_cast<int>(image.width), grey ? 1 : 3});
}

inline void write_png(const std::filesystem::path& path, const ImageArray& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw ShapeError("png export supports 1 or 3 channels, got " + std::to_string(img.channels()));
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  auto bytes = to_bytes(img);
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw IoError("cannot write image " + path.string() + ": " + image.message);
}

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

inline ImageTensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw IoError("cannot decode image " + path.string() + ": only binary P5/P6 supported");
  int w = 0, h = 0, maxval = 0;
  skip_pnm_space(in);
  in >> w;
  skip_pnm_space(in);
  in >> h;
  skip_pnm_space(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("cannot decode image " + path.string() + ": bad header (8-bit maxval required)");
  const int c = magic == "P5" ? 1 : 3;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw IoError("cannot decode image " + path.string() + ": truncated pixel data");
  return from_bytes(buf, {h, w, c});
}

inline void write_pnm(const std::filesystem::path& path, const ImageArray& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw ShapeError("pnm export supports 1 or 3 channels, got " + std::to_string(img.channels()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write image " + path.string());
}

}  // namespace detail

/// True for extensions read_image understands.
inline bool is_image_file(const std::filesystem::path& path) {
  const auto ext = detail::lower_ext(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

/// Decodes an 8-bit PNG or binary PPM/PGM; value v maps to v/255.
inline ImageTensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  const auto ext = detail::lower_ext(path);
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::read_pnm(path);
  throw IoError("unsupported image format: " + path.string());
}

/// Quantizes to 8 bits (values clamped to [0,1] first) and writes by extension.
inline void write_image(const std::filesystem::path& path, const ImageArray& img) {
  const auto ext = detail::lower_ext(path);
  if (ext == ".png") return detail::write_png(path, img);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::write_pnm(path, img);
  throw IoError("unsupported image format: " + path.string());
}

}  // namespace lfaa
