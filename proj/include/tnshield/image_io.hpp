#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "tnshield/error.hpp"
#include "tnshield/tensor.hpp"

// Images are H x W (grayscale) or H x W x 3 (color) tensors with channel
// values in [0, 255].

namespace tnshield {

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

inline DenseTensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(ErrorCode::DecodeError, path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::DecodeError, path.string() + ": " + msg);
  }
  Shape shape{image.height, image.width};
  if (color) shape.push_back(3);
  return DenseTensor(shape, std::vector<double>(buffer.begin(), buffer.end()));
}

inline void write_png(const std::filesystem::path& path, const DenseTensor& t) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.height = static_cast<png_uint_32>(t.dim(0));
  image.width = static_cast<png_uint_32>(t.dim(1));
  image.format = t.order() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) buffer[i] = to_byte(t[i]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
    fail(ErrorCode::IoError, path.string() + ": " + image.message);
}

inline std::string next_pnm_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

inline DenseTensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  const std::string magic = next_pnm_token(in);
  if (magic != "P5" && magic != "P6") fail(ErrorCode::DecodeError, path.string() + ": only binary PGM/PPM (P5/P6) is supported");
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(next_pnm_token(in));
    height = std::stoul(next_pnm_token(in));
    maxval = std::stoul(next_pnm_token(in));
  } catch (const std::exception&) {
    fail(ErrorCode::DecodeError, path.string() + ": malformed header");
  }
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) fail(ErrorCode::DecodeError, path.string() + ": bad header values");
  const std::size_t channels = magic == "P6" ? 3 : 1;
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t count = width * height * channels;
  std::vector<unsigned char> raw(count * sample_bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(ErrorCode::DecodeError, path.string() + ": truncated pixel data");
  std::vector<double> data(count);
  const double scale = 255.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = sample_bytes == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    data[i] = maxval == 255 ? static_cast<double>(v) : static_cast<double>(v) * scale;
  }
  Shape shape{height, width};
  if (channels == 3) shape.push_back(3);
  return DenseTensor(shape, std::move(data));
}

inline void write_pnm(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << (t.order() == 3 ? "P6" : "P5") << "\n" << t.dim(1) << " " << t.dim(0) << "\n255\n";
  std::vector<char> bytes(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) bytes[i] = static_cast<char>(to_byte(t[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

inline void check_image_shape(const DenseTensor& t) {
  if (!(t.order() == 2 || (t.order() == 3 && t.dim(2) == 3)))
    fail(ErrorCode::ShapeMismatch, "images must be H x W or H x W x 3, got " + shape_string(t.shape()));
}

}  // namespace detail

/// Reads PNG (any bit depth or color type) or binary PGM/PPM.
inline DenseTensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "no such file: " + path.string());
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::read_pnm(path);
  fail(ErrorCode::DecodeError, path.string() + ": unsupported image type (use PNG or binary PPM)");
}

/// Writes PNG or binary PGM/PPM by extension; values are rounded and clamped to [0, 255].
inline void write_image(const std::filesystem::path& path, const DenseTensor& image) {
  detail::check_image_shape(image);
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return detail::write_png(path, image);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::write_pnm(path, image);
  fail(ErrorCode::InvalidArgument, path.string() + ": unsupported output type (use .png or .ppm)");
}

}  // namespace tnshield
