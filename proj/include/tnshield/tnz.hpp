#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "tnshield/error.hpp"
#include "tnshield/network.hpp"
#include "tnshield/quantize.hpp"

// TNZ container, all integers little-endian:
//   "TNZ1" | version u8 | format u8 | order u32 | d x size u32 | ranks u32... | block count u32
//   per block: kind u8 | codebook | length u32 | length x code u8
//     uniform codebook: min f64, step f64
//     lloyd codebook:   count u16, count x level f64
//   CRC-32 of everything before it, u32

namespace tnshield {

inline constexpr std::array<std::uint8_t, 4> kTnzMagic{'T', 'N', 'Z', '1'};
inline constexpr std::uint8_t kTnzVersion = 1;

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { bytes_.reserve(reserve); }

  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f64(double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    put(bits, 8);
  }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  double f64() {
    const std::uint64_t bits = get(8);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail(ErrorCode::DecodeError, "unexpected end of data at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  constexpr std::size_t chunk = std::numeric_limits<uInt>::max();
  for (std::size_t off = 0; off < data.size(); off += chunk) {
    const std::size_t n = std::min(chunk, data.size() - off);
    crc = crc32(crc, data.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::InvalidArgument, std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const QuantizedNetwork& q) {
  const auto shapes = subtensor_shapes(q.layout);
  if (shapes.size() != q.blocks.size()) fail(ErrorCode::ShapeMismatch, "block count does not match the layout");

  detail::ByteWriter w(encoded_size(q));
  w.raw(kTnzMagic);
  w.u8(kTnzVersion);
  w.u8(static_cast<std::uint8_t>(q.layout.format));
  w.u32(detail::checked_u32(q.layout.shape.size(), "order"));
  for (auto n : q.layout.shape) w.u32(detail::checked_u32(n, "mode size"));
  for (auto r : q.layout.ranks) w.u32(detail::checked_u32(r, "rank"));
  w.u32(detail::checked_u32(q.blocks.size(), "block count"));
  for (std::size_t i = 0; i < q.blocks.size(); ++i) {
    const auto& b = q.blocks[i];
    if (b.codes.size() != element_count(shapes[i])) fail(ErrorCode::ShapeMismatch, "block length does not match its shape");
    w.u8(static_cast<std::uint8_t>(b.codebook.kind));
    if (b.codebook.kind == QuantKind::Uniform) {
      w.f64(b.codebook.min);
      w.f64(b.codebook.step);
    } else {
      if (b.codebook.levels.size() > 256) fail(ErrorCode::InvalidArgument, "codebook holds more than 256 levels");
      w.u16(static_cast<std::uint16_t>(b.codebook.levels.size()));
      for (double v : b.codebook.levels) w.f64(v);
    }
    w.u32(detail::checked_u32(b.codes.size(), "block length"));
    w.raw(b.codes);
  }
  w.u32(detail::crc32_of(w.bytes()));
  return std::move(w.bytes());
}

inline QuantizedNetwork decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTnzMagic.size() + 1 || !std::equal(kTnzMagic.begin(), kTnzMagic.end(), bytes.begin()))
    fail(ErrorCode::CorruptFile, "missing TNZ magic");
  if (bytes[4] != kTnzVersion) fail(ErrorCode::UnsupportedVersion, "TNZ version " + std::to_string(bytes[4]));
  if (bytes.size() < 4 + 1 + 1 + 4 + 4 + 4) fail(ErrorCode::CorruptFile, "file is too short");

  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader trailer(bytes.last(4));
  if (trailer.u32() != detail::crc32_of(body)) fail(ErrorCode::CorruptFile, "checksum mismatch");

  detail::ByteReader r(body);
  r.raw(kTnzMagic.size());
  r.u8();
  const std::uint8_t tag = r.u8();
  if (tag > static_cast<std::uint8_t>(Format::TT)) fail(ErrorCode::DecodeError, "unknown format tag " + std::to_string(tag));

  QuantizedNetwork q;
  q.layout.format = static_cast<Format>(tag);
  const std::uint32_t d = r.u32();
  if (d < 2 || d > r.remaining() / 4) fail(ErrorCode::DecodeError, "implausible tensor order");
  for (std::uint32_t k = 0; k < d; ++k) q.layout.shape.push_back(r.u32());
  const std::size_t rank_count = expected_rank_count(q.layout.format, d);
  for (std::size_t k = 0; k < rank_count; ++k) q.layout.ranks.push_back(r.u32());

  std::vector<Shape> shapes;
  try {
    shapes = subtensor_shapes(q.layout);
  } catch (const Error& e) {
    fail(ErrorCode::DecodeError, e.what());
  }
  if (r.u32() != shapes.size()) fail(ErrorCode::DecodeError, "block count does not match the layout");

  for (const auto& shape : shapes) {
    QuantizedArray b;
    const std::uint8_t kind = r.u8();
    if (kind == static_cast<std::uint8_t>(QuantKind::Uniform)) {
      b.codebook.kind = QuantKind::Uniform;
      b.codebook.min = r.f64();
      b.codebook.step = r.f64();
    } else if (kind == static_cast<std::uint8_t>(QuantKind::Lloyd)) {
      b.codebook.kind = QuantKind::Lloyd;
      const std::uint16_t count = r.u16();
      if (count > 256) fail(ErrorCode::DecodeError, "codebook holds more than 256 levels");
      for (std::uint16_t i = 0; i < count; ++i) b.codebook.levels.push_back(r.f64());
    } else {
      fail(ErrorCode::DecodeError, "unknown codebook kind " + std::to_string(kind));
    }
    const std::uint32_t length = r.u32();
    if (length != element_count(shape)) fail(ErrorCode::DecodeError, "block length does not match its shape");
    const auto codes = r.raw(length);
    b.codes.assign(codes.begin(), codes.end());
    if (b.codebook.kind == QuantKind::Lloyd)
      for (auto c : b.codes)
        if (c >= b.codebook.levels.size()) fail(ErrorCode::DecodeError, "code outside the codebook");
    q.blocks.push_back(std::move(b));
  }
  if (r.remaining() != 0) fail(ErrorCode::DecodeError, "trailing bytes after the last block");
  return q;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void save_tnz(const std::filesystem::path& path, const QuantizedNetwork& q) { write_file(path, encode(q)); }
inline QuantizedNetwork load_tnz(const std::filesystem::path& path) { return decode(read_file(path)); }

}  // namespace tnshield
