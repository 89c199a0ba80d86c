/**
 * @file image.hpp
 * @brief Image/tensor value types, netpbm and PXF1 file I/O, bilinear resampling.
 *
 * ImagePlane is the common carrier for images, feature maps, and edge maps:
 * an H x W x C array of float in row-major (row, column, channel) order.
 * Images load from binary PPM (P6, maxval 255) and PGM (P5, maxval 255 or
 * 65535) with values normalized to [0, 1]. Tensors round-trip bit-exactly
 * through the PXF1 format:
 *
 *   "PXF1" | u32 ndim | u32 dims[ndim] | f32 payload, row-major
 *
 * All multi-byte PXF1 fields are little-endian. PGM 16-bit samples are
 * big-endian per the netpbm convention.
 */
#pragma once

#include <contourkit/errors.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace ck {

// =============================================================================
// ImagePlane
// =============================================================================

struct ImagePlane {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;  // (row, column, channel) row-major

  ImagePlane() = default;
  ImagePlane(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c) {
    if (h < 1 || w < 1 || c < 1)
      throw ContractError("ImagePlane dims must be >= 1, got " + std::to_string(h) + "x" +
                          std::to_string(w) + "x" + std::to_string(c));
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  bool same_dims(const ImagePlane& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
  std::size_t size() const { return data.size(); }
};

/// Generic n-dimensional tensor record used by PXF1/PXW1 files.
struct TensorData {
  std::vector<uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

// =============================================================================
// netpbm I/O (binary P5 / P6)
// =============================================================================

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open file for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write: " + path.string());
}

/// Cursor over a loaded byte buffer; failures report the byte offset.
class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  uint8_t next_byte() {
    if (pos_ >= bytes_.size()) fail("unexpected end of file");
    return static_cast<uint8_t>(bytes_[pos_++]);
  }

  const char* take(std::size_t n, const char* what) {
    if (remaining() < n) fail(std::string("truncated ") + what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(origin_ + ": " + msg + " at byte " + std::to_string(pos_));
  }

  // netpbm token scanning: whitespace separates tokens, '#' comments run to EOL
  void skip_pbm_space() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long next_pbm_int(const char* what) {
    skip_pbm_space();
    if (pos_ >= bytes_.size()) fail(std::string("missing ") + what);
    if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
      fail(std::string("malformed ") + what);
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000L) fail(std::string(what) + " out of range");
      ++pos_;
    }
    return v;
  }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Reads a binary PPM (P6, maxval 255, 3 channels) or PGM (P5, maxval 255 or
/// 65535, 1 channel). Sample values are scaled to [0, 1] by the maxval.
inline ImagePlane read_image(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path.string());

  const char* magic = r.take(2, "magic");
  bool color;
  if (magic[0] == 'P' && magic[1] == '6') {
    color = true;
  } else if (magic[0] == 'P' && magic[1] == '5') {
    color = false;
  } else {
    throw FormatError(path.string() + ": not a binary PGM/PPM (want P5 or P6) at byte 0");
  }

  const long w = r.next_pbm_int("width");
  const long h = r.next_pbm_int("height");
  const long maxval = r.next_pbm_int("maxval");
  if (h < 1 || w < 1) r.fail("image dims must be >= 1");
  if (color && maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " for P6 (want 255)");
  if (!color && maxval != 255 && maxval != 65535)
    r.fail("unsupported maxval " + std::to_string(maxval) + " for P5 (want 255 or 65535)");

  // exactly one whitespace byte separates the header from the payload
  const uint8_t sep = r.next_byte();
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') r.fail("missing payload separator");

  const int channels = color ? 3 : 1;
  const std::size_t samples = static_cast<std::size_t>(h) * w * channels;
  const std::size_t payload = samples * (maxval > 255 ? 2 : 1);
  const char* p = r.take(payload, "payload");

  ImagePlane plane(static_cast<int>(h), static_cast<int>(w), channels);
  const float inv = 1.0f / static_cast<float>(maxval);
  if (maxval > 255) {
    for (std::size_t i = 0; i < samples; ++i) {
      const uint16_t v = static_cast<uint16_t>((static_cast<uint8_t>(p[2 * i]) << 8) |
                                               static_cast<uint8_t>(p[2 * i + 1]));
      plane.data[i] = static_cast<float>(v) * inv;
    }
  } else {
    for (std::size_t i = 0; i < samples; ++i)
      plane.data[i] = static_cast<float>(static_cast<uint8_t>(p[i])) * inv;
  }
  return plane;
}

/// Writes a 3-channel plane as binary PPM (P6, maxval 255).
inline void write_ppm(const ImagePlane& plane, const std::filesystem::path& path) {
  if (plane.channels != 3) throw ContractError("write_ppm requires 3 channels");
  std::string out = "P6\n" + std::to_string(plane.width) + " " + std::to_string(plane.height) +
                    "\n255\n";
  out.reserve(out.size() + plane.size());
  for (const float v : plane.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("write_ppm value outside [0, 1]");
    out.push_back(static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0f))));
  }
  detail::write_file_bytes(path, out);
}

/// Writes a single-channel plane as binary PGM at the given maxval (255 or
/// 65535). Sample v is stored as round(v * maxval); 16-bit samples big-endian.
inline void write_pgm(const ImagePlane& plane, const std::filesystem::path& path,
                      int maxval = 255) {
  if (plane.channels != 1) throw ContractError("write_pgm requires 1 channel");
  if (maxval != 255 && maxval != 65535) throw ContractError("write_pgm maxval must be 255 or 65535");
  std::string out = "P5\n" + std::to_string(plane.width) + " " + std::to_string(plane.height) +
                    "\n" + std::to_string(maxval) + "\n";
  out.reserve(out.size() + plane.size() * (maxval > 255 ? 2 : 1));
  for (const float v : plane.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("write_pgm value outside [0, 1]");
    const long q = std::lround(static_cast<double>(v) * maxval);
    if (maxval > 255) {
      out.push_back(static_cast<char>((q >> 8) & 0xff));
      out.push_back(static_cast<char>(q & 0xff));
    } else {
      out.push_back(static_cast<char>(q & 0xff));
    }
  }
  detail::write_file_bytes(path, out);
}

/// Edge maps persist as 16-bit PGM so a 99-level threshold sweep keeps full
/// resolution. Values must already lie in [0, 1].
inline void write_edge_map(const ImagePlane& plane, const std::filesystem::path& path) {
  write_pgm(plane, path, 65535);
}

// =============================================================================
// PXF1 tensor I/O
// =============================================================================

namespace detail {

inline void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32_le(const char* p) {
  return static_cast<uint32_t>(static_cast<uint8_t>(p[0])) |
         (static_cast<uint32_t>(static_cast<uint8_t>(p[1])) << 8) |
         (static_cast<uint32_t>(static_cast<uint8_t>(p[2])) << 16) |
         (static_cast<uint32_t>(static_cast<uint8_t>(p[3])) << 24);
}

inline void append_pxf_record(std::string& out, const TensorData& t) {
  out.append("PXF1", 4);
  put_u32_le(out, static_cast<uint32_t>(t.dims.size()));
  for (const uint32_t d : t.dims) put_u32_le(out, d);
  static_assert(sizeof(float) == 4);
  const std::size_t n = t.element_count();
  if (n != t.values.size()) throw ContractError("PXF1 payload length does not match dims");
  for (const float v : t.values) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32_le(out, bits);
  }
}

inline TensorData read_pxf_record(ByteReader& r) {
  const char* magic = r.take(4, "PXF1 magic");
  if (std::memcmp(magic, "PXF1", 4) != 0)
    throw FormatError("bad PXF1 magic at byte " + std::to_string(r.offset() - 4));
  const uint32_t ndim = get_u32_le(r.take(4, "PXF1 ndim"));
  if (ndim > 8) r.fail("PXF1 ndim too large: " + std::to_string(ndim));
  TensorData t;
  t.dims.resize(ndim);
  std::size_t count = 1;
  for (uint32_t i = 0; i < ndim; ++i) {
    t.dims[i] = get_u32_le(r.take(4, "PXF1 dims"));
    if (t.dims[i] != 0 && count > (std::size_t{1} << 31) / t.dims[i])
      r.fail("PXF1 dims overflow");
    count *= t.dims[i];
  }
  if (ndim == 0) count = 0;
  if (r.remaining() < count * 4) r.fail("PXF1 payload length mismatch");
  const char* p = r.take(count * 4, "PXF1 payload");
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const uint32_t bits = get_u32_le(p + 4 * i);
    std::memcpy(&t.values[i], &bits, 4);
  }
  return t;
}

}  // namespace detail

/// Writes a plane as a 3-dim PXF1 tensor (height, width, channels).
inline void write_tensor(const ImagePlane& plane, const std::filesystem::path& path) {
  TensorData t;
  t.dims = {static_cast<uint32_t>(plane.height), static_cast<uint32_t>(plane.width),
            static_cast<uint32_t>(plane.channels)};
  t.values = plane.data;
  std::string out;
  detail::append_pxf_record(out, t);
  detail::write_file_bytes(path, out);
}

/// Reads a 2- or 3-dim PXF1 tensor as a plane (2-dim implies 1 channel).
inline ImagePlane read_tensor(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path.string());
  const TensorData t = detail::read_pxf_record(r);
  if (r.remaining() != 0) r.fail("trailing bytes after PXF1 record");
  if (t.dims.size() != 2 && t.dims.size() != 3)
    throw FormatError(path.string() + ": tensor rank " + std::to_string(t.dims.size()) +
                      " is not a plane (want 2 or 3)");
  const int h = static_cast<int>(t.dims[0]);
  const int w = static_cast<int>(t.dims[1]);
  const int c = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
  if (h < 1 || w < 1 || c < 1) throw FormatError(path.string() + ": degenerate tensor dims");
  ImagePlane plane(h, w, c);
  plane.data = t.values;
  return plane;
}

// =============================================================================
// Resampling
// =============================================================================

/// Bilinear sample of channel c at real coordinates (y, x); zero outside.
inline double bilinear_at(const ImagePlane& plane, double y, double x, int c = 0) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  auto tap = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= plane.height || xx < 0 || xx >= plane.width) return 0.0;
    return plane.at(yy, xx, c);
  };
  return tap(y0, x0) * (1 - fy) * (1 - fx) + tap(y0, x0 + 1) * (1 - fy) * fx +
         tap(y0 + 1, x0) * fy * (1 - fx) + tap(y0 + 1, x0 + 1) * fy * fx;
}

/// Per-channel bilinear resize with the align-corners convention: output
/// index i samples source coordinate i * (in-1) / (out-1) (0 when out == 1).
inline ImagePlane resize_bilinear(const ImagePlane& plane, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractError("resize_bilinear target dims must be >= 1");
  if (out_h == plane.height && out_w == plane.width) return plane;

  ImagePlane out(out_h, out_w, plane.channels);
  const double sy = out_h > 1 ? static_cast<double>(plane.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(plane.width - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(static_cast<int>(fy), plane.height - 1);
    const int y1 = std::min(y0 + 1, plane.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(static_cast<int>(fx), plane.width - 1);
      const int x1 = std::min(x0 + 1, plane.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < plane.channels; ++c) {
        const double v00 = plane.at(y0, x0, c);
        const double v01 = plane.at(y0, x1, c);
        const double v10 = plane.at(y1, x0, c);
        const double v11 = plane.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>(v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx +
                                             v10 * wy * (1 - wx) + v11 * wy * wx);
      }
    }
  }
  return out;
}

}  // namespace ck
