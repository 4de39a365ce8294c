#pragma once

// Heatmap codecs (HMF binary, 8-bit grayscale PNG) and the JSON encodings of
// boxes and score vectors.
//
// HMF layout, all little-endian:
//   bytes 0..3   magic "HMF1"
//   bytes 4..7   width  (uint32)
//   bytes 8..11  height (uint32)
//   then width * height IEEE-754 binary32 values, row-major

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flawmap/core.hpp"
#include "flawmap/error.hpp"

namespace flawmap {

enum class HeatmapFormat { kPng, kHmf };

namespace detail {

inline constexpr std::array<std::uint8_t, 4> kHmfMagic = {'H', 'M', 'F', '1'};
inline constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G',
                                                              '\r', '\n', 0x1A, '\n'};

inline std::uint32_t read_u32_le(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline std::uint32_t read_u32_be(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

inline void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void check_pixel_count(std::uint64_t width, std::uint64_t height) {
  if (width == 0 || height == 0) throw IoError("heatmap header: zero dimension");
  if (width > kMaxHeatmapPixels || height > kMaxHeatmapPixels ||
      width * height > kMaxHeatmapPixels) {
    throw ValidationError("heatmap header: dimensions " + std::to_string(width) + "x" +
                          std::to_string(height) + " overflow the pixel limit");
  }
}

inline Heatmap decode_hmf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !std::equal(kHmfMagic.begin(), kHmfMagic.end(), bytes.begin())) {
    throw IoError("hmf: malformed header");
  }
  const std::uint64_t width = read_u32_le(bytes, 4);
  const std::uint64_t height = read_u32_le(bytes, 8);
  check_pixel_count(width, height);
  const std::uint64_t count = width * height;
  if (bytes.size() != 12 + 4 * count) {
    throw IoError("hmf: payload holds " + std::to_string(bytes.size() - 12) + " bytes, expected " +
                  std::to_string(4 * count));
  }
  std::vector<float> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(read_u32_le(bytes, 12 + 4 * i));
    if (!(v >= 0.0F && v <= 1.0F)) {
      throw ValidationError("hmf: value at index " + std::to_string(i) + " outside [0, 1]");
    }
    values[i] = v;
  }
  return Heatmap(width, height, std::move(values));
}

inline std::vector<std::uint8_t> encode_hmf(const Heatmap& h) {
  std::vector<std::uint8_t> out(kHmfMagic.begin(), kHmfMagic.end());
  out.reserve(12 + 4 * h.size());
  append_u32_le(out, static_cast<std::uint32_t>(h.width()));
  append_u32_le(out, static_cast<std::uint32_t>(h.height()));
  for (float v : h.values()) append_u32_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

// Only 8-bit grayscale without transparency is accepted; the IHDR chunk is
// inspected directly because libpng's simplified reader would silently
// convert other layouts.
inline Heatmap decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 33 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()) ||
      std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw IoError("png: malformed header");
  }
  const std::uint64_t width = read_u32_be(bytes, 16);
  const std::uint64_t height = read_u32_be(bytes, 20);
  const std::uint8_t bit_depth = bytes[24];
  const std::uint8_t color_type = bytes[25];
  if (color_type != 0) {
    throw IoError("png: color type " + std::to_string(color_type) +
                  " rejected, only single-channel grayscale is supported");
  }
  if (bit_depth != 8) {
    throw IoError("png: bit depth " + std::to_string(bit_depth) + " rejected, expected 8");
  }
  check_pixel_count(width, height);

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    throw IoError(std::string("png: ") + image.message);
  }
  if ((image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) != 0) {
    png_image_free(&image);
    throw IoError("png: multi-channel image rejected");
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) == 0) {
    const std::string message = image.message;
    png_image_free(&image);
    throw IoError("png: " + message);
  }
  std::vector<float> values(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    values[i] = static_cast<float>(pixels[i]) / 255.0F;
  }
  return Heatmap(width, height, std::move(values));
}

// Each value is quantized to the nearest multiple of 1/255.
inline std::vector<std::uint8_t> encode_png(const Heatmap& h) {
  std::vector<std::uint8_t> pixels(h.size());
  const auto values = h.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(static_cast<double>(values[i]) * 255.0));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(h.width());
  image.height = static_cast<png_uint_32>(h.height());
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr) == 0) {
    throw IoError(std::string("png: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr) == 0) {
    throw IoError(std::string("png: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace detail

inline Heatmap load_heatmap(std::span<const std::uint8_t> bytes, HeatmapFormat format) {
  return format == HeatmapFormat::kHmf ? detail::decode_hmf(bytes) : detail::decode_png(bytes);
}

inline std::vector<std::uint8_t> save_heatmap(const Heatmap& h, HeatmapFormat format) {
  return format == HeatmapFormat::kHmf ? detail::encode_hmf(h) : detail::encode_png(h);
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Picks the codec from the extension (.png / .hmf), falling back to the
// leading magic bytes.
inline HeatmapFormat detect_heatmap_format(const std::filesystem::path& path,
                                           std::span<const std::uint8_t> bytes) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return HeatmapFormat::kPng;
  if (ext == ".hmf") return HeatmapFormat::kHmf;
  if (bytes.size() >= 4 && std::equal(detail::kHmfMagic.begin(), detail::kHmfMagic.end(),
                                      bytes.begin())) {
    return HeatmapFormat::kHmf;
  }
  return HeatmapFormat::kPng;
}

inline Heatmap load_heatmap_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return load_heatmap(bytes, detect_heatmap_format(path, bytes));
}

// --- JSON encodings ---------------------------------------------------------

inline nlohmann::ordered_json boxes_to_json(std::span<const BoundingBox> boxes) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& b : boxes) arr.push_back({b.x1, b.y1, b.x2, b.y2});
  return arr;
}

template <typename Json>
std::vector<BoundingBox> boxes_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("boxes: expected a JSON array of [x1,y1,x2,y2]");
  std::vector<BoundingBox> boxes;
  boxes.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 4) {
      throw ValidationError("boxes: each entry must be a 4-element array");
    }
    for (const auto& v : item) {
      if (!v.is_number()) throw ValidationError("boxes: coordinates must be numbers");
    }
    boxes.push_back(make_box(item[0].template get<double>(), item[1].template get<double>(),
                             item[2].template get<double>(), item[3].template get<double>()));
  }
  return boxes;
}

inline nlohmann::ordered_json scores_to_json(const ScoreVector& s) {
  nlohmann::ordered_json j;
  const auto values = s.as_array();
  for (std::size_t d = 0; d < values.size(); ++d) j[std::string(kScoreDimensions[d])] = values[d];
  return j;
}

template <typename Json>
ScoreVector scores_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("scores: expected a JSON object");
  std::array<double, 4> values{};
  for (std::size_t d = 0; d < values.size(); ++d) {
    const std::string key(kScoreDimensions[d]);
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw ValidationError("scores: missing numeric field '" + key + "'");
    }
    values[d] = j.at(key).template get<double>();
  }
  const auto s = ScoreVector::from_array(values);
  validate_scores(s);
  return s;
}

}  // namespace flawmap
