// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/imaging_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

namespace iddm {
namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct RawPng {
  int height = 0;
  int width = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

enum class PngStatus { kOk, kNotPng, kCorrupt, kUnsupported };

// libpng's default handlers print to stderr; failures surface as typed errors instead.
void png_quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_quiet_warning(png_structp, png_const_charp) {}

// All objects with destructors are constructed before setjmp.
PngStatus read_png_raw(std::FILE* fp, RawPng& out) {
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) return PngStatus::kNotPng;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
  if (!png) return PngStatus::kCorrupt;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return PngStatus::kCorrupt;
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::kCorrupt;
  }

  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if ((depth != 8 && depth != 16) || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) ||
      png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::kUnsupported;
  }

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  out.bit_depth = depth;

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.height) * out.width * out.channels;
  out.samples.resize(count);
  if (depth == 8) {
    for (std::size_t i = 0; i < count; ++i) out.samples[i] = buffer[i];
  } else {
    for (std::size_t i = 0; i < count; ++i)
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
  }
  return PngStatus::kOk;
}

RawPng read_png_file(const fs::path& path) {
  IDDM_CHECK(fs::exists(path), ErrorCode::kFileNotFound, path.string());
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  IDDM_CHECK(fp != nullptr, ErrorCode::kFileNotFound, path.string());
  RawPng raw;
  switch (read_png_raw(fp.get(), raw)) {
    case PngStatus::kOk: return raw;
    case PngStatus::kNotPng: throw Error(ErrorCode::kUnsupportedFormat, path.string() + " is not a PNG");
    case PngStatus::kUnsupported:
      throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": need 8/16-bit gray or RGB, non-interlaced");
    case PngStatus::kCorrupt: break;
  }
  throw Error(ErrorCode::kCorruptStream, path.string());
}

bool write_png_raw(std::FILE* fp, int height, int width, int channels, int bit_depth,
                   std::vector<png_byte>& buffer) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void write_png_file(const fs::path& path, int height, int width, int channels, int bit_depth,
                    std::vector<png_byte>& buffer) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  IDDM_CHECK(fp != nullptr, ErrorCode::kUnwritable, path.string());
  IDDM_CHECK(write_png_raw(fp.get(), height, width, channels, bit_depth, buffer), ErrorCode::kUnwritable,
             path.string());
}

Eigen::ArrayXd read_pfm(const fs::path& path, int& height, int& width) {
  IDDM_CHECK(fs::exists(path), ErrorCode::kFileNotFound, path.string());
  std::ifstream in(path, std::ios::binary);
  IDDM_CHECK(in.good(), ErrorCode::kFileNotFound, path.string());
  std::string magic;
  double scale = 0;
  in >> magic;
  IDDM_CHECK(magic == "Pf", ErrorCode::kUnsupportedFormat, path.string() + ": expected single-channel 'Pf' PFM");
  in >> width >> height >> scale;
  IDDM_CHECK(in.good() && width > 0 && height > 0 && scale != 0, ErrorCode::kCorruptStream,
             path.string() + ": bad PFM header");
  in.get();  // single whitespace before the payload
  const std::size_t count = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> bytes(count * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  IDDM_CHECK(static_cast<std::size_t>(in.gcount()) == bytes.size(), ErrorCode::kCorruptStream,
             path.string() + ": truncated PFM payload");

  const bool little = scale < 0;
  Eigen::ArrayXd raw(static_cast<Eigen::Index>(count));
  for (int y = 0; y < height; ++y) {
    const int src_row = height - 1 - y;
    for (int x = 0; x < width; ++x) {
      const unsigned char* b = bytes.data() + (static_cast<std::size_t>(src_row) * width + x) * 4;
      std::uint32_t bits = little ? (std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
                                     std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24)
                                  : (std::uint32_t(b[3]) | std::uint32_t(b[2]) << 8 |
                                     std::uint32_t(b[1]) << 16 | std::uint32_t(b[0]) << 24);
      float v;
      std::memcpy(&v, &bits, 4);
      IDDM_CHECK(std::isfinite(v), ErrorCode::kCorruptStream, path.string() + ": non-finite depth");
      IDDM_CHECK(v >= 0.0f, ErrorCode::kInvalidArgument, path.string() + ": negative depth value");
      raw[static_cast<Eigen::Index>(y) * width + x] = v;
    }
  }
  return raw;
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  const RawPng raw = read_png_file(path);
  const float max_value = raw.bit_depth == 16 ? 65535.0f : 255.0f;
  ImageTensor img(raw.height, raw.width, raw.channels);
  for (std::size_t i = 0; i < raw.samples.size(); ++i)
    img.data[static_cast<Eigen::Index>(i)] = static_cast<float>(raw.samples[i]) / max_value;
  return img;
}

void save_image(const ImageTensor& img, const fs::path& path) {
  IDDM_CHECK(img.channels == 1 || img.channels == 3, ErrorCode::kInvalidArgument,
             "save_image needs 1 or 3 channels");
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.size()));
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.0f, 1.0f);
    buffer[static_cast<std::size_t>(i)] = static_cast<png_byte>(std::floor(v * 255.0f + 0.5f));
  }
  write_png_file(path, img.height, img.width, img.channels, 8, buffer);
}

LoadedDepth normalize_depth(const Eigen::ArrayXd& raw, int height, int width, float depth_scale) {
  LoadedDepth out;
  out.depth = DepthMap(height, width);
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  if (hi <= lo) {
    out.constant_input = true;
    return out;
  }
  out.depth.data = ((raw - lo) / (hi - lo) * double(depth_scale)).cast<float>();
  return out;
}

LoadedDepth load_depth(const fs::path& path, float depth_scale) {
  IDDM_CHECK(depth_scale > 0.0f && std::isfinite(depth_scale), ErrorCode::kInvalidArgument,
             "depth_scale must be positive");
  IDDM_CHECK(fs::exists(path), ErrorCode::kFileNotFound, path.string());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });

  int height = 0;
  int width = 0;
  Eigen::ArrayXd raw;
  if (ext == ".pfm") {
    raw = read_pfm(path, height, width);
  } else if (ext == ".png") {
    const RawPng png = read_png_file(path);
    IDDM_CHECK(png.channels == 1 && png.bit_depth == 16, ErrorCode::kUnsupportedFormat,
               path.string() + ": depth PNG must be 16-bit grayscale");
    height = png.height;
    width = png.width;
    raw.resize(static_cast<Eigen::Index>(png.samples.size()));
    for (std::size_t i = 0; i < png.samples.size(); ++i) raw[static_cast<Eigen::Index>(i)] = png.samples[i];
  } else {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": depth must be .png or .pfm");
  }
  return normalize_depth(raw, height, width, depth_scale);
}

void save_depth_png16(const DepthMap& depth, const fs::path& path, float max_value) {
  IDDM_CHECK(max_value > 0.0f, ErrorCode::kInvalidArgument, "max_value must be positive");
  std::vector<png_byte> buffer(static_cast<std::size_t>(depth.data.size()) * 2);
  for (Eigen::Index i = 0; i < depth.data.size(); ++i) {
    const double v = std::clamp(double(depth.data[i]) / max_value, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::floor(v * 65535.0 + 0.5));
    buffer[2 * static_cast<std::size_t>(i)] = static_cast<png_byte>(q >> 8);
    buffer[2 * static_cast<std::size_t>(i) + 1] = static_cast<png_byte>(q & 0xff);
  }
  write_png_file(path, depth.height, depth.width, 1, 16, buffer);
}

void save_pfm(const Depth<float>& depth, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
  out << "Pf\n" << depth.width << " " << depth.height << "\n-1.0\n";
  for (int y = depth.height - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width; ++x) {
      const float v = depth(y, x);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      const char b[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                         char((bits >> 24) & 0xff)};
      out.write(b, 4);
    }
  }
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  IDDM_CHECK(in.good(), ErrorCode::kFileNotFound, path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kCorruptStream, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    IDDM_CHECK(rec.is_object() && rec.contains("clear") && rec.contains("depth"), ErrorCode::kCorruptStream,
               path.string() + ":" + std::to_string(lineno) + ": need \"clear\" and \"depth\"");
    ManifestEntry e{rec["clear"].get<std::string>(), rec["depth"].get<std::string>()};
    if (e.clear.is_relative()) e.clear = base / e.clear;
    if (e.depth.is_relative()) e.depth = base / e.depth;
    entries.push_back(std::move(e));
  }
  return entries;
}

std::pair<ImageTensor, DepthMap> generate_scene(std::uint64_t seed, int height, int width) {
  IDDM_CHECK(height >= 8 && width >= 8, ErrorCode::kInvalidArgument, "scene must be at least 8x8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ImageTensor img(height, width, 3);
  Eigen::ArrayXd depth(Eigen::Index(height) * width);

  const double two_pi = 6.283185307179586;
  const double color_angle = two_pi * unit(rng);
  const double depth_angle = two_pi * unit(rng);
  double c0[3], c1[3];
  for (double& c : c0) c = unit(rng);
  for (double& c : c1) c = unit(rng);

  auto ramp = [&](double angle, int y, int x) {
    const double u = (width > 1 ? double(x) / (width - 1) : 0.0) - 0.5;
    const double v = (height > 1 ? double(y) / (height - 1) : 0.0) - 0.5;
    return std::cos(angle) * u + std::sin(angle) * v;  // in [-1/sqrt(2), 1/sqrt(2)]
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double a = std::clamp(ramp(color_angle, y, x) * 0.7071067811865476 + 0.5, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) img(y, x, c) = static_cast<float>(c0[c] * (1.0 - a) + c1[c] * a);
      depth[Eigen::Index(y) * width + x] = ramp(depth_angle, y, x);
    }
  }

  const int rect_count = 2 + static_cast<int>(unit(rng) * 4.0);  // 2..5
  for (int r = 0; r < rect_count; ++r) {
    const int rh = std::max(2, static_cast<int>(height * (0.15 + 0.35 * unit(rng))));
    const int rw = std::max(2, static_cast<int>(width * (0.15 + 0.35 * unit(rng))));
    const int y0 = static_cast<int>(unit(rng) * (height - rh + 1));
    const int x0 = static_cast<int>(unit(rng) * (width - rw + 1));
    double color[3];
    for (double& c : color) c = unit(rng);
    const double offset = 0.6 * (unit(rng) - 0.5);
    for (int y = y0; y < y0 + rh; ++y) {
      for (int x = x0; x < x0 + rw; ++x) {
        for (int c = 0; c < 3; ++c) img(y, x, c) = static_cast<float>(color[c]);
        depth[Eigen::Index(y) * width + x] += offset;
      }
    }
  }

  return {std::move(img), normalize_depth(depth, height, width, 1.0f).depth};
}

}  // namespace iddm
