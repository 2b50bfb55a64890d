// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iddm/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace iddm {
namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_tensor(std::string& payload, nlohmann::json& table, const std::string& name,
                   const ModelParams<float>::Mat& m) {
  table.push_back({{"name", name},
                   {"offset", payload.size()},
                   {"shape", {m.rows(), m.cols()}},
                   {"dtype", "float32"}});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::uint32_t bits;
      const float v = m(r, c);
      std::memcpy(&bits, &v, 4);
      put_u32(payload, bits);
    }
}

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const fs::path& path, const nlohmann::json& metadata) {
  std::string payload;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, m] : params.values) append_tensor(payload, table, name, m);
  for (const auto& [name, m] : params.adam_m) append_tensor(payload, table, "adam_m/" + name, m);
  for (const auto& [name, m] : params.adam_v) append_tensor(payload, table, "adam_v/" + name, m);

  const nlohmann::json header = {{"format", kCheckpointMagic},
                                 {"architecture", params.arch.to_json()},
                                 {"tensors", table},
                                 {"adam_steps", params.adam_steps},
                                 {"metadata", metadata}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
  out.write(kCheckpointMagic, 5);
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  IDDM_CHECK(out.good(), ErrorCode::kUnwritable, path.string());
}

Checkpoint load_checkpoint(const fs::path& path, const std::optional<Architecture>& expected) {
  IDDM_CHECK(fs::exists(path), ErrorCode::kFileNotFound, path.string());
  std::ifstream in(path, std::ios::binary);
  IDDM_CHECK(in.good(), ErrorCode::kFileNotFound, path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  IDDM_CHECK(bytes.size() >= 13 && bytes.compare(0, 5, kCheckpointMagic) == 0, ErrorCode::kUnsupportedFormat,
             path.string() + ": missing IDDM1 magic");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(static_cast<unsigned char>(bytes[5 + i])) << (8 * i);
  IDDM_CHECK(13 + len <= bytes.size(), ErrorCode::kCorruptStream, path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(13, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptStream, path.string() + ": " + e.what());
  }
  const std::size_t base = 13 + len;

  Checkpoint ck;
  ck.params.arch = Architecture::from_json(header.at("architecture"));
  if (expected && !(*expected == ck.params.arch))
    throw Error(ErrorCode::kArchitectureMismatch,
                path.string() + ": expected " + expected->to_json().dump() + ", found " + ck.params.arch.to_json().dump());
  ck.params.adam_steps = header.value("adam_steps", std::int64_t{0});
  ck.metadata = header.value("metadata", nlohmann::json::object());

  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    IDDM_CHECK(t.at("dtype") == "float32", ErrorCode::kUnsupportedFormat, "tensor " + name + " is not float32");
    const auto rows = t.at("shape")[0].get<Eigen::Index>();
    const auto cols = t.at("shape")[1].get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::size_t>();
    IDDM_CHECK(base + offset + std::size_t(rows * cols) * 4 <= bytes.size(), ErrorCode::kCorruptStream,
               path.string() + ": tensor " + name + " runs past the end of file");
    ModelParams<float>::Mat m(rows, cols);
    const char* p = bytes.data() + base + offset;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c, p += 4) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
        std::memcpy(&m(r, c), &bits, 4);
      }
    if (name.starts_with("adam_m/"))
      ck.params.adam_m[name.substr(7)] = std::move(m);
    else if (name.starts_with("adam_v/"))
      ck.params.adam_v[name.substr(7)] = std::move(m);
    else
      ck.params.values[name] = std::move(m);
  }

  for (const auto& [name, shape] : parameter_shapes(ck.params.arch)) {
    auto it = ck.params.values.find(name);
    IDDM_CHECK(it != ck.params.values.end() && it->second.rows() == shape.first && it->second.cols() == shape.second,
               ErrorCode::kArchitectureMismatch, path.string() + ": tensor " + name + " missing or mis-shaped");
  }
  return ck;
}

std::uint64_t fingerprint(const ModelParams<float>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, m] : params.values) {
    mix(name.data(), name.size());
    mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(float));
  }
  return h;
}

}  // namespace iddm
