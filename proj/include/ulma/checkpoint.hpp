// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "ulma/encoder.hpp"
#include "ulma/errors.hpp"
#include "ulma/optim.hpp"

namespace ulma {

// Checkpoint layout:
//   bytes 0..4   magic "ULMA1"
//   bytes 5..12  header length, unsigned 64-bit little-endian
//   header       UTF-8 JSON: config, head, tensor manifest, optional
//                optimizer step count, free-form "extra" object
//   payload      concatenated float32 little-endian arrays at the offsets
//                recorded in the manifest
inline constexpr char kCheckpointMagic[5] = {'U', 'L', 'M', 'A', '1'};

namespace detail {

inline void put_u64_le(std::string& out, uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline void put_f32_le(std::string& out, float f) {
  const uint32_t x = std::bit_cast<uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

inline uint64_t get_u64_le(const unsigned char* p) {
  uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(p[i]) << (8 * i);
  return x;
}

inline float get_f32_le(const unsigned char* p) {
  uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(x);
}

inline const char* group_name(ParamGroup g) {
  return g == ParamGroup::kDecay ? "decay" : "no_decay";
}

inline nlohmann::json depth_json(const DepthTag& d) {
  switch (d.kind) {
    case DepthTag::kEmbedding:
      return {{"kind", "embedding"}};
    case DepthTag::kBlock:
      return {{"kind", "block"}, {"block", d.block}};
    case DepthTag::kHead:
      return {{"kind", "head"}};
  }
  throw InternalError("depth_json: unknown depth tag");
}

template <typename T>
void append_tensor(std::string& payload, nlohmann::json& manifest, const std::string& name,
                   const Tensor<T>& t, const char* group, const nlohmann::json& depth) {
  nlohmann::json entry;
  entry["name"] = name;
  entry["shape"] = t.shape;
  entry["offset"] = payload.size();
  if (group != nullptr) entry["group"] = group;
  if (!depth.is_null()) entry["depth"] = depth;
  manifest.push_back(entry);
  for (T x : t.v) put_f32_le(payload, static_cast<float>(x));
}

inline void atomic_write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("write to " + tmp + " failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move " + tmp + " into place at " + path);
  }
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model,
                     const OptimizerState<T>* opt, const nlohmann::json& extra) {
  nlohmann::json header;
  header["format"] = "ULMA1";
  header["config"] = {
      {"num_layers", model.cfg.num_layers},     {"hidden_size", model.cfg.hidden_size},
      {"num_heads", model.cfg.num_heads},       {"ffn_size", model.cfg.ffn_size},
      {"max_positions", model.cfg.max_positions}, {"vocab_size", model.cfg.vocab_size},
      {"dropout_rate", model.cfg.dropout_rate}};
  header["head"] = {{"num_classes", model.head.num_classes},
                    {"fusion_dim", model.head.fusion_dim},
                    {"tied_mlm", model.head.tied_mlm}};
  header["extra"] = extra.is_null() ? nlohmann::json::object() : extra;

  std::string payload;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& ref : param_refs(model)) {
    detail::append_tensor(payload, manifest, ref.name, *ref.tensor,
                          detail::group_name(ref.group), detail::depth_json(ref.depth));
  }
  if (opt != nullptr) {
    header["optimizer"] = {{"t", opt->t}};
    for (const auto& ref : param_refs(opt->m)) {
      detail::append_tensor(payload, manifest, "adam_m/" + ref.name, *ref.tensor, nullptr,
                            nlohmann::json());
    }
    for (const auto& ref : param_refs(opt->v)) {
      detail::append_tensor(payload, manifest, "adam_v/" + ref.name, *ref.tensor, nullptr,
                            nlohmann::json());
    }
  }
  header["tensors"] = manifest;

  const std::string header_text = header.dump();
  std::string bytes;
  bytes.reserve(5 + 8 + header_text.size() + payload.size());
  bytes.append(kCheckpointMagic, 5);
  detail::put_u64_le(bytes, header_text.size());
  bytes += header_text;
  bytes += payload;
  detail::atomic_write_file(path, bytes);
}

inline nlohmann::json read_checkpoint_header(const std::string& bytes, const std::string& path,
                                             size_t* payload_start) {
  if (bytes.size() < 13 || bytes.compare(0, 5, kCheckpointMagic, 5) != 0) {
    throw DataError(path + ": not a ULMA1 checkpoint (bad magic)");
  }
  const uint64_t header_len =
      detail::get_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 5);
  if (13 + header_len > bytes.size()) {
    throw DataError(path + ": truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(13, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": corrupt checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "ULMA1") {
    throw DataError(path + ": unsupported checkpoint format");
  }
  *payload_start = 13 + static_cast<size_t>(header_len);
  return header;
}

template <typename T>
Model<T> load_checkpoint(const std::string& path, OptimizerState<T>* opt,
                         nlohmann::json* extra) {
  const std::string bytes = detail::read_file_bytes(path);
  size_t payload_start = 0;
  const nlohmann::json header = read_checkpoint_header(bytes, path, &payload_start);

  EncoderConfig cfg;
  HeadConfig head;
  try {
    const auto& c = header.at("config");
    cfg.num_layers = c.at("num_layers").get<int>();
    cfg.hidden_size = c.at("hidden_size").get<int>();
    cfg.num_heads = c.at("num_heads").get<int>();
    cfg.ffn_size = c.at("ffn_size").get<int>();
    cfg.max_positions = c.at("max_positions").get<int>();
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.dropout_rate = c.at("dropout_rate").get<double>();
    const auto& h = header.at("head");
    head.num_classes = h.at("num_classes").get<int>();
    head.fusion_dim = h.at("fusion_dim").get<int>();
    head.tied_mlm = h.at("tied_mlm").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": checkpoint header missing config fields: " + e.what());
  }

  Model<T> model = make_model<T>(cfg, head);
  if (extra != nullptr) *extra = header.value("extra", nlohmann::json::object());

  std::unordered_map<std::string, const nlohmann::json*> by_name;
  for (const auto& entry : header.at("tensors")) {
    by_name[entry.at("name").get<std::string>()] = &entry;
  }
  auto read_into = [&](const std::string& name, Tensor<T>& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError(path + ": checkpoint lacks tensor " + name);
    const nlohmann::json& entry = *it->second;
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t.shape) {
      throw DataError(path + ": tensor " + name + " has unexpected shape");
    }
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const uint64_t need = offset + static_cast<uint64_t>(t.numel()) * 4;
    if (payload_start + need > bytes.size()) {
      throw DataError(path + ": checkpoint payload truncated at tensor " + name);
    }
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + payload_start + offset;
    for (int64_t i = 0; i < t.numel(); ++i) {
      t.v[static_cast<size_t>(i)] = static_cast<T>(detail::get_f32_le(p + 4 * i));
    }
  };

  for (auto& ref : param_refs(model)) read_into(ref.name, *ref.tensor);
  if (opt != nullptr) {
    if (!header.contains("optimizer")) {
      throw DataError(path + ": checkpoint carries no optimizer state");
    }
    *opt = make_optimizer_state(model);
    opt->t = header.at("optimizer").at("t").get<long long>();
    for (auto& ref : param_refs(opt->m)) read_into("adam_m/" + ref.name, *ref.tensor);
    for (auto& ref : param_refs(opt->v)) read_into("adam_v/" + ref.name, *ref.tensor);
  }
  return model;
}

}  // namespace ulma
