#pragma once

// HDMC checkpoint container:
//   "HDMC" | u32 version | u32 blob length | JSON blob |
//   records (u32 name length, name, u8 dtype, u32 rank, u64 dims..., raw LE data) |
//   u32 CRC32 of everything before it.
// The blob carries the model config, its hash, the step counter, optimizer
// metadata and the record count.

#include <filesystem>
#include <string>
#include <vector>

#include "hdmnet/io.hpp"
#include "hdmnet/network.hpp"

namespace hdmnet {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { float32 = 0, float64 = 1 };

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::float32 : DType::float64;
}

template <class T>
struct Checkpoint {
  Model<T> model;
  std::uint64_t step = 0;
  nlohmann::json optimizer = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<T>>> optimizer_slots;
};

namespace detail {

template <class T>
void put_record(ByteWriter& w, const std::string& name, const Tensor<T>& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.put_string(name);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dtype_of<T>()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put<std::uint64_t>(d);
  w.put_array<T>(t.data());
}

template <class T>
std::pair<std::string, Tensor<T>> get_record(ByteReader& r) {
  const auto name = r.get_string(r.get<std::uint32_t>());
  const auto tag = r.get<std::uint8_t>();
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw CheckpointError("record '" + name + "' has implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
  const std::size_t n = shape_numel(shape);
  std::vector<T> values(n);
  if (tag == static_cast<std::uint8_t>(DType::float32)) {
    const auto raw = r.get_array<float>(n);
    std::copy(raw.begin(), raw.end(), values.begin());
  } else if (tag == static_cast<std::uint8_t>(DType::float64)) {
    const auto raw = r.get_array<double>(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<T>(raw[i]);
  } else {
    throw CheckpointError("record '" + name + "' has unknown dtype tag " + std::to_string(tag));
  }
  return {name, Tensor<T>(std::move(shape), std::move(values))};
}

}  // namespace detail

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model, std::uint64_t step = 0,
                                            const nlohmann::json& optimizer = nlohmann::json::object(),
                                            const std::vector<std::pair<std::string, Tensor<T>>>& slots = {}) {
  const auto& cfg = model.config();
  nlohmann::json blob = {{"model", cfg.to_json()},
                         {"config_hash", hex64(cfg.hash())},
                         {"step", step},
                         {"optimizer", optimizer},
                         {"parameters", model.parameters().size()},
                         {"optimizer_slots", slots.size()}};
  const auto text = blob.dump();
  ByteWriter w;
  w.put_string("HDMC");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_string(text);
  for (const auto& [name, p] : model.parameters()) detail::put_record(w, name, p);
  for (const auto& [name, p] : slots) detail::put_record(w, name, p);
  w.put<std::uint32_t>(crc32(w.bytes()));
  return w.take();
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, std::uint64_t step = 0,
                     const nlohmann::json& optimizer = nlohmann::json::object(),
                     const std::vector<std::pair<std::string, Tensor<T>>>& slots = {}) {
  write_file_atomic(path, encode_checkpoint(model, step, optimizer, slots));
}

/// Parses a checkpoint; if `expected` is given its hash must match the stored config.
template <class T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig* expected = nullptr) {
  if (bytes.size() < 16) throw CheckpointError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  ByteReader footer(bytes.subspan(bytes.size() - 4));
  if (footer.get<std::uint32_t>() != crc32(bytes.first(bytes.size() - 4))) {
    throw CheckpointError("checkpoint corrupt: CRC32 mismatch (truncated or modified file)");
  }
  try {
    ByteReader r(bytes.first(bytes.size() - 4));
    if (r.get_string(4) != "HDMC") throw CheckpointError("not a checkpoint file (bad magic)");
    if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
    }
    const auto blob = nlohmann::json::parse(r.get_string(r.get<std::uint32_t>()));
    const auto cfg = ModelConfig::from_json(blob.at("model"));
    if (blob.at("config_hash").get<std::string>() != hex64(cfg.hash())) {
      throw CheckpointError("checkpoint config hash does not match its config blob");
    }
    if (expected && expected->hash() != cfg.hash()) {
      throw CheckpointError("checkpoint config mismatch: file has " + cfg.to_json().dump() + ", expected " +
                            expected->to_json().dump());
    }
    Checkpoint<T> ck{Model<T>(cfg)};
    ck.step = blob.at("step").get<std::uint64_t>();
    ck.optimizer = blob.at("optimizer");
    const auto nparams = blob.at("parameters").get<std::size_t>();
    if (nparams != ck.model.parameters().size()) {
      throw CheckpointError("checkpoint has " + std::to_string(nparams) + " parameter records, config needs " +
                            std::to_string(ck.model.parameters().size()));
    }
    for (auto& [name, p] : ck.model.parameters()) {
      auto [rname, rec] = detail::get_record<T>(r);
      if (rname != name || rec.shape() != p.shape()) {
        throw CheckpointError("checkpoint record '" + rname + "' " + shape_str(rec.shape()) + " does not match '" +
                              name + "' " + shape_str(p.shape()));
      }
      std::copy(rec.values().begin(), rec.values().end(), p.data().begin());
    }
    const auto nslots = blob.at("optimizer_slots").get<std::size_t>();
    for (std::size_t i = 0; i < nslots; ++i) ck.optimizer_slots.push_back(detail::get_record<T>(r));
    if (r.remaining() != 0) throw CheckpointError("checkpoint has trailing bytes");
    return ck;
  } catch (const FormatError& e) {
    throw CheckpointError(std::string("checkpoint corrupt: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint corrupt: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint<T>(bytes, expected);
}

}  // namespace hdmnet
