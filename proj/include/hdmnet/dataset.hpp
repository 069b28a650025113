#pragma once

// Rendered deformation datasets, their train/test split, salt-and-pepper
// corruption and the HDMD container.
//
// HDMD layout (little-endian):
//   "HDMD" | u32 version | u64 metadata length | metadata JSON | u32 CRC32(metadata)
//   then one record per sample, in index order:
//   image (side*side*3 bytes RGB) | surface (G*G*3 float32) | u32 CRC32(image + surface)
// The metadata holds the scene config echo and a sample table whose rows
// are [byte offset, state, texture, light, camera, split].

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hdmnet/deform.hpp"
#include "hdmnet/io.hpp"
#include "hdmnet/parallel.hpp"
#include "hdmnet/render.hpp"

namespace hdmnet {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { train = 0, test = 1 };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct Sample {
  std::size_t state = 0, texture = 0, light = 0, camera = 0;
  Split split = Split::train;
  Image image;
  std::vector<float> surface;  // G*G*3
  bool operator==(const Sample&) const = default;
};

struct DeformationDataset {
  SceneConfig scene;
  std::vector<Sample> samples;

  std::size_t image_side() const { return scene.image_side; }
  std::size_t grid_side() const { return scene.grid_side; }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == s) out.push_back(i);
    return out;
  }
  std::size_t count(Split s) const { return indices(s).size(); }
};

/// Sample index of (state, texture, light, camera) in generation order.
inline std::size_t sample_index(const SceneConfig& c, std::size_t s, std::size_t t, std::size_t l, std::size_t cam) {
  return ((s * c.textures.size() + t) * c.lights.size() + l) * c.poses.size() + cam;
}

/// Tags samples: the last test_len states of every `period`-state window are
/// test, as is everything with the holdout texture or light.
inline void split_train_test(DeformationDataset& ds, const SplitPattern& pattern, std::size_t holdout_texture,
                             std::size_t holdout_light) {
  if (pattern.test_len < 1 || pattern.period <= pattern.test_len) {
    throw ConfigError("split pattern needs period > test_len >= 1, got period " + std::to_string(pattern.period) +
                      ", test_len " + std::to_string(pattern.test_len));
  }
  std::size_t train = 0;
  for (auto& s : ds.samples) {
    const bool by_time = s.state % pattern.period >= pattern.period - pattern.test_len;
    const bool held = s.texture == holdout_texture || s.light == holdout_light;
    s.split = by_time || held ? Split::test : Split::train;
    train += s.split == Split::train;
  }
  if (train == 0) throw ConfigError("split leaves the train partition empty");
  if (train == ds.samples.size()) throw ConfigError("split leaves the test partition empty");
}

/// Sets exactly round(fraction * pixels) distinct pixels to black or white.
inline Image add_salt_pepper_noise(const Image& img, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ParameterError("salt-and-pepper fraction must lie in [0,1], got " + std::to_string(fraction));
  }
  Image out = img;
  const std::size_t pixels = img.pixels();
  const auto count = static_cast<std::size_t>(std::llround(fraction * double(pixels)));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(pixels);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pixels - 1);
    std::swap(order[k], order[pick(rng)]);
    const std::uint8_t v = (rng() >> 63) ? 255 : 0;
    for (std::size_t c = 0; c < 3; ++c) out.rgb[order[k] * 3 + c] = v;
  }
  return out;
}

/// Synthesizes, renders and splits the full dataset. Rendering runs in
/// parallel; results land in index order.
inline DeformationDataset generate_dataset(const SceneConfig& cfg) {
  cfg.validate();
  const auto states = synthesize_deformations(cfg);
  std::vector<Texture> textures;
  for (const auto& spec : cfg.textures) textures.push_back(materialize_texture(spec));

  DeformationDataset ds{cfg, std::vector<Sample>(cfg.sample_count())};
  parallel_for(cfg.sample_count(), [&](std::size_t idx) {
    std::size_t rest = idx;
    const std::size_t cam = rest % cfg.poses.size();
    rest /= cfg.poses.size();
    const std::size_t light = rest % cfg.lights.size();
    rest /= cfg.lights.size();
    const std::size_t tex = rest % cfg.textures.size();
    const std::size_t state = rest / cfg.textures.size();
    const auto frame = states.frame(state);
    Sample& s = ds.samples[idx];
    s.state = state;
    s.texture = tex;
    s.light = light;
    s.camera = cam;
    s.image = render_frame(frame, cfg.poses[cam], cfg.lights[light], textures[tex], cfg);
    s.surface.assign(frame.begin(), frame.end());
  });
  split_train_test(ds, cfg.split, cfg.holdout_texture, cfg.holdout_light);
  return ds;
}

/// Images [N,3,S,S] scaled to [0,1].
template <class T>
Tensor<T> images_to_tensor(const DeformationDataset& ds, std::span<const std::size_t> idx,
                           std::span<const Image> override_images = {}) {
  const std::size_t side = ds.image_side(), plane = side * side;
  std::vector<T> out(idx.size() * 3 * plane);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Image& img = override_images.empty() ? ds.samples[idx[b]].image : override_images[b];
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) out[(b * 3 + c) * plane + p] = T(img.rgb[p * 3 + c]) / T(255);
  }
  return Tensor<T>(Shape{idx.size(), 3, side, side}, std::move(out));
}

template <class T>
Tensor<T> image_to_tensor(const Image& img) {
  const std::size_t plane = img.side * img.side;
  std::vector<T> out(3 * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = T(img.rgb[p * 3 + c]) / T(255);
  return Tensor<T>(Shape{1, 3, img.side, img.side}, std::move(out));
}

/// Surfaces [N,G,G,3].
template <class T>
Tensor<T> surfaces_to_tensor(const DeformationDataset& ds, std::span<const std::size_t> idx) {
  const std::size_t g = ds.grid_side(), n = g * g * 3;
  std::vector<T> out(idx.size() * n);
  for (std::size_t b = 0; b < idx.size(); ++b)
    std::copy(ds.samples[idx[b]].surface.begin(), ds.samples[idx[b]].surface.end(), out.begin() + b * n);
  return Tensor<T>(Shape{idx.size(), g, g, 3}, std::move(out));
}

// ---------------------------------------------------------------- HDMD I/O

inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {
inline std::size_t record_payload(const SceneConfig& c) {
  return c.image_side * c.image_side * 3 + c.grid_side * c.grid_side * 3 * sizeof(float);
}
}  // namespace detail

inline std::vector<std::uint8_t> encode_dataset(const DeformationDataset& ds) {
  const std::size_t payload = detail::record_payload(ds.scene);
  for (const auto& s : ds.samples) {
    if (s.image.side != ds.scene.image_side || s.image.rgb.size() != s.image.side * s.image.side * 3 ||
        s.surface.size() != ds.scene.grid_side * ds.scene.grid_side * 3) {
      throw DatasetError("sample does not match the scene's image_side/grid_side");
    }
  }
  // The table stores absolute offsets, which depend on the metadata length;
  // iterate until the length is stable.
  nlohmann::json meta;
  std::string text;
  std::size_t header = 0;
  for (int pass = 0; pass < 8; ++pass) {
    nlohmann::json table = nlohmann::json::array();
    const std::size_t first = 4 + 4 + 8 + text.size() + 4;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& s = ds.samples[i];
      table.push_back({first + i * (payload + 4), s.state, s.texture, s.light, s.camera, split_name(s.split)});
    }
    meta = {{"scene", ds.scene.to_json()},
            {"image_side", ds.scene.image_side},
            {"grid_side", ds.scene.grid_side},
            {"record_bytes", payload + 4},
            {"samples", table}};
    auto next = meta.dump();
    if (next.size() == text.size()) {
      text = std::move(next);
      header = first;
      break;
    }
    text = std::move(next);
  }
  if (header == 0) throw DatasetError("could not lay out dataset metadata");

  ByteWriter w;
  w.put_string("HDMD");
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint64_t>(text.size());
  w.put_string(text);
  w.put<std::uint32_t>(crc32({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}));
  for (const auto& s : ds.samples) {
    const std::size_t start = w.size();
    w.put_bytes(s.image.rgb);
    w.put_array<float>(s.surface);
    w.put<std::uint32_t>(crc32(std::span(w.bytes()).subspan(start, payload)));
  }
  return w.take();
}

inline void write_dataset(const DeformationDataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dataset(ds));
}

/// Random-access reader: parses the header and sample table, then reads
/// individual records on demand.
class DatasetReader {
 public:
  struct Entry {
    std::uint64_t offset;
    std::size_t state, texture, light, camera;
    Split split;
  };

  explicit DatasetReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DatasetError("cannot open dataset " + path.string());
    char magic[4];
    read_exact(magic, 4, "magic");
    if (std::string(magic, 4) != "HDMD") throw DatasetError(path.string() + " is not an HDMD dataset (bad magic)");
    std::uint8_t head[12];
    read_exact(head, 12, "header");
    ByteReader hr(head);
    if (const auto v = hr.get<std::uint32_t>(); v != kDatasetVersion) {
      throw DatasetError("unsupported dataset version " + std::to_string(v));
    }
    const auto len = hr.get<std::uint64_t>();
    if (len > (std::uint64_t{1} << 34)) throw DatasetError("dataset metadata length is implausible");
    std::string text(len, '\0');
    read_exact(text.data(), len, "metadata");
    std::uint8_t crc_bytes[4];
    read_exact(crc_bytes, 4, "metadata CRC");
    if (ByteReader(crc_bytes).get<std::uint32_t>() != crc32({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()})) {
      throw DatasetError("dataset metadata CRC mismatch");
    }
    try {
      const auto meta = nlohmann::json::parse(text);
      scene_ = SceneConfig::from_json(meta.at("scene"));
      record_bytes_ = meta.at("record_bytes");
      if (record_bytes_ != detail::record_payload(scene_) + 4) throw DatasetError("dataset record size disagrees with its scene");
      for (const auto& row : meta.at("samples")) {
        const auto tag = row.at(5).get<std::string>();
        if (tag != "train" && tag != "test") throw DatasetError("unknown split tag '" + tag + "'");
        entries_.push_back({row.at(0), row.at(1), row.at(2), row.at(3), row.at(4), tag == "train" ? Split::train : Split::test});
      }
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(std::string("malformed dataset metadata: ") + e.what());
    } catch (const ConfigError& e) {
      throw DatasetError(std::string("malformed dataset metadata: ") + e.what());
    }
  }

  const SceneConfig& scene() const { return scene_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  Sample read(std::size_t k) {
    if (k >= entries_.size()) throw DatasetError("sample index " + std::to_string(k) + " out of range");
    const auto& e = entries_[k];
    std::vector<std::uint8_t> buf(record_bytes_);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(e.offset));
    read_exact(buf.data(), buf.size(), "sample record");
    const std::size_t payload = record_bytes_ - 4;
    ByteReader r(buf);
    Sample s{e.state, e.texture, e.light, e.camera, e.split, {}, {}};
    const std::size_t img_bytes = scene_.image_side * scene_.image_side * 3;
    const auto img = r.get_bytes(img_bytes);
    s.image = {scene_.image_side, {img.begin(), img.end()}};
    s.surface = r.get_array<float>(scene_.grid_side * scene_.grid_side * 3);
    if (r.get<std::uint32_t>() != crc32(std::span(buf).first(payload))) {
      throw DatasetError("CRC mismatch in sample " + std::to_string(k));
    }
    return s;
  }

 private:
  void read_exact(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DatasetError(std::string("dataset truncated while reading ") + what + " in " + path_.string());
    }
  }

  std::filesystem::path path_;
  std::ifstream in_;
  SceneConfig scene_;
  std::size_t record_bytes_ = 0;
  std::vector<Entry> entries_;
};

inline DeformationDataset read_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  DeformationDataset ds{reader.scene(), {}};
  ds.samples.reserve(reader.size());
  for (std::size_t k = 0; k < reader.size(); ++k) ds.samples.push_back(reader.read(k));
  return ds;
}

}  // namespace hdmnet
