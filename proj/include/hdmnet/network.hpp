#pragma once

// Convolutional encoder-decoder mapping an image batch [N,3,H,W] to surface
// grids [N,G,G,3]. No fully connected layers.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hdmnet/conv.hpp"
#include "hdmnet/io.hpp"
#include "hdmnet/tensor.hpp"
#include "json.hpp"

namespace hdmnet {

enum class Activation { relu, identity };

/// Adds the output of encoder stage `encoder` into decoder stage `decoder`.
struct SkipConnection {
  std::size_t encoder = 0;
  std::size_t decoder = 0;
  bool operator==(const SkipConnection&) const = default;
};

struct ModelConfig {
  std::size_t input_side = 64;
  std::size_t input_channels = 3;
  std::size_t grid_side = 17;
  std::vector<std::size_t> widths{16, 32, 64};  // one per encoder stage
  std::vector<SkipConnection> skips = mirrored_skips(3);
  Activation activation = Activation::relu;
  std::uint64_t seed = 1;

  static ModelConfig desk() { return {}; }
  static ModelConfig full() {
    ModelConfig c;
    c.input_side = 224;
    c.grid_side = 73;
    c.widths = {32, 64, 128};
    c.skips = mirrored_skips(3);
    return c;
  }
  static ModelConfig tiny() {
    ModelConfig c;
    c.input_side = 16;
    c.grid_side = 5;
    c.widths = {4, 8};
    c.skips = mirrored_skips(2);
    return c;
  }

  /// Every decoder stage receives the encoder stage of equal resolution.
  static std::vector<SkipConnection> mirrored_skips(std::size_t stages) {
    std::vector<SkipConnection> out;
    for (std::size_t d = 0; d + 1 < stages; ++d) out.push_back({stages - 2 - d, d});
    return out;
  }

  std::size_t stages() const { return widths.size(); }
  std::size_t latent_side() const { return input_side >> stages(); }
  std::size_t decoder_side() const { return stages() > 1 ? input_side / 2 : latent_side(); }
  /// Spatial side and channel count of encoder stage e's output.
  std::pair<std::size_t, std::size_t> encoder_output(std::size_t e) const {
    return {input_side >> (e + 1), widths.at(e)};
  }
  /// Spatial side and channel count of decoder stage d's output.
  std::pair<std::size_t, std::size_t> decoder_output(std::size_t d) const {
    return {latent_side() << (d + 1), widths.at(stages() - 2 - d)};
  }

  void validate() const {
    if (widths.empty()) throw ConfigError("model needs at least one encoder stage");
    for (auto w : widths)
      if (w == 0) throw ConfigError("model channel widths must be positive");
    if (input_channels == 0) throw ConfigError("input_channels must be positive");
    if (grid_side < 2) throw ConfigError("grid_side must be at least 2");
    if (stages() >= 31 || input_side == 0 || input_side % (std::size_t{1} << stages()) != 0) {
      throw ConfigError("input_side " + std::to_string(input_side) + " is not divisible by 2^" +
                        std::to_string(stages()));
    }
    if (decoder_side() < grid_side) {
      throw ConfigError("decoder output side " + std::to_string(decoder_side()) +
                        " is smaller than grid_side " + std::to_string(grid_side));
    }
    for (const auto& s : skips) {
      if (s.encoder >= stages() || s.decoder + 1 >= stages()) {
        throw ConfigError("skip " + std::to_string(s.encoder) + "->" + std::to_string(s.decoder) +
                          " refers to a missing stage");
      }
      if (encoder_output(s.encoder) != decoder_output(s.decoder)) {
        const auto [es, ec] = encoder_output(s.encoder);
        const auto [ds, dc] = decoder_output(s.decoder);
        throw ConfigError("skip " + std::to_string(s.encoder) + "->" + std::to_string(s.decoder) +
                          " joins " + std::to_string(ec) + "x" + std::to_string(es) + "x" +
                          std::to_string(es) + " with " + std::to_string(dc) + "x" +
                          std::to_string(ds) + "x" + std::to_string(ds));
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json skip_list = nlohmann::json::array();
    for (const auto& s : skips) skip_list.push_back({s.encoder, s.decoder});
    return {{"input_side", input_side},
            {"input_channels", input_channels},
            {"grid_side", grid_side},
            {"widths", widths},
            {"skips", skip_list},
            {"activation", activation == Activation::relu ? "relu" : "identity"},
            {"seed", seed}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.input_side = j.at("input_side").get<std::size_t>();
      c.input_channels = j.at("input_channels").get<std::size_t>();
      c.grid_side = j.at("grid_side").get<std::size_t>();
      c.widths = j.at("widths").get<std::vector<std::size_t>>();
      c.skips.clear();
      for (const auto& s : j.at("skips")) c.skips.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
      const auto act = j.at("activation").get<std::string>();
      if (act != "relu" && act != "identity") throw ConfigError("unknown activation '" + act + "'");
      c.activation = act == "relu" ? Activation::relu : Activation::identity;
      c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    return c;
  }

  std::uint64_t hash() const {
    const auto text = to_json().dump();
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  }

  bool operator==(const ModelConfig&) const = default;
};

/// One entry of the structural layer list.
struct LayerSpec {
  std::string name;
  std::string kind;  // conv, transposed_conv, bilinear_resize, bias_surface
  Shape output;      // per-sample output shape
};

/// Activation shapes recorded by forward(), keyed by stage name.
using ForwardTrace = std::vector<std::pair<std::string, Shape>>;

template <class T>
class Model {
 public:
  using value_type = T;
  using Parameters = std::vector<std::pair<std::string, Tensor<T>>>;

  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_layers();
    initialize();
  }

  // Copies are deep: the copy owns fresh parameter tensors.
  Model(const Model& other) : cfg_(other.cfg_), index_(other.index_), layers_(other.layers_) {
    for (const auto& [name, p] : other.params_)
      params_.emplace_back(name, Tensor<T>(p.shape(), p.values(), p.requires_grad()));
  }
  Model& operator=(const Model& other) {
    if (this != &other) *this = Model(other);
    return *this;
  }
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  Tensor<T>& parameter(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
    return params_[it->second].second;
  }
  const Tensor<T>& parameter(const std::string& name) const {
    return const_cast<Model*>(this)->parameter(name);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.numel();
    return n;
  }

  /// FNV-1a over parameter names and raw values in declaration order.
  std::uint64_t parameter_hash() const {
    std::uint64_t h = fnv1a64({});
    for (const auto& [name, p] : params_) {
      h = fnv1a64({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()}, h);
      h = fnv1a64(as_bytes_of(p.values()), h);
    }
    return h;
  }

  /// images [N,C,S,S] with values in [0,1] -> surfaces [N,G,G,3].
  Tensor<T> forward(const Tensor<T>& images, ForwardTrace* trace = nullptr) const {
    return forward(images, params_, trace);
  }

  /// Forward pass with externally supplied parameters of the same layout,
  /// e.g. leaves for a finite-difference check.
  Tensor<T> forward(const Tensor<T>& images, const Parameters& params, ForwardTrace* trace = nullptr) const {
    if (params.size() != params_.size()) {
      throw DimensionError("forward: expected " + std::to_string(params_.size()) + " parameters, got " +
                           std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].second.shape() != params_[i].second.shape()) {
        throw DimensionError("forward: parameter '" + params_[i].first + "' expects " +
                             shape_str(params_[i].second.shape()) + ", got " + shape_str(params[i].second.shape()));
      }
    }
    auto param = [&](const std::string& name) -> const Tensor<T>& { return params[index_.at(name)].second; };
    auto conv_layer = [&](const Tensor<T>& x, const std::string& name, std::size_t stride) {
      return activate(add_channel_bias(conv2d(x, param(name + ".weight"), stride, 1, stride > 1),
                                       param(name + ".bias")));
    };
    if (images.rank() != 4 || images.dim(1) != cfg_.input_channels || images.dim(2) != cfg_.input_side ||
        images.dim(3) != cfg_.input_side) {
      throw DimensionError("model expects images [N," + std::to_string(cfg_.input_channels) + "," +
                           std::to_string(cfg_.input_side) + "," + std::to_string(cfg_.input_side) +
                           "], got " + shape_str(images.shape()));
    }
    auto record = [trace](const std::string& name, const Tensor<T>& t) {
      if (trace) trace->emplace_back(name, Shape(t.shape().begin() + 1, t.shape().end()));
    };
    const std::size_t s = cfg_.stages();
    std::vector<Tensor<T>> encoded;
    Tensor<T> x = images;
    for (std::size_t e = 0; e < s; ++e) {
      const auto pre = "enc" + std::to_string(e);
      x = conv_layer(x, pre + ".conv_a", 1);
      x = conv_layer(x, pre + ".conv_b", 2);
      record(pre, x);
      encoded.push_back(x);
    }
    record("latent", x);
    for (std::size_t d = 0; d + 1 < s; ++d) {
      const auto pre = "dec" + std::to_string(d);
      x = add_channel_bias(transposed_conv2d(x, param(pre + ".up.weight"), 2, 1), param(pre + ".up.bias"));
      for (const auto& sk : cfg_.skips)
        if (sk.decoder == d) x = add(x, encoded[sk.encoder]);
      x = activate(x);
      x = conv_layer(x, pre + ".conv", 1);
      record(pre, x);
    }
    x = conv2d(x, param("head.conv.weight"), 1, 1);
    record("head.conv", x);
    x = bilinear_resize(x, cfg_.grid_side, cfg_.grid_side);
    record("head.resample", x);
    auto out = add_broadcast_leading(nchw_to_nhwc(x), param("head.surface"));
    record("output", out);
    return out;
  }

  /// Copy with the same configuration and parameter values in another precision.
  template <class U>
  Model<U> cast() const {
    Model<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = params_[i].second;
      auto& dst = out.parameters()[i].second;
      auto d = dst.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<U>(src[k]);
    }
    return out;
  }

  /// Copies parameter values (not graph state) from a model of equal layout.
  void assign_parameters(const Model& other) {
    if (!(other.cfg_ == cfg_)) throw ConfigError("assign_parameters: configurations differ");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto d = params_[i].second.data();
      const auto& s = other.params_[i].second.values();
      std::copy(s.begin(), s.end(), d.begin());
    }
  }

 private:
  Tensor<T> activate(const Tensor<T>& x) const {
    return cfg_.activation == Activation::relu ? relu(x) : x;
  }

  void add_param(const std::string& name, Shape shape) {
    index_[name] = params_.size();
    params_.emplace_back(name, Tensor<T>::zeros(std::move(shape), true));
  }

  void build_layers() {
    const std::size_t s = cfg_.stages();
    std::size_t in = cfg_.input_channels, side = cfg_.input_side;
    for (std::size_t e = 0; e < s; ++e) {
      const auto pre = "enc" + std::to_string(e);
      const std::size_t w = cfg_.widths[e];
      add_param(pre + ".conv_a.weight", {w, in, 3, 3});
      add_param(pre + ".conv_a.bias", {w});
      layers_.push_back({pre + ".conv_a", "conv", {w, side, side}});
      side /= 2;
      add_param(pre + ".conv_b.weight", {w, w, 3, 3});
      add_param(pre + ".conv_b.bias", {w});
      layers_.push_back({pre + ".conv_b", "conv", {w, side, side}});
      in = w;
    }
    for (std::size_t d = 0; d + 1 < s; ++d) {
      const auto pre = "dec" + std::to_string(d);
      const std::size_t w = cfg_.widths[s - 2 - d];
      side *= 2;
      add_param(pre + ".up.weight", {in, w, 4, 4});
      add_param(pre + ".up.bias", {w});
      layers_.push_back({pre + ".up", "transposed_conv", {w, side, side}});
      add_param(pre + ".conv.weight", {w, w, 3, 3});
      add_param(pre + ".conv.bias", {w});
      layers_.push_back({pre + ".conv", "conv", {w, side, side}});
      in = w;
    }
    add_param("head.conv.weight", {3, in, 3, 3});
    layers_.push_back({"head.conv", "conv", {3, side, side}});
    const std::size_t g = cfg_.grid_side;
    layers_.push_back({"head.resample", "bilinear_resize", {3, g, g}});
    add_param("head.surface", {g, g, 3});
    layers_.push_back({"head.surface", "bias_surface", {g, g, 3}});
  }

  // He-style normal init, std = sqrt(2 / fan_in); biases and the bias surface
  // start at zero.
  void initialize() {
    std::mt19937_64 rng(cfg_.seed);
    for (auto& [name, p] : params_) {
      if (p.rank() != 4) continue;
      const bool transposed = name.find(".up.") != std::string::npos;
      // A stride-2 transposed conv feeds each output from a quarter of the taps.
      const double fan_in = transposed ? double(p.dim(0) * p.dim(2) * p.dim(3)) / 4.0
                                       : double(p.dim(1) * p.dim(2) * p.dim(3));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : p.data()) v = static_cast<T>(dist(rng));
    }
  }

  ModelConfig cfg_;
  Parameters params_;
  std::map<std::string, std::size_t> index_;
  std::vector<LayerSpec> layers_;
};

template <class T = double>
Model<T> build_model(const ModelConfig& cfg) {
  return Model<T>(cfg);
}

}  // namespace hdmnet
