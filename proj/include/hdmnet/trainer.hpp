#pragma once

// Training loop, optimizers, evaluation, noise sweeps and loss ablations.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hdmnet/dataset.hpp"
#include "hdmnet/losses.hpp"
#include "hdmnet/network.hpp"

namespace hdmnet {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { adam, sgd_momentum };
enum class Precision { float32, float64 };

inline const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

/// Raster side for an image of `image_side` pixels: the 99-cells-per-256
/// pixels ratio, rounded to the nearest odd integer.
inline std::size_t raster_side_for(std::size_t image_side) {
  const auto r = static_cast<std::size_t>(std::lround(double(image_side) * 99.0 / 256.0));
  return std::max<std::size_t>(3, r % 2 ? r : r + 1);
}

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;  // adam
  double momentum = 0.9;                              // sgd_momentum
  double weight_decay = 0.0;                          // off by default
  std::size_t lr_decay_every = 0;                     // epochs; 0 disables the step schedule
  double lr_decay_factor = 0.5;
  std::size_t early_stop_patience = 0;                // epochs without improvement; 0 disables
  std::size_t eval_period = 0;                        // evaluate the test split every k epochs; 0 disables
  bool init_surface_from_data = true;                 // head surface starts at the mean train surface
  LossConfig loss{};
  Precision precision = Precision::float32;
  std::uint64_t seed = 1;

  /// Desk defaults for a scene: raster matched to the image size.
  static TrainConfig for_scene(const SceneConfig& scene) {
    TrainConfig c;
    c.loss.raster_side = raster_side_for(scene.image_side);
    c.loss.fit_raster_to_image(scene.image_side);
    return c;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and non-negative");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0,1)");
    if (!(epsilon > 0)) throw ConfigError("adam epsilon must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0,1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
    if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be positive");
    try {
      loss.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"optimizer", optimizer_name(optimizer)},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"momentum", momentum},
            {"weight_decay", weight_decay},
            {"lr_decay_every", lr_decay_every},
            {"lr_decay_factor", lr_decay_factor},
            {"early_stop_patience", early_stop_patience},
            {"eval_period", eval_period},
            {"init_surface_from_data", init_surface_from_data},
            {"precision", precision == Precision::float32 ? "float32" : "float64"},
            {"seed", seed},
            {"loss",
             {{"w3d", loss.w3d},
              {"wiso", loss.wiso},
              {"wcont", loss.wcont},
              {"use_3d", loss.use_3d},
              {"use_iso", loss.use_iso},
              {"use_contour", loss.use_contour},
              {"sigma_gauss", loss.sigma_gauss},
              {"ksize", loss.ksize},
              {"raster_side", loss.raster_side},
              {"raster_scale", loss.raster_map.scale},
              {"raster_offset", loss.raster_map.offset},
              {"route", loss.route == RasterRoute::splat ? "splat" : "basis_warp"}}}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto choice = [](const nlohmann::json& v, std::initializer_list<const char*> allowed, const char* what) {
      const auto s = v.get<std::string>();
      for (const char* a : allowed)
        if (s == a) return s;
      throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
    };
    try {
      c.epochs = j.at("epochs").get<std::size_t>();
      c.batch_size = j.at("batch_size").get<std::size_t>();
      c.learning_rate = j.at("learning_rate").get<double>();
      c.optimizer = choice(j.at("optimizer"), {"adam", "sgd_momentum"}, "optimizer") == "adam" ? OptimizerKind::adam
                                                                                             : OptimizerKind::sgd_momentum;
      c.beta1 = j.at("beta1").get<double>();
      c.beta2 = j.at("beta2").get<double>();
      c.epsilon = j.at("epsilon").get<double>();
      c.momentum = j.at("momentum").get<double>();
      c.weight_decay = j.at("weight_decay").get<double>();
      c.lr_decay_every = j.at("lr_decay_every").get<std::size_t>();
      c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
      c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
      c.eval_period = j.at("eval_period").get<std::size_t>();
      c.init_surface_from_data = j.at("init_surface_from_data").get<bool>();
      c.precision = choice(j.at("precision"), {"float32", "float64"}, "precision") == "float32" ? Precision::float32
                                                                                                : Precision::float64;
      c.seed = j.at("seed").get<std::uint64_t>();
      const auto& l = j.at("loss");
      c.loss.w3d = l.at("w3d").get<double>();
      c.loss.wiso = l.at("wiso").get<double>();
      c.loss.wcont = l.at("wcont").get<double>();
      c.loss.use_3d = l.at("use_3d").get<bool>();
      c.loss.use_iso = l.at("use_iso").get<bool>();
      c.loss.use_contour = l.at("use_contour").get<bool>();
      c.loss.sigma_gauss = l.at("sigma_gauss").get<double>();
      c.loss.ksize = l.at("ksize").get<std::size_t>();
      c.loss.raster_side = l.at("raster_side").get<std::size_t>();
      c.loss.raster_map.scale = l.at("raster_scale").get<double>();
      c.loss.raster_map.offset = l.at("raster_offset").get<double>();
      c.loss.route = choice(l.at("route"), {"splat", "basis_warp"}, "raster route") == "splat" ? RasterRoute::splat
                                                                                              : RasterRoute::basis_warp;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed train config: ") + e.what());
    }
    return c;
  }
};

/// Adam or SGD with momentum over a model's parameter list. With a zero
/// gradient and zero state a step leaves parameters unchanged.
template <class T>
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t count) : cfg_(cfg), m_(count), v_(count) {}

  void step(typename Model<T>::Parameters& params, double lr) {
    ++t_;
    const double bc1 = 1 - std::pow(cfg_.beta1, double(t_)), bc2 = 1 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].second;
      const auto g = p.grad();
      auto w = p.data();
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.empty()) m.assign(w.size(), 0.0);
      if (cfg_.optimizer == OptimizerKind::adam && v.empty()) v.assign(w.size(), 0.0);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = double(g[i]) + cfg_.weight_decay * double(w[i]);
        if (cfg_.optimizer == OptimizerKind::adam) {
          m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
          v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
          const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
          w[i] = static_cast<T>(double(w[i]) - lr * update);
        } else {
          m[i] = cfg_.momentum * m[i] + gi;
          w[i] = static_cast<T>(double(w[i]) - lr * m[i]);
        }
      }
    }
  }

  std::uint64_t steps() const { return t_; }

  /// Moment buffers as named tensors, for checkpointing.
  std::vector<std::pair<std::string, Tensor<T>>> state(const typename Model<T>::Parameters& params) const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto put = [&](const std::string& tag, const std::vector<std::vector<double>>& buf) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (buf[k].empty()) continue;
        out.emplace_back(tag + "/" + params[k].first,
                         Tensor<T>(params[k].second.shape(), std::vector<T>(buf[k].begin(), buf[k].end())));
      }
    };
    put(cfg_.optimizer == OptimizerKind::adam ? "adam.m" : "sgd.velocity", m_);
    if (cfg_.optimizer == OptimizerKind::adam) put("adam.v", v_);
    return out;
  }

  nlohmann::json describe() const {
    return {{"kind", optimizer_name(cfg_.optimizer)}, {"steps", t_}, {"learning_rate", cfg_.learning_rate}};
  }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double total = 0;    // mean over batches of the weighted total loss
  double e3d = 0;      // weighted per-term means
  double iso = 0;
  double contour = 0;
  double learning_rate = 0;
  double seconds = 0;
  double eval_e3d = std::nan("");  // test-split e3d when evaluated this epoch
};

template <class T>
struct TrainResult {
  Model<T> model;
  std::vector<EpochRecord> history;
  std::uint64_t steps = 0;
  std::vector<std::pair<std::string, Tensor<T>>> optimizer_state;
  nlohmann::json optimizer = nlohmann::json::object();
};

/// Sets the head's bias surface to the mean training ground truth.
template <class T>
void initialize_output_surface(Model<T>& model, const DeformationDataset& ds) {
  const auto idx = ds.indices(Split::train);
  if (idx.empty()) throw ConfigError("dataset has an empty train split");
  auto& surface = model.parameter("head.surface");
  if (surface.numel() != ds.samples[idx[0]].surface.size()) {
    throw ConfigError("model grid_side " + std::to_string(model.config().grid_side) + " does not match dataset grid_side " +
                      std::to_string(ds.grid_side()));
  }
  std::vector<double> mean(surface.numel(), 0.0);
  for (auto i : idx)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += ds.samples[i].surface[k];
  auto out = surface.data();
  for (std::size_t k = 0; k < mean.size(); ++k) out[k] = static_cast<T>(mean[k] / double(idx.size()));
}

inline void check_compatible(const ModelConfig& m, const DeformationDataset& ds) {
  if (m.grid_side != ds.grid_side()) {
    throw ConfigError("model grid_side " + std::to_string(m.grid_side) + " does not match dataset grid_side " +
                      std::to_string(ds.grid_side()));
  }
  if (m.input_side != ds.image_side()) {
    throw ConfigError("model input_side " + std::to_string(m.input_side) + " does not match dataset image_side " +
                      std::to_string(ds.image_side()));
  }
}

struct GroupRow {
  std::size_t id = 0;
  std::string name;
  std::size_t frames = 0;
  double e3d_mean = 0, e3d_sigma = 0;
};

struct EvalReport {
  std::string split;
  bool aligned = true;
  std::size_t frames = 0;
  double e3d_mean = 0, e3d_sigma = 0;
  std::vector<double> per_frame;
  std::vector<GroupRow> per_texture, per_light;
  double loss_3d = 0, loss_iso = 0, loss_contour = 0;  // unweighted per-frame means
  double laplacian = 0;                                // mean Laplacian magnitude of predictions
  double ms_per_frame = 0;
  std::string timing_method = "steady-state mean forward time per frame, batch 1, excluding the first frame and all I/O";
};

struct NoiseRow {
  double fraction = 0;
  double e3d_mean = 0, e3d_sigma = 0;
};

namespace detail {

template <class T>
EvalReport evaluate_with(const std::function<Tensor<T>(const Tensor<T>&, std::size_t)>& predict,
                         const DeformationDataset& ds, Split split, bool align, const LossConfig& loss,
                         const std::function<Image(std::size_t)>& image_for) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw ConfigError(std::string("evaluation split '") + split_name(split) + "' is empty");
  const auto cam = ds.scene.camera();
  const std::size_t g = ds.grid_side();
  EvalReport r;
  r.split = split_name(split);
  r.aligned = align;
  r.frames = idx.size();
  std::map<std::size_t, std::vector<double>> by_tex, by_light;
  double timed = 0;
  std::size_t timed_frames = 0;
  NoGradGuard no_grad;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto& s = ds.samples[idx[n]];
    const auto images = image_to_tensor<T>(image_for(idx[n]));
    const auto t0 = std::chrono::steady_clock::now();
    const auto pred = predict(images, idx[n]);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (n > 0 || idx.size() == 1) {
      timed += dt;
      ++timed_frames;
    }
    const std::vector<double> p(pred.data().begin(), pred.data().end());
    const std::vector<double> gt(s.surface.begin(), s.surface.end());
    const double e = e3d_frame(p, gt, align);
    r.per_frame.push_back(e);
    by_tex[s.texture].push_back(e);
    by_light[s.light].push_back(e);
    r.laplacian += mean_laplacian_magnitude(p, g);
    const Tensor<double> pt(Shape{1, g, g, 3}, p), gtt(Shape{1, g, g, 3}, gt);
    r.loss_3d += loss_3d(pt, gtt).item();
    r.loss_iso += loss_iso(pt, loss).item();
    try {
      r.loss_contour += loss_contour(pt, gtt, cam, loss).item();
    } catch (const DegenerateDepthError&) {
      r.loss_contour = std::numeric_limits<double>::infinity();
    }
  }
  const double n = double(idx.size());
  std::tie(r.e3d_mean, r.e3d_sigma) = mean_and_sigma(r.per_frame);
  r.laplacian /= n;
  r.loss_3d /= n;
  r.loss_iso /= n;
  r.loss_contour /= n;
  r.ms_per_frame = timed_frames ? 1000.0 * timed / double(timed_frames) : 0.0;
  auto rows = [](const std::map<std::size_t, std::vector<double>>& groups, auto name_of) {
    std::vector<GroupRow> out;
    for (const auto& [id, vals] : groups) {
      const auto [m, sd] = mean_and_sigma(vals);
      out.push_back({id, name_of(id), vals.size(), m, sd});
    }
    return out;
  };
  r.per_texture = rows(by_tex, [&](std::size_t id) { return ds.scene.textures.at(id).name; });
  r.per_light = rows(by_light, [](std::size_t id) { return "light" + std::to_string(id); });
  return r;
}

}  // namespace detail

/// Runs `predict(images [1,3,S,S], sample index) -> [1,G,G,3]` over a split.
template <class T>
EvalReport evaluate_predictor(const std::function<Tensor<T>(const Tensor<T>&, std::size_t)>& predict,
                              const DeformationDataset& ds, Split split, bool align, const LossConfig& loss = {}) {
  return detail::evaluate_with<T>(predict, ds, split, align, loss, [&](std::size_t i) { return ds.samples[i].image; });
}

/// Per-frame e3d (with or without Procrustes alignment), grouped by texture
/// and light. The model is not modified.
template <class T>
EvalReport evaluate(const Model<T>& model, const DeformationDataset& ds, Split split, bool align,
                    const LossConfig& loss = {}) {
  check_compatible(model.config(), ds);
  return evaluate_predictor<T>([&](const Tensor<T>& x, std::size_t) { return model.forward(x); }, ds, split, align, loss);
}

/// Noise seed for one (sweep seed, fraction slot, sample) triple.
inline std::uint64_t noise_seed(std::uint64_t seed, std::size_t slot, std::size_t sample) {
  std::uint64_t h = seed * 0x9E3779B97F4A7C15ull + slot;
  h ^= (h >> 31) + sample * 0xBF58476D1CE4E5B9ull;
  return h ^ (h >> 29);
}

/// e3d on the test split with salt-and-pepper noise at each fraction.
template <class T>
std::vector<NoiseRow> noise_sweep(const Model<T>& model, const DeformationDataset& ds, const std::vector<double>& fractions,
                                  std::uint64_t seed, bool align = true, Split split = Split::test) {
  check_compatible(model.config(), ds);
  if (fractions.empty()) throw ParameterError("noise_sweep needs at least one fraction");
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!(fractions[k] >= 0 && fractions[k] <= 1)) throw ParameterError("noise fractions must lie in [0,1]");
    if (k && fractions[k] < fractions[k - 1]) throw ParameterError("noise fractions must be sorted ascending");
  }
  std::vector<NoiseRow> out;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    const double f = fractions[k];
    auto r = detail::evaluate_with<T>([&](const Tensor<T>& x, std::size_t) { return model.forward(x); }, ds, split, align,
                                      LossConfig{}, [&](std::size_t i) {
                                        return add_salt_pepper_noise(ds.samples[i].image, f, noise_seed(seed, k, i));
                                      });
    out.push_back({f, r.e3d_mean, r.e3d_sigma});
  }
  return out;
}

/// Mini-batch training on the train split. Deterministic for a given seed
/// and model; the model passed in is copied, not modified.
template <class T>
TrainResult<T> train(const Model<T>& initial, const DeformationDataset& ds, const TrainConfig& cfg,
                     std::ostream* log = nullptr) {
  cfg.validate();
  check_compatible(initial.config(), ds);
  const auto train_idx = ds.indices(Split::train);
  if (train_idx.empty()) throw ConfigError("dataset has an empty train split");
  TrainResult<T> res{initial, {}, 0, {}, {}};
  auto& model = res.model;
  const auto cam = ds.scene.camera();
  Optimizer<T> opt(cfg, model.parameters().size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = train_idx;
  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.lr_decay_every && epoch > 1 && (epoch - 1) % cfg.lr_decay_every == 0) lr *= cfg.lr_decay_factor;
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      const auto images = images_to_tensor<T>(ds, batch);
      const auto gt = surfaces_to_tensor<T>(ds, batch);
      auto describe = [&] {
        std::ostringstream os;
        os << "epoch " << epoch << ", batch " << start / cfg.batch_size << " (samples";
        for (auto i : batch) os << ' ' << i;
        os << ")";
        return os.str();
      };
      LossBreakdown<T> lb;
      try {
        lb = total_loss(model.forward(images), gt, cam, cfg.loss);
      } catch (const DegenerateDepthError& e) {
        throw DivergenceError("training diverged at " + describe() + ": " + e.what());
      }
      const double value = double(lb.total.item());
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "training diverged at " << describe() << ": loss = " << value;
        throw DivergenceError(os.str());
      }
      backward(lb.total);
      opt.step(model.parameters(), lr);
      for (auto& [name, p] : model.parameters()) p.zero_grad();
      rec.total += value;
      rec.e3d += lb.e3d;
      rec.iso += lb.iso;
      rec.contour += lb.contour;
      ++batches;
    }
    rec.total /= double(batches);
    rec.e3d /= double(batches);
    rec.iso /= double(batches);
    rec.contour /= double(batches);
    if (cfg.eval_period && epoch % cfg.eval_period == 0 && !ds.indices(Split::test).empty()) {
      rec.eval_e3d = evaluate(model, ds, Split::test, true, cfg.loss).e3d_mean;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(rec);
    if (log) {
      *log << "epoch " << epoch << " loss " << rec.total << " e3d_term " << rec.e3d << " iso_term " << rec.iso
           << " contour_term " << rec.contour << " lr " << lr << " seconds " << rec.seconds;
      if (!std::isnan(rec.eval_e3d)) *log << " eval_e3d " << rec.eval_e3d;
      *log << std::endl;
    }
    if (cfg.early_stop_patience) {
      if (rec.total < best) {
        best = rec.total;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        if (log) *log << "early stop after epoch " << epoch << std::endl;
        break;
      }
    }
  }
  res.steps = opt.steps();
  res.optimizer_state = opt.state(model.parameters());
  res.optimizer = opt.describe();
  return res;
}

/// Loss-term selection for one ablation arm; the 3D term is mandatory.
struct LossCombo {
  std::string name;
  bool use_iso = false;
  bool use_contour = false;

  static LossCombo parse(const std::string& spec);
  std::string canonical() const {
    std::string s = "3d";
    if (use_iso) s += ",iso";
    if (use_contour) s += ",cont";
    return s;
  }
};

/// Parses "3d[,iso][,cont]" (order-insensitive).
inline LossCombo LossCombo::parse(const std::string& spec) {
  LossCombo c;
  bool has_3d = false;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok == "3d") has_3d = true;
    else if (tok == "iso") c.use_iso = true;
    else if (tok == "cont" || tok == "con" || tok == "contour") c.use_contour = true;
    else throw ConfigError("unknown loss term '" + tok + "' (expected 3d, iso, cont)");
  }
  if (!has_3d) throw ConfigError("loss set '" + spec + "' must include the 3d term");
  c.name = c.canonical();
  return c;
}

inline void apply_combo(LossConfig& loss, const LossCombo& c) {
  loss.use_3d = true;
  loss.use_iso = c.use_iso;
  loss.use_contour = c.use_contour;
}

struct AblationRow {
  std::string combo;
  std::uint64_t init_hash = 0;
  double final_loss = 0;
  double e3d_mean = 0, e3d_sigma = 0;
  double laplacian = 0;
};

/// Trains one model per combo from the same initial parameters and
/// evaluates each on the test split.
template <class T>
std::vector<AblationRow> ablation_run(const DeformationDataset& ds, const std::vector<LossCombo>& combos,
                                      const ModelConfig& model_cfg, const TrainConfig& cfg, std::ostream* log = nullptr) {
  if (combos.empty()) throw ConfigError("ablation needs at least one combo");
  std::vector<AblationRow> rows;
  for (const auto& combo : combos) {
    Model<T> init(model_cfg);
    if (cfg.init_surface_from_data) initialize_output_surface(init, ds);
    TrainConfig arm = cfg;
    apply_combo(arm.loss, combo);
    if (log) *log << "ablation arm " << combo.name << std::endl;
    const auto result = train(init, ds, arm, log);
    const auto report = evaluate(result.model, ds, Split::test, true, arm.loss);
    rows.push_back({combo.name, init.parameter_hash(), result.history.back().total, report.e3d_mean, report.e3d_sigma,
                    report.laplacian});
  }
  return rows;
}

// ---------------------------------------------------------------- CSV

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// epoch,total,e3d_term,iso_term,contour_term,learning_rate,seconds,eval_e3d
inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,total,e3d_term,iso_term,contour_term,learning_rate,seconds,eval_e3d\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << csv_number(r.total) << ',' << csv_number(r.e3d) << ',' << csv_number(r.iso) << ','
       << csv_number(r.contour) << ',' << csv_number(r.learning_rate) << ',' << csv_number(r.seconds) << ','
       << (std::isnan(r.eval_e3d) ? std::string() : csv_number(r.eval_e3d)) << '\n';
  }
  return os.str();
}

/// table,key,label,frames,e3d_mean,e3d_sigma,value
inline std::string report_csv(const EvalReport& r, const std::vector<NoiseRow>& noise = {}) {
  std::ostringstream os;
  os << "table,key,label,frames,e3d_mean,e3d_sigma,value\n";
  os << "overall," << r.split << ',' << (r.aligned ? "aligned" : "unaligned") << ',' << r.frames << ','
     << csv_number(r.e3d_mean) << ',' << csv_number(r.e3d_sigma) << ",\n";
  for (const auto& g : r.per_texture)
    os << "texture," << g.id << ',' << g.name << ',' << g.frames << ',' << csv_number(g.e3d_mean) << ','
       << csv_number(g.e3d_sigma) << ",\n";
  for (const auto& g : r.per_light)
    os << "light," << g.id << ',' << g.name << ',' << g.frames << ',' << csv_number(g.e3d_mean) << ','
       << csv_number(g.e3d_sigma) << ",\n";
  for (const auto& n : noise)
    os << "noise," << csv_number(n.fraction) << ",salt_pepper," << r.frames << ',' << csv_number(n.e3d_mean) << ','
       << csv_number(n.e3d_sigma) << ",\n";
  auto metric = [&](const char* name, double v) { os << "summary," << name << ",,,,," << csv_number(v) << '\n'; };
  metric("loss_3d", r.loss_3d);
  metric("loss_iso", r.loss_iso);
  metric("loss_contour", r.loss_contour);
  metric("laplacian", r.laplacian);
  metric("ms_per_frame", r.ms_per_frame);
  return os.str();
}

/// combo,init_hash,final_loss,e3d_mean,e3d_sigma,laplacian
inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "combo,init_hash,final_loss,e3d_mean,e3d_sigma,laplacian\n";
  for (const auto& r : rows)
    os << '"' << r.combo << "\"," << hex64(r.init_hash) << ',' << csv_number(r.final_loss) << ',' << csv_number(r.e3d_mean)
       << ',' << csv_number(r.e3d_sigma) << ',' << csv_number(r.laplacian) << '\n';
  return os.str();
}

}  // namespace hdmnet
