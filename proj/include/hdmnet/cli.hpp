#pragma once

// The `hdmnet` command-line tool: generate, train, eval, infer, ablate and
// gradcheck. Exit codes: 0 success, 1 verification failure, 2 usage or
// configuration error, 3 numerical divergence.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>

#include "hdmnet/checkpoint.hpp"
#include "hdmnet/config.hpp"
#include "hdmnet/export.hpp"
#include "hdmnet/gradcheck_suite.hpp"
#include "hdmnet/trainer.hpp"

namespace hdmnet {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitVerification = 1, kExitUsage = 2, kExitDivergence = 3 };

/// A run that completed but whose checks did not pass.
struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cli {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  auto out = p;
  out += suffix;
  return out;
}

/// Run record written next to every artifact.
class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) : started_(utc_now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = kToolVersion;
    doc_["argv"] = std::vector<std::string>(argv, argv + argc);
    doc_["inputs"] = nlohmann::json::object();
    doc_["outputs"] = nlohmann::json::object();
  }
  void config(const nlohmann::json& c) { doc_["config"] = c; }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void set(const std::string& key, const nlohmann::json& v) { doc_[key] = v; }
  void input(const std::filesystem::path& p) { doc_["inputs"][p.string()] = file_hash(p); }
  void output(const std::filesystem::path& p) { doc_["outputs"][p.string()] = file_hash(p); }

  /// Writes `<primary>.manifest.json`.
  std::filesystem::path write(const std::filesystem::path& primary) {
    doc_["started_utc"] = started_;
    doc_["finished_utc"] = utc_now();
    const auto path = sibling(primary, ".manifest.json");
    write_text_atomic(path, doc_.dump(2) + "\n");
    return path;
  }

 private:
  nlohmann::json doc_;
  std::string started_;
};

struct ConfigOptions {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value configuration file");
    app->add_option("--set", sets, "override one setting, KEY=VALUE (repeatable)");
  }

  std::vector<ConfigEntry> entries() const {
    std::vector<ConfigEntry> out;
    if (!file.empty()) out = read_config_file(file);
    for (const auto& s : sets) out.push_back(parse_assignment(s, "--set"));
    return out;
  }
};

/// Drops scene keys: the dataset fixes the scene for every command but generate.
inline std::vector<ConfigEntry> without_scene(std::vector<ConfigEntry> entries) {
  std::erase_if(entries, [](const ConfigEntry& e) { return e.key == "scene" || e.key.rfind("scene.", 0) == 0; });
  return entries;
}

inline DeformationDataset load_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("--data is required");
  if (!std::filesystem::exists(path)) throw ConfigError("dataset not found: " + path);
  return read_dataset(path);
}

inline std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw ConfigError("bad noise fraction '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--noise needs at least one fraction");
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!(out[k] >= 0 && out[k] <= 1)) throw ConfigError("noise fractions must lie in [0,1]");
    if (k && out[k] < out[k - 1]) throw ConfigError("noise fractions must be sorted ascending");
  }
  return out;
}

struct LoadedModel {
  Model<double> model;
  Precision precision = Precision::float32;
  nlohmann::json optimizer;
};

inline LoadedModel load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path);
  auto ck = load_checkpoint<double>(path);
  LoadedModel out{std::move(ck.model), Precision::float32, ck.optimizer};
  if (ck.optimizer.contains("train") && ck.optimizer["train"].value("precision", "float32") == "float64") {
    out.precision = Precision::float64;
  }
  return out;
}

/// Runs `fn(model)` with the model in the checkpoint's training precision.
template <class Fn>
auto with_precision(const LoadedModel& m, Fn&& fn) {
  if (m.precision == Precision::float64) return fn(m.model);
  return fn(m.model.cast<float>());
}

inline void print_report(std::ostream& out, const EvalReport& r, const std::vector<NoiseRow>& noise) {
  out << std::fixed << std::setprecision(4);
  out << "e3d " << r.e3d_mean << " +- " << r.e3d_sigma << "  (" << r.split << " split, "
      << (r.aligned ? "aligned" : "unaligned") << ", " << r.frames << " frames)\n";
  out << "texture          frames  e3d      sigma\n";
  for (const auto& g : r.per_texture)
    out << std::left << std::setw(16) << g.name << std::right << std::setw(7) << g.frames << "  " << g.e3d_mean << "  "
        << g.e3d_sigma << '\n';
  out << "light            frames  e3d      sigma\n";
  for (const auto& g : r.per_light)
    out << std::left << std::setw(16) << g.name << std::right << std::setw(7) << g.frames << "  " << g.e3d_mean << "  "
        << g.e3d_sigma << '\n';
  for (const auto& n : noise) out << "noise " << n.fraction << "  e3d " << n.e3d_mean << " +- " << n.e3d_sigma << '\n';
  out << "loss terms (per frame): 3d " << r.loss_3d << "  iso " << r.loss_iso << "  contour " << r.loss_contour << '\n';
  out << "mean laplacian " << r.laplacian << '\n';
  out << std::setprecision(3) << "inference " << r.ms_per_frame << " ms/frame (" << r.timing_method << ")\n";
  out << std::defaultfloat;
}

// ---------------------------------------------------------------- commands

struct GenerateArgs {
  ConfigOptions config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_generate(const GenerateArgs& a, int argc, char** argv, std::ostream& out) {
  auto entries = a.config.entries();
  if (a.seed) entries.push_back({"scene.seed", *a.seed, "--seed"});
  const auto cfg = resolve_config(entries);
  Manifest manifest("generate", argc, argv);
  manifest.config({{"scene", cfg.scene.to_json()}});
  manifest.seed(cfg.scene.seed);
  const auto ds = generate_dataset(cfg.scene);
  write_dataset(ds, a.out);
  manifest.output(a.out);
  manifest.set("samples", {{"total", ds.samples.size()}, {"train", ds.count(Split::train)}, {"test", ds.count(Split::test)}});
  manifest.write(a.out);
  out << "states " << cfg.scene.num_states << "  textures " << cfg.scene.textures.size() << "  lights "
      << cfg.scene.lights.size() << "  cameras " << cfg.scene.poses.size() << '\n';
  out << "samples " << ds.samples.size() << "  train " << ds.count(Split::train) << "  test " << ds.count(Split::test)
      << '\n';
  out << "wrote " << a.out << " (" << file_hash(a.out) << ")\n";
  return kExitOk;
}

struct TrainArgs {
  ConfigOptions config;
  std::string data, out, losses, log;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
};

inline std::vector<ConfigEntry> train_entries(const TrainArgs& a) {
  auto entries = without_scene(a.config.entries());
  if (a.epochs) entries.push_back({"train.epochs", *a.epochs, "--epochs"});
  if (a.batch_size) entries.push_back({"train.batch_size", *a.batch_size, "--batch-size"});
  if (a.lr) entries.push_back({"train.learning_rate", *a.lr, "--lr"});
  if (a.seed) {
    entries.push_back({"train.seed", *a.seed, "--seed"});
    entries.push_back({"model.seed", *a.seed, "--seed"});
  }
  if (!a.losses.empty()) {
    const auto combo = LossCombo::parse(a.losses);
    entries.push_back({"train.loss.use_3d", true, "--losses"});
    entries.push_back({"train.loss.use_iso", combo.use_iso, "--losses"});
    entries.push_back({"train.loss.use_contour", combo.use_contour, "--losses"});
  }
  return entries;
}

template <class T>
int train_with(const DeformationDataset& ds, const RunConfig& cfg, const TrainArgs& a, Manifest& manifest,
               std::ostream& out) {
  Model<T> init(cfg.model);
  if (cfg.train.init_surface_from_data) initialize_output_surface(init, ds);
  manifest.set("initial_parameter_hash", hex64(init.parameter_hash()));
  const auto log_path = a.log.empty() ? sibling(a.out, ".log") : std::filesystem::path(a.log);
  std::ostringstream log;
  struct Tee : std::streambuf {
    std::streambuf *a, *b;
    Tee(std::streambuf* x, std::streambuf* y) : a(x), b(y) {}
    int overflow(int c) override {
      if (c == EOF) return !EOF;
      return a->sputc(char(c)) == EOF || b->sputc(char(c)) == EOF ? EOF : c;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee(log.rdbuf(), out.rdbuf());
  std::ostream both(&tee);
  TrainResult<T> res{init, {}, 0, {}, {}};
  try {
    res = train(init, ds, cfg.train, &both);
  } catch (const DivergenceError&) {
    write_text_atomic(log_path, log.str());
    throw;
  }
  nlohmann::json opt = {{"train", cfg.train.to_json()}, {"state", res.optimizer}};
  save_checkpoint(a.out, res.model, res.steps, opt, res.optimizer_state);
  const auto history = sibling(a.out, ".history.csv");
  write_text_atomic(history, history_csv(res.history));
  write_text_atomic(log_path, log.str());
  for (const auto& p : {std::filesystem::path(a.out), history, log_path}) manifest.output(p);
  manifest.set("final_parameter_hash", hex64(res.model.parameter_hash()));
  manifest.set("steps", res.steps);
  manifest.write(a.out);
  out << "wrote " << a.out << " (" << file_hash(a.out) << ") after " << res.steps << " steps\n";
  return kExitOk;
}

inline int cmd_train(const TrainArgs& a, int argc, char** argv, std::ostream& out) {
  const auto ds = load_dataset(a.data);
  RunConfig base;
  base.scene = ds.scene;
  const auto cfg = resolve_config(train_entries(a), base);
  Manifest manifest("train", argc, argv);
  manifest.config(cfg.to_json());
  manifest.seed(cfg.train.seed);
  manifest.input(a.data);
  return cfg.train.precision == Precision::float64 ? train_with<double>(ds, cfg, a, manifest, out)
                                                   : train_with<float>(ds, cfg, a, manifest, out);
}

struct EvalArgs {
  std::string data, checkpoint, split = "test", noise, out;
  std::uint64_t noise_seed = 1;
  bool unaligned = false;
};

inline int cmd_eval(const EvalArgs& a, int argc, char** argv, std::ostream& out) {
  if (a.split != "test" && a.split != "train") throw ConfigError("--split must be test or train");
  const auto ds = load_dataset(a.data);
  const auto loaded = load_model(a.checkpoint);
  check_compatible(loaded.model.config(), ds);
  const auto fractions = a.noise.empty() ? std::vector<double>{} : parse_fractions(a.noise);
  const Split split = a.split == "test" ? Split::test : Split::train;
  LossConfig loss = TrainConfig::for_scene(ds.scene).loss;
  if (loaded.optimizer.contains("train")) loss = TrainConfig::from_json(loaded.optimizer["train"]).loss;
  auto [report, noise] = with_precision(loaded, [&](const auto& model) {
    auto r = evaluate(model, ds, split, !a.unaligned, loss);
    std::vector<NoiseRow> n;
    if (!fractions.empty()) n = noise_sweep(model, ds, fractions, a.noise_seed, !a.unaligned, split);
    return std::make_pair(r, n);
  });
  print_report(out, report, noise);
  if (!a.out.empty()) {
    Manifest manifest("eval", argc, argv);
    manifest.input(a.data);
    manifest.input(a.checkpoint);
    manifest.config({{"split", a.split}, {"aligned", !a.unaligned}, {"noise", fractions}, {"noise_seed", a.noise_seed}});
    manifest.seed(a.noise_seed);
    write_text_atomic(a.out, report_csv(report, noise));
    manifest.output(a.out);
    manifest.write(a.out);
    out << "wrote " << a.out << '\n';
  }
  return kExitOk;
}

struct InferArgs {
  std::string checkpoint, image, data, out, obj, raster;
  std::optional<std::size_t> index;
};

inline int cmd_infer(const InferArgs& a, int argc, char** argv, std::ostream& out) {
  const auto loaded = load_model(a.checkpoint);
  const auto& mc = loaded.model.config();
  if (a.image.empty() == !a.index.has_value()) throw ConfigError("give either --image or --data with --index");
  Image img;
  std::optional<Sample> sample;
  SceneConfig scene = SceneConfig::desk();
  scene.image_side = mc.input_side;
  scene.grid_side = mc.grid_side;
  if (!a.image.empty()) {
    if (!std::filesystem::exists(a.image)) throw ConfigError("image not found: " + a.image);
    try {
      img = decode_ppm(read_file(a.image));
    } catch (const FormatError& e) {
      throw ConfigError(std::string("bad image: ") + e.what());
    }
  } else {
    if (a.data.empty()) throw ConfigError("--index needs --data");
    if (!std::filesystem::exists(a.data)) throw ConfigError("dataset not found: " + a.data);
    DatasetReader reader(a.data);
    if (*a.index >= reader.size()) throw ConfigError("--index " + std::to_string(*a.index) + " out of range");
    sample = reader.read(*a.index);
    scene = reader.scene();
    img = sample->image;
  }
  if (img.side != mc.input_side) {
    throw ConfigError("image is " + std::to_string(img.side) + "x" + std::to_string(img.side) + ", model expects " +
                      std::to_string(mc.input_side) + "x" + std::to_string(mc.input_side));
  }
  const std::size_t g = mc.grid_side;
  auto [xyz, ms] = with_precision(loaded, [&](const auto& model) {
    using T = typename std::decay_t<decltype(model)>::value_type;
    NoGradGuard no_grad;
    const auto x = image_to_tensor<T>(img);
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = model.forward(x);
    const double ms = 1000.0 * std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::make_pair(std::vector<float>(y.data().begin(), y.data().end()), ms);
  });
  Manifest manifest("infer", argc, argv);
  manifest.input(a.checkpoint);
  manifest.input(a.image.empty() ? a.data : a.image);
  if (a.index) manifest.set("index", *a.index);
  write_file_atomic(a.out, encode_surface(xyz, g));
  manifest.output(a.out);
  const std::vector<double> pred(xyz.begin(), xyz.end());
  if (!a.obj.empty()) {
    write_text_atomic(a.obj, surface_obj(xyz, g));
    manifest.output(a.obj);
  }
  if (!a.raster.empty()) {
    LossConfig loss = TrainConfig::for_scene(scene).loss;
    const auto r = soft_rasterize(project(Tensor<double>(Shape{g, g, 3}, pred), scene.camera()), loss);
    write_file_atomic(a.raster, encode_pgm(r.data(), loss.raster_side));
    manifest.output(a.raster);
  }
  manifest.set("inference_ms", ms);
  manifest.write(a.out);
  out << "inference " << std::fixed << std::setprecision(3) << ms << " ms (single forward pass, batch 1)\n";
  if (sample) {
    const std::vector<double> gt(sample->surface.begin(), sample->surface.end());
    out << "e3d vs ground truth " << std::setprecision(5) << e3d_frame(pred, gt, true) << " aligned, "
        << e3d_frame(pred, gt, false) << " unaligned\n";
  }
  out << std::defaultfloat << "wrote " << a.out << '\n';
  return kExitOk;
}

struct AblateArgs {
  ConfigOptions config;
  std::string data, out, combos = "3d;3d,cont;3d,iso;3d,iso,cont";
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

inline int cmd_ablate(const AblateArgs& a, int argc, char** argv, std::ostream& out) {
  const auto ds = load_dataset(a.data);
  std::vector<LossCombo> combos;
  std::stringstream ss(a.combos);
  std::string tok;
  while (std::getline(ss, tok, ';'))
    if (!trim(tok).empty()) combos.push_back(LossCombo::parse(tok));
  if (combos.empty()) throw ConfigError("--combos is empty");
  auto entries = without_scene(a.config.entries());
  if (a.epochs) entries.push_back({"train.epochs", *a.epochs, "--epochs"});
  if (a.seed) {
    entries.push_back({"train.seed", *a.seed, "--seed"});
    entries.push_back({"model.seed", *a.seed, "--seed"});
  }
  RunConfig base;
  base.scene = ds.scene;
  const auto cfg = resolve_config(entries, base);
  Manifest manifest("ablate", argc, argv);
  manifest.config(cfg.to_json());
  manifest.seed(cfg.train.seed);
  manifest.input(a.data);
  const auto rows = cfg.train.precision == Precision::float64 ? ablation_run<double>(ds, combos, cfg.model, cfg.train, &out)
                                                              : ablation_run<float>(ds, combos, cfg.model, cfg.train, &out);
  out << "combo          e3d      sigma    laplacian\n" << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    out << std::left << std::setw(14) << r.combo << std::right << ' ' << r.e3d_mean << "  " << r.e3d_sigma << "  "
        << r.laplacian << '\n';
  out << std::defaultfloat;
  if (!a.out.empty()) {
    write_text_atomic(a.out, ablation_csv(rows));
    manifest.output(a.out);
    manifest.write(a.out);
    out << "wrote " << a.out << '\n';
  }
  return kExitOk;
}

struct GradcheckArgs {
  std::vector<std::string> ops;
  bool all = false;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
};

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.all == !a.ops.empty()) throw ConfigError("give either --all or one or more --op names");
  if (a.trials < 1) throw ConfigError("--trials must be at least 1");
  const auto registry = gradcheck_registry();
  std::vector<SuiteOp> chosen;
  if (a.all) chosen = registry;
  for (const auto& name : a.ops) {
    auto it = std::find_if(registry.begin(), registry.end(), [&](const SuiteOp& s) { return s.name == name; });
    if (it == registry.end()) {
      std::string known;
      for (const auto& s : registry) known += (known.empty() ? "" : ", ") + s.name;
      throw ConfigError("unknown op '" + name + "' (known: " + known + ")");
    }
    chosen.push_back(*it);
  }
  out << "op                          trials  max_rel_error  seconds  result\n";
  bool ok = true;
  std::string worst_op;
  double worst = 0;
  for (const auto& op : chosen) {
    const auto r = run_gradcheck_op(op, a.trials, a.seed, a.tolerance);
    ok = ok && r.passed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_op = r.op;
    }
    out << std::left << std::setw(28) << r.op << std::right << std::setw(6) << r.trials << "  " << std::scientific
        << std::setprecision(3) << std::setw(13) << r.max_rel_error << std::fixed << std::setprecision(2) << std::setw(9)
        << r.seconds << "  " << (r.passed ? "PASS" : "FAIL") << '\n'
        << std::defaultfloat;
  }
  out << (ok ? "all passed" : "FAILED") << ", worst relative error " << std::scientific << worst << " (" << worst_op
      << ") vs tolerance " << a.tolerance << std::defaultfloat << '\n';
  if (!ok) throw VerificationFailure("gradient check failed: worst relative error " + std::to_string(worst) + " in " + worst_op);
  return kExitOk;
}

}  // namespace cli

/// Entry point of the tool; returns the process exit code.
inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"hdmnet: monocular deformable surface reconstruction"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  cli::GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "render a synthetic dataset");
  gen.config.attach(g);
  g->add_option("--out", gen.out, "output dataset (.hdmd)")->required();
  g->add_option("--seed", gen.seed, "scene seed");

  cli::TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model on a dataset");
  tr.config.attach(t);
  t->add_option("--data", tr.data, "dataset (.hdmd)")->required();
  t->add_option("--out", tr.out, "output checkpoint (.hdmc)")->required();
  t->add_option("--losses", tr.losses, "loss terms: 3d[,iso][,cont]");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--lr", tr.lr, "learning rate");
  t->add_option("--seed", tr.seed, "training and initialization seed");
  t->add_option("--log", tr.log, "line log path (default <out>.log)");

  cli::EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  e->add_option("--data", ev.data, "dataset (.hdmd)")->required();
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint (.hdmc)")->required();
  e->add_option("--split", ev.split, "test or train");
  e->add_option("--noise", ev.noise, "salt-and-pepper fractions, e.g. 0,0.05,0.1,0.2");
  e->add_option("--noise-seed", ev.noise_seed);
  e->add_flag("--unaligned", ev.unaligned, "skip Procrustes alignment");
  e->add_option("--out", ev.out, "report CSV");

  cli::InferArgs in;
  auto* i = app.add_subcommand("infer", "reconstruct one image");
  i->add_option("--checkpoint", in.checkpoint, "checkpoint (.hdmc)")->required();
  i->add_option("--image", in.image, "binary PPM image");
  i->add_option("--data", in.data, "dataset (.hdmd), with --index");
  i->add_option("--index", in.index, "sample index in --data");
  i->add_option("--out", in.out, "output surface (.hdms)")->required();
  i->add_option("--obj", in.obj, "also write a Wavefront OBJ mesh");
  i->add_option("--raster", in.raster, "also write the soft silhouette as PGM");

  cli::AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train one model per loss combination from a shared init");
  ab.config.attach(a);
  a->add_option("--data", ab.data, "dataset (.hdmd)")->required();
  a->add_option("--combos", ab.combos, "semicolon-separated loss sets");
  a->add_option("--epochs", ab.epochs);
  a->add_option("--seed", ab.seed);
  a->add_option("--out", ab.out, "table CSV");

  cli::GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  c->add_option("--op", gc.ops, "op name (repeatable)");
  c->add_flag("--all", gc.all, "every registered op");
  c->add_option("--trials", gc.trials, "random instances per op");
  c->add_option("--seed", gc.seed);
  c->add_option("--tolerance", gc.tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cli::cmd_generate(gen, argc, argv, out);
    if (*t) return cli::cmd_train(tr, argc, argv, out);
    if (*e) return cli::cmd_eval(ev, argc, argv, out);
    if (*i) return cli::cmd_infer(in, argc, argv, out);
    if (*a) return cli::cmd_ablate(ab, argc, argv, out);
    return cli::cmd_gradcheck(gc, out);
  } catch (const DivergenceError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitDivergence;
  } catch (const VerificationFailure& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitVerification;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DatasetError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitVerification;
  }
}

}  // namespace hdmnet
