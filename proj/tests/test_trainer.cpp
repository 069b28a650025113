#include <gtest/gtest.h>

#include <sstream>

#include "hdmnet/trainer.hpp"

using namespace hdmnet;

namespace {

SceneConfig small_scene() {
  auto c = SceneConfig::desk();
  c.num_states = 10;
  c.image_side = 16;
  c.grid_side = 5;
  return c;
}

const DeformationDataset& fixture() {
  static const DeformationDataset ds = generate_dataset(small_scene());
  return ds;
}

TrainConfig quick_config(std::size_t epochs = 2) {
  auto c = TrainConfig::for_scene(small_scene());
  c.epochs = epochs;
  c.batch_size = 8;
  c.precision = Precision::float64;
  return c;
}

Model<double> initial_model() {
  Model<double> m(ModelConfig::tiny());
  initialize_output_surface(m, fixture());
  return m;
}

// Keeps test samples and only the first `n` train samples.
DeformationDataset with_train_prefix(std::size_t n) {
  DeformationDataset out{fixture().scene, {}};
  std::size_t kept = 0;
  for (const auto& s : fixture().samples) {
    if (s.split == Split::train && kept++ >= n) continue;
    out.samples.push_back(s);
  }
  return out;
}

void set_grad(Tensor<double>& w, std::vector<double> g) {
  w.zero_grad();
  backward(sum(mul(w, Tensor<double>(w.shape(), std::move(g)))));
}

}  // namespace

TEST(Trainer, RasterSideMatchesImageScale) {
  EXPECT_EQ(raster_side_for(256), 99u);
  EXPECT_EQ(raster_side_for(64), 25u);
  EXPECT_EQ(raster_side_for(224), 87u);
  EXPECT_EQ(raster_side_for(16) % 2, 1u);
}

TEST(Trainer, ConfigValidation) {
  auto c = quick_config();
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = -1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick_config();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick_config();
  c.loss.ksize = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  const auto init = initial_model();
  auto c = quick_config(1);
  c.learning_rate = 0;
  const auto res = train(init, fixture(), c);
  EXPECT_EQ(res.model.parameter_hash(), init.parameter_hash());
  EXPECT_GT(res.steps, 0u);
}

TEST(Trainer, InputModelIsNotModified) {
  const auto init = initial_model();
  const auto h = init.parameter_hash();
  train(init, fixture(), quick_config(1));
  EXPECT_EQ(init.parameter_hash(), h);
}

TEST(Trainer, ZeroGradientStepIsIdentity) {
  for (auto kind : {OptimizerKind::adam, OptimizerKind::sgd_momentum}) {
    auto c = quick_config();
    c.optimizer = kind;
    auto m = initial_model();
    const auto h = m.parameter_hash();
    Optimizer<double> opt(c, m.parameters().size());
    for (int i = 0; i < 3; ++i) opt.step(m.parameters(), 1e-2);
    EXPECT_EQ(m.parameter_hash(), h) << optimizer_name(kind);
  }
}

TEST(Trainer, SgdStepMatchesHandComputation) {
  auto c = quick_config();
  c.optimizer = OptimizerKind::sgd_momentum;
  c.momentum = 0.5;
  Model<double>::Parameters p;
  p.emplace_back("w", Tensor<double>(Shape{2}, {1.0, -2.0}, true));
  Optimizer<double> opt(c, 1);
  set_grad(p[0].second, {0.5, -1.0});
  opt.step(p, 0.1);
  EXPECT_DOUBLE_EQ(p[0].second[0], 1.0 - 0.05);
  opt.step(p, 0.1);  // velocity = 0.5 * 0.5 + 0.5
  EXPECT_DOUBLE_EQ(p[0].second[0], 0.95 - 0.1 * 0.75);
  EXPECT_DOUBLE_EQ(p[0].second[1], -2.0 + 0.1 + 0.1 * 1.5);
}

TEST(Trainer, AdamFirstStepHasLearningRateMagnitude) {
  auto c = quick_config();
  Model<double>::Parameters p;
  p.emplace_back("w", Tensor<double>(Shape{3}, {0.0, 0.0, 0.0}, true));
  set_grad(p[0].second, {3.0, -1e-3, 0.0});
  Optimizer<double> opt(c, 1);
  opt.step(p, 0.01);
  EXPECT_NEAR(p[0].second[0], -0.01, 1e-8);
  EXPECT_NEAR(p[0].second[1], 0.01, 1e-7);
  EXPECT_EQ(p[0].second[2], 0.0);
}

TEST(Trainer, OverfitsOneSample) {
  const auto ds = with_train_prefix(1);
  ASSERT_EQ(ds.count(Split::train), 1u);
  auto c = quick_config(200);
  c.batch_size = 1;
  c.loss.use_iso = false;
  c.loss.use_contour = false;
  Model<double> init(ModelConfig::tiny());
  initialize_output_surface(init, ds);
  // Start away from the target so the head has work to do.
  for (auto& v : init.parameter("head.surface").data()) v += 0.2;
  const auto res = train(init, ds, c);
  ASSERT_EQ(res.history.size(), 200u);
  EXPECT_LT(res.history.back().total, res.history.front().total / 10.0);
}

TEST(Trainer, HistoryIsDeterministic) {
  const auto init = initial_model();
  const auto a = train(init, fixture(), quick_config());
  const auto b = train(init, fixture(), quick_config());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].total, b.history[k].total);
    EXPECT_EQ(a.history[k].e3d, b.history[k].e3d);
  }
  EXPECT_EQ(a.model.parameter_hash(), b.model.parameter_hash());
}

TEST(Trainer, LossTermsSumToTotal) {
  const auto res = train(initial_model(), fixture(), quick_config());
  for (const auto& r : res.history) {
    EXPECT_NEAR(r.e3d + r.iso + r.contour, r.total, 1e-9 * std::max(1.0, r.total));
    EXPECT_GT(r.contour, 0.0);
    EXPECT_GT(r.iso, 0.0);
  }
}

TEST(Trainer, LearningRateDecayAndEarlyStop) {
  auto c = quick_config(4);
  c.lr_decay_every = 2;
  c.lr_decay_factor = 0.1;
  const auto res = train(initial_model(), fixture(), c);
  EXPECT_DOUBLE_EQ(res.history[0].learning_rate, c.learning_rate);
  EXPECT_DOUBLE_EQ(res.history[2].learning_rate, c.learning_rate * 0.1);

  auto stop = quick_config(10);
  stop.learning_rate = 0;
  stop.early_stop_patience = 2;
  EXPECT_EQ(train(initial_model(), fixture(), stop).history.size(), 3u);
}

TEST(Trainer, NegativeDepthIsReportedAsDivergence) {
  Model<double> m(ModelConfig::tiny());  // zero surface bias: depths near 0
  auto& s = m.parameter("head.surface");
  for (std::size_t k = 2; k < s.numel(); k += 3) s.data()[k] = -1.0;
  try {
    train(m, fixture(), quick_config(1));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
  }
}

TEST(Trainer, NonFiniteLossIsReportedAsDivergence) {
  auto m = initial_model();
  m.parameter("head.surface").data()[0] = std::numeric_limits<double>::quiet_NaN();
  auto c = quick_config(1);
  c.loss.use_contour = false;
  EXPECT_THROW(train(m, fixture(), c), DivergenceError);
}

TEST(Trainer, MismatchedModelIsConfigError) {
  Model<double> m(ModelConfig::desk());
  EXPECT_THROW(train(m, fixture(), quick_config(1)), ConfigError);
  EXPECT_THROW(evaluate(m, fixture(), Split::test, true), ConfigError);
}

TEST(Trainer, LogHasOneLinePerEpoch) {
  std::ostringstream log;
  train(initial_model(), fixture(), quick_config(3), &log);
  std::istringstream in(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.rfind("epoch ", 0), 0u);
    ++n;
  }
  EXPECT_EQ(n, 3u);
}

TEST(Trainer, OptimizerStateCoversParameters) {
  const auto res = train(initial_model(), fixture(), quick_config(1));
  EXPECT_EQ(res.optimizer_state.size(), 2 * res.model.parameters().size());
  EXPECT_EQ(res.optimizer["kind"], "adam");
}

TEST(Evaluate, OracleHasZeroError) {
  const auto& ds = fixture();
  const std::size_t g = ds.grid_side();
  auto oracle = [&](const Tensor<double>&, std::size_t i) {
    const auto& s = ds.samples[i].surface;
    return Tensor<double>(Shape{1, g, g, 3}, std::vector<double>(s.begin(), s.end()));
  };
  for (bool align : {true, false}) {
    const auto r = evaluate_predictor<double>(oracle, ds, Split::test, align);
    EXPECT_LT(r.e3d_mean, 1e-6);
    EXPECT_LT(r.loss_3d, 1e-20);
    EXPECT_LT(r.loss_contour, 1e-20);
    EXPECT_EQ(r.frames, ds.count(Split::test));
  }
}

TEST(Evaluate, GroupMeansAverageToOverall) {
  const auto r = evaluate(initial_model(), fixture(), Split::test, true);
  for (const auto* table : {&r.per_texture, &r.per_light}) {
    double weighted = 0;
    std::size_t frames = 0;
    for (const auto& row : *table) {
      weighted += row.e3d_mean * double(row.frames);
      frames += row.frames;
    }
    EXPECT_EQ(frames, r.frames);
    EXPECT_NEAR(weighted / double(frames), r.e3d_mean, 1e-12);
  }
  EXPECT_GT(r.ms_per_frame, 0.0);
  EXPECT_GT(r.laplacian, 0.0);
}

TEST(Evaluate, DoesNotMutateModel) {
  const auto m = initial_model();
  const auto h = m.parameter_hash();
  evaluate(m, fixture(), Split::test, true);
  EXPECT_EQ(m.parameter_hash(), h);
}

TEST(Evaluate, AlignmentNeverIncreasesError) {
  const auto m = initial_model();
  const auto a = evaluate(m, fixture(), Split::test, true);
  const auto u = evaluate(m, fixture(), Split::test, false);
  for (std::size_t k = 0; k < a.per_frame.size(); ++k) EXPECT_LE(a.per_frame[k], u.per_frame[k] + 1e-9);
}

TEST(NoiseSweep, ZeroFractionMatchesCleanEvaluation) {
  const auto m = initial_model();
  const auto rows = noise_sweep(m, fixture(), {0.0, 0.3}, 5);
  const auto clean = evaluate(m, fixture(), Split::test, true);
  EXPECT_DOUBLE_EQ(rows[0].e3d_mean, clean.e3d_mean);
  EXPECT_NE(rows[1].e3d_mean, clean.e3d_mean);
  const auto again = noise_sweep(m, fixture(), {0.0, 0.3}, 5);
  EXPECT_EQ(again[1].e3d_mean, rows[1].e3d_mean);
}

TEST(NoiseSweep, RejectsBadFractions) {
  const auto m = initial_model();
  EXPECT_THROW(noise_sweep(m, fixture(), {0.2, 0.1}, 1), ParameterError);
  EXPECT_THROW(noise_sweep(m, fixture(), {1.5}, 1), ParameterError);
  EXPECT_THROW(noise_sweep(m, fixture(), {}, 1), ParameterError);
}

TEST(Ablation, ParsesCombos) {
  EXPECT_EQ(LossCombo::parse("3d").canonical(), "3d");
  EXPECT_EQ(LossCombo::parse("cont, 3d,iso").canonical(), "3d,iso,cont");
  EXPECT_THROW(LossCombo::parse("iso,cont"), ConfigError);
  EXPECT_THROW(LossCombo::parse("3d,foo"), ConfigError);
}

TEST(Ablation, ArmsShareInitialization) {
  const std::vector<LossCombo> combos = {LossCombo::parse("3d"), LossCombo::parse("3d,iso")};
  const auto rows = ablation_run<double>(fixture(), combos, ModelConfig::tiny(), quick_config(1));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].init_hash, rows[1].init_hash);
  EXPECT_NE(rows[0].final_loss, rows[1].final_loss);
  const auto csv = ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "combo,init_hash,final_loss,e3d_mean,e3d_sigma,laplacian");
}

TEST(Csv, HistoryAndReportHeaders) {
  const auto res = train(initial_model(), fixture(), quick_config(2));
  const auto h = history_csv(res.history);
  EXPECT_EQ(std::count(h.begin(), h.end(), '\n'), 3);
  const auto r = evaluate(res.model, fixture(), Split::test, true);
  const auto csv = report_csv(r, noise_sweep(res.model, fixture(), {0.0, 0.1}, 2));
  EXPECT_EQ(csv.rfind("table,key,label,frames,e3d_mean,e3d_sigma,value\noverall,test,aligned,", 0), 0u);
  EXPECT_NE(csv.find("\nnoise,0.1,salt_pepper,"), std::string::npos);
  EXPECT_NE(csv.find("\nsummary,ms_per_frame,"), std::string::npos);
}
