#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mmctr/trainer/adam.hpp"
#include "mmctr/trainer/early_stopping.hpp"
#include "mmctr/trainer/grid.hpp"
#include "mmctr/trainer/train.hpp"
#include "model_support.hpp"

namespace mmctr {
namespace {

namespace fs = std::filesystem;
using testutil::make_model;
using testutil::tiny_config;
using testutil::tiny_data;

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mmctr_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One parameter [2 x 3] with a chosen gradient.
struct AdamFixture {
  ParamStore<float> store{1};
  BasicTensor<float> w = store.add("w", {2, 3});

  void set(std::vector<float> values, std::vector<float> grad) {
    std::copy(values.begin(), values.end(), w.data().begin());
    store.clear_grads();
    auto g = w.grad_buffer();
    std::copy(grad.begin(), grad.end(), g.begin());
  }
};

TEST(AdamTest, ZeroGradientIsFixedPoint) {
  AdamFixture f;
  const std::vector<float> start{1, -2, 3, 0.5f, 0, -1};
  Adam<float> adam(f.store, {});
  for (int i = 0; i < 5; ++i) {
    f.set(start, std::vector<float>(6, 0.0f));
    adam.step();
  }
  EXPECT_TRUE(std::equal(start.begin(), start.end(), f.w.data().begin()));
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  // With bias correction the first update is -lr * g / (|g| + eps).
  AdamFixture f;
  f.set({0, 0, 0, 0, 0, 0}, {0.5f, -2.0f, 1e-3f, 10.0f, -1.0f, 3.0f});
  Adam<float> adam(f.store, {0.1, 0.9, 0.999, 1e-8});
  adam.step();
  const std::vector<float> expect{-0.1f, 0.1f, -0.1f, -0.1f, 0.1f, -0.1f};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(f.w[i], expect[i], 1e-5) << i;
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(AdamTest, ZeroLearningRateChangesNothing) {
  AdamFixture f;
  const std::vector<float> start{1, 2, 3, 4, 5, 6};
  f.set(start, {1, 1, 1, 1, 1, 1});
  Adam<float> adam(f.store, {0.0, 0.9, 0.999, 1e-8});
  adam.step();
  EXPECT_TRUE(std::equal(start.begin(), start.end(), f.w.data().begin()));
}

TEST(AdamTest, MissingGradientNamesParameter) {
  ParamStore<float> store(1);
  store.add("lonely", {3});
  Adam<float> adam(store, {});
  try {
    adam.step();
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(AdamTest, FrozenRowsStayPut) {
  ParamStore<float> store(1);
  auto t = store.add("table", {3, 2}, 1);
  std::fill(t.data().begin(), t.data().end(), 0.0f);
  store.clear_grads();
  std::fill(t.grad_buffer().begin(), t.grad_buffer().end(), 1.0f);
  Adam<float> adam(store, {0.1, 0.9, 0.999, 1e-8});
  adam.step();
  EXPECT_EQ(t[0], 0.0f);
  EXPECT_EQ(t[1], 0.0f);
  for (std::size_t i = 2; i < 6; ++i) EXPECT_NEAR(t[i], -0.1f, 1e-6);
}

TEST(EarlyStoppingTest, StopsAfterPatienceNonImprovingEpochs) {
  EarlyStopping s(5);
  const std::vector<double> seq{0.5, 0.6, 0.61, 0.60, 0.60, 0.60, 0.60, 0.60, 0.70};
  std::size_t stopped_at = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    s.update(seq[i]);
    if (s.should_stop()) {
      stopped_at = i + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 8u);
  EXPECT_EQ(s.best_epoch(), 3u);
  EXPECT_EQ(s.best_auc(), 0.61);
}

TEST(EarlyStoppingTest, TiesDoNotCountAsImprovement) {
  EarlyStopping s(2);
  EXPECT_TRUE(s.update(0.7));
  EXPECT_FALSE(s.update(0.7));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(0.7));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
}

TEST(EarlyStoppingTest, StrictlyImprovingNeverStops) {
  EarlyStopping s(1);
  for (int i = 0; i < 100; ++i) {
    EXPECT_TRUE(s.update(0.5 + i * 1e-3));
    EXPECT_FALSE(s.should_stop());
  }
  EXPECT_EQ(s.best_epoch(), 100u);
}

TEST(EarlyStoppingTest, ZeroPatienceRejected) { EXPECT_THROW(EarlyStopping(0), ConfigError); }

class TrainLoopTest : public ::testing::Test {
 protected:
  TrainConfig cfg = [] {
    auto c = tiny_config();
    c.max_epochs = 3;
    c.learning_rate = 5e-3;
    c.transformer_dropout = 0.1;
    c.cross_net_dropout = 0.1;
    return c;
  }();
  data::SyntheticData d = tiny_data(cfg, 400);
  data::SampleSet train_set{d.samples.max_history, d.samples.n_side,
                            {d.samples.samples.begin(), d.samples.samples.begin() + 300}};
  data::SampleSet val_set{d.samples.max_history, d.samples.n_side,
                          {d.samples.samples.begin() + 300, d.samples.samples.end()}};
};

TEST_F(TrainLoopTest, IdenticalSeedsGiveIdenticalMetrics) {
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  for (const auto& dir : {a, b}) {
    auto model = make_model<float>(cfg, d.items, d.samples);
    TrainOptions opts;
    opts.log = nullptr;
    opts.run_dir = dir;
    train(*model, train_set, val_set, opts);
  }
  const auto ma = slurp(a / "metrics.jsonl");
  EXPECT_EQ(std::count(ma.begin(), ma.end(), '\n'), 3);
  EXPECT_EQ(ma, slurp(b / "metrics.jsonl"));
}

TEST_F(TrainLoopTest, ModelEndsAtBestEpoch) {
  cfg.max_epochs = 4;
  auto model = make_model<float>(cfg, d.items, d.samples);
  TrainOptions opts;
  opts.log = nullptr;
  const auto r = train(*model, train_set, val_set, opts);
  ASSERT_GE(r.best_epoch, 1u);
  double best = 0.0;
  for (const auto& e : r.history) best = std::max(best, e.val.auc);
  EXPECT_EQ(r.best_val_auc, best);
  EXPECT_NEAR(evaluate_model(*model, val_set).auc, r.best_val_auc, 1e-9);
  const std::size_t batches = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
  EXPECT_EQ(r.optimizer_steps, batches * r.history.size());
}

TEST_F(TrainLoopTest, LossDecreasesOnTrainingData) {
  cfg.max_epochs = 8;
  auto model = make_model<float>(cfg, d.items, d.samples);
  TrainOptions opts;
  opts.log = nullptr;
  const auto r = train(*model, train_set, val_set, opts);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST_F(TrainLoopTest, NonFiniteLossStopsTraining) {
  auto model = make_model<float>(cfg, d.items, d.samples);
  for (auto& p : model->params().entries()) {
    if (p.name == "head.out.b") p.tensor[0] = std::numeric_limits<float>::quiet_NaN();
  }
  TrainOptions opts;
  opts.log = nullptr;
  try {
    train(*model, train_set, val_set, opts);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 1"), std::string::npos) << e.what();
  }
}

TEST_F(TrainLoopTest, EmptySplitsRejected) {
  auto model = make_model<float>(cfg, d.items, d.samples);
  data::SampleSet empty{cfg.N, 2, {}};
  EXPECT_THROW(train(*model, empty, val_set), DataError);
  EXPECT_THROW(train(*model, train_set, empty), DataError);
}

TEST(GridTest, TuningGridHasTwentyFourOneFactorTrials) {
  const auto trials = expand_grid(tuning_grid());
  ASSERT_EQ(trials.size(), 24u);
  for (const auto& t : trials) EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(trials.front(), (Overrides{{"learning_rate", "1e-3"}}));
  EXPECT_EQ(trials.back(), (Overrides{{"k", "24"}}));
}

TEST(GridTest, CartesianMultipliesAxes) {
  auto spec = tuning_grid();
  spec.mode = GridMode::kCartesian;
  EXPECT_EQ(expand_grid(spec).size(), 4u * 4 * 5 * 5 * 6);
}

TEST(GridTest, EmptyGridRejected) {
  EXPECT_THROW(expand_grid(GridSpec{}), ConfigError);
  EXPECT_THROW(expand_grid(parse_grid_text("# nothing\n")), ConfigError);
}

TEST(GridTest, ParsesKeysValuesAndMode) {
  const auto spec = parse_grid_text("mode = cartesian\nlearning_rate = 1e-3, 5e-4\nk = 2,4\n");
  EXPECT_EQ(spec.mode, GridMode::kCartesian);
  ASSERT_EQ(spec.axes.size(), 2u);
  EXPECT_EQ(spec.axes[0].second, (std::vector<std::string>{"1e-3", "5e-4"}));
  EXPECT_EQ(expand_grid(spec).size(), 4u);
}

TEST(GridTest, RejectsBadValuesWithLine) {
  try {
    parse_grid_text("k = 2\nlearning_rate = fast\n", "g.grid");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("g.grid:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_grid_text("bogus_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_grid_text("mode = sideways\nk = 1\n"), ConfigError);
}

TEST(GridTest, RankingPutsBestFirstAndFailuresLast) {
  std::vector<TrialResult> r(4);
  for (std::size_t i = 0; i < 4; ++i) r[i].trial = i;
  r[0].val_auc = 0.6;
  r[1].failed = true;
  r[1].error = "boom\tbad";
  r[2].val_auc = 0.8;
  r[3].val_auc = 0.6;
  const auto ranked = rank_trials(r);
  EXPECT_EQ(ranked[0].trial, 2u);
  EXPECT_EQ(ranked[1].trial, 0u);
  EXPECT_EQ(ranked[2].trial, 3u);
  EXPECT_EQ(ranked[3].trial, 1u);

  std::ostringstream out;
  write_grid_tsv(out, r);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0].rfind("rank\ttrial\t", 0), 0u);
  EXPECT_EQ(lines[1].rfind("1\t2\t", 0), 0u);
  EXPECT_NE(lines[4].find("failed"), std::string::npos);
  EXPECT_EQ(std::count(lines[4].begin(), lines[4].end(), '\t'), 8) << "error text must not add columns";
}

TEST(GridTest, FailedTrialsAreRecordedNotFatal) {
  auto base = tiny_config();
  base.max_epochs = 1;
  const auto d = tiny_data(base, 120);
  data::SampleSet train_set{base.N, 2, {d.samples.samples.begin(), d.samples.samples.begin() + 80}};
  data::SampleSet val_set{base.N, 2, {d.samples.samples.begin() + 80, d.samples.samples.end()}};
  GridSpec spec;
  spec.axes = {{"k", {"2", "24"}}, {"learning_rate", {"1e30", "1e-3"}}};
  std::size_t seen = 0;
  const auto r = grid_search(spec, base, {&d.items, &train_set, &val_set}, [&](const TrialResult&) { ++seen; });
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(seen, 4u);
  EXPECT_FALSE(r[0].failed);
  EXPECT_TRUE(r[1].failed) << "k above N";
  EXPECT_NE(r[1].error.find("k"), std::string::npos);
  EXPECT_TRUE(r[2].failed) << "diverged";
  EXPECT_NE(r[2].error.find("non-finite"), std::string::npos) << r[2].error;
  EXPECT_FALSE(r[3].failed);
}

TEST(GridTest, TrialOrderDoesNotChangeResults) {
  auto base = tiny_config();
  base.max_epochs = 1;
  const auto d = tiny_data(base, 120);
  data::SampleSet train_set{base.N, 2, {d.samples.samples.begin(), d.samples.samples.begin() + 80}};
  data::SampleSet val_set{base.N, 2, {d.samples.samples.begin() + 80, d.samples.samples.end()}};
  GridSpec fwd, rev;
  fwd.axes = {{"k", {"0", "2"}}};
  rev.axes = {{"k", {"2", "0"}}};
  const auto a = grid_search(fwd, base, {&d.items, &train_set, &val_set});
  const auto b = grid_search(rev, base, {&d.items, &train_set, &val_set});
  EXPECT_EQ(a[0].val_auc, b[1].val_auc);
  EXPECT_EQ(a[1].val_auc, b[0].val_auc);
}

}  // namespace
}  // namespace mmctr
