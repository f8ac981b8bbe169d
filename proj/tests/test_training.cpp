#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcqa/data.hpp"
#include "dcqa/errors.hpp"
#include "dcqa/training.hpp"

#include "testutil.hpp"

#include <cmath>

using namespace dcqa;

namespace {

TrainSetup micro_setup(int d = 8, int clue_len = 2, int n = 3) {
  TrainSetup s;
  s.backend.config.hidden_dim = d;
  s.backend.config.vocab_size = 512;
  s.backend.config.max_seq_len = 16;
  s.backend.config.clue_len = clue_len;
  s.model.n_choices = n;
  s.model.hidden_dim = d;
  s.model.clue_len = clue_len;
  s.model.mlp_hidden = d;
  s.train.learning_rate = 3e-3;
  s.train.batch_size = 8;
  s.train.max_epochs = 4;
  s.train.early_stop_patience = 4;
  s.train.seed = 1;
  return s;
}

DatasetSplits micro_splits(int n_examples = 40, int n = 3) {
  return make_synthetic_dataset(n_examples, n, 24, 5);
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.early_stop_patience = 100;
  c.max_epochs = 50;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("loss at the zero-initialized score head equals log(n)") {
  TrainSetup s = micro_setup();
  DCQAModel model(s.model, s.backend, /*head_seed=*/3);
  for (const char* name : {"mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"})
    model.params().find(name)->value.setZero();
  DatasetSplits splits = micro_splits();
  Tape t;
  Var loss = model.forward_loss(t, splits.train[0]);
  CHECK(t.value(loss)(0, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-6));
}

TEST_CASE("training is deterministic for a fixed seed") {
  TrainSetup s = micro_setup();
  DatasetSplits splits = micro_splits();
  RunResult a = train(s, splits);
  RunResult b = train(s, splits);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].dev_accuracy == b.history[i].dev_accuracy);
  }
  CHECK(a.test_accuracy == b.test_accuracy);

  TrainSetup other = s;
  other.train.seed = 2;
  RunResult c = train(other, splits);
  bool identical = a.history.size() == c.history.size();
  if (identical)
    for (std::size_t i = 0; i < a.history.size(); ++i)
      identical = identical && a.history[i].train_loss == c.history[i].train_loss;
  CHECK(!identical);
}

TEST_CASE("best_dev_accuracy is the max over history; epochs never exceed max") {
  TrainSetup s = micro_setup();
  s.train.max_epochs = 6;
  s.train.early_stop_patience = 3;
  DatasetSplits splits = micro_splits();
  RunResult r = train(s, splits);
  CHECK(r.epochs_run <= 6);
  double best = 0.0;
  for (const auto& e : r.history) best = std::max(best, e.dev_accuracy);
  CHECK(r.best_dev_accuracy == doctest::Approx(best));
  CHECK(r.best_epoch >= 1);
  CHECK(static_cast<int>(r.history.size()) == r.epochs_run);
}

TEST_CASE("early stopping fires exactly patience epochs after the best epoch") {
  TrainSetup s = micro_setup();
  s.train.max_epochs = 30;
  s.train.early_stop_patience = 4;
  DatasetSplits splits = micro_splits(60);
  RunResult r = train(s, splits);
  // Stops exactly patience epochs past the best epoch, or at max_epochs
  // when improvements keep coming late.
  CHECK(r.epochs_run == std::min(s.train.max_epochs, r.best_epoch + 4));
  // No epoch after best_epoch improved on the best.
  for (const auto& e : r.history)
    if (e.epoch > r.best_epoch) CHECK(e.dev_accuracy <= r.best_dev_accuracy);
}

TEST_CASE("checkpoint round-trip reproduces dev accuracy exactly") {
  testutil::TempDir dir("dcqa_train_ckpt");
  TrainSetup s = micro_setup();
  DatasetSplits splits = micro_splits();
  const std::string path = (dir.path() / "best.dcqa").string();
  RunResult r = train(s, splits, path);

  auto model = load_model(path);
  CHECK(evaluate_accuracy(*model, splits.dev) == r.best_dev_accuracy);
  CHECK(evaluate_accuracy(*model, splits.test) == r.test_accuracy);
}

TEST_CASE("empty splits are rejected") {
  TrainSetup s = micro_setup();
  DatasetSplits splits = micro_splits();
  DatasetSplits no_dev = splits;
  no_dev.dev.clear();
  CHECK_THROWS_AS(train(s, no_dev), ArgumentError);
}

TEST_CASE("ensure_finite_loss") {
  CHECK_NOTHROW(ensure_finite_loss(1.25, 1, 0));
  CHECK_THROWS_AS(ensure_finite_loss(std::nan(""), 3, 2), Error);
  CHECK_THROWS_AS(ensure_finite_loss(std::numeric_limits<double>::infinity(), 1, 1), Error);
}

TEST_CASE("multi-seed aggregation") {
  SUBCASE("formatting") {
    CHECK(format_mean_std({0.50, 0.60}) == "55.00(±5.00)");
    CHECK(format_mean_std({0.37, 0.37, 0.37}) == "37.00(±0.00)");
  }
  SUBCASE("needs at least two seeds") {
    TrainSetup s = micro_setup();
    DatasetSplits splits = micro_splits();
    CHECK_THROWS_AS(multi_seed_run(s, {1}, splits), ArgumentError);
  }
  SUBCASE("runs per seed and aggregates") {
    TrainSetup s = micro_setup();
    s.train.max_epochs = 2;
    s.train.early_stop_patience = 2;
    DatasetSplits splits = micro_splits();
    MultiSeedResult r = multi_seed_run(s, {1, 10}, splits);
    CHECK(r.runs.size() == 2);
    CHECK(!r.any_failed);
    double mean = (r.runs[0].result.test_accuracy + r.runs[1].result.test_accuracy) / 2.0;
    CHECK(r.test_mean == doctest::Approx(mean));
    CHECK(r.dev_formatted.find("(±") != std::string::npos);
  }
}

TEST_CASE("seed protocol follows the experiment design") {
  CHECK(default_seeds(DatasetTag::ARC_C) == std::vector<std::uint64_t>{1, 10, 20, 30, 40});
  CHECK(default_seeds(DatasetTag::CSQA) == std::vector<std::uint64_t>{1, 10, 20});
  CHECK(default_seeds(DatasetTag::SYNTHETIC) == std::vector<std::uint64_t>{1, 10, 20});
}

TEST_CASE("grid search: singleton grid short-circuits to that cell") {
  TrainSetup s = micro_setup();
  s.train.max_epochs = 2;
  s.train.early_stop_patience = 2;
  DatasetSplits splits = micro_splits(24);
  GridSearchResult r = grid_search(s, {1e-3}, {8}, splits);
  CHECK(r.cells.size() == 1);
  CHECK(r.best_learning_rate == 1e-3);
  CHECK(r.best_batch_size == 8);
}

TEST_CASE("grid search tie-break prefers larger lr then larger batch") {
  TrainSetup s = micro_setup();
  s.train.max_epochs = 3;
  s.train.early_stop_patience = 3;
  DatasetSplits splits = micro_splits(40);
  GridSearchResult r = grid_search(s, {3e-3, 1e-3}, {4, 8}, splits);
  REQUIRE(r.cells.size() == 4);

  double best = -1.0;
  for (const auto& c : r.cells) best = std::max(best, c.dev_accuracy);
  // The winner attains the best dev accuracy, and no cell that also
  // attains it has a larger lr, or the same lr and a larger batch.
  bool winner_seen = false;
  for (const auto& c : r.cells) {
    if (c.learning_rate == r.best_learning_rate && c.batch_size == r.best_batch_size) {
      winner_seen = true;
      CHECK(c.dev_accuracy == best);
    } else if (c.dev_accuracy == best) {
      bool smaller = c.learning_rate < r.best_learning_rate ||
                     (c.learning_rate == r.best_learning_rate &&
                      c.batch_size < r.best_batch_size);
      CHECK(smaller);
    }
  }
  CHECK(winner_seen);
}

TEST_CASE("AdamW applies decoupled weight decay") {
  ParameterStore store;
  Parameter* p = store.add("w", Mat::Ones(1, 1));
  AdamW opt(/*lr=*/0.1, /*wd=*/0.5);
  // zero gradient: the only update is -lr * wd * w
  opt.step(store);
  CHECK(p->value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));
}

TEST_CASE("AdamW moves against the gradient") {
  ParameterStore store;
  Parameter* p = store.add("w", Mat::Zero(1, 1));
  AdamW opt(0.1, 0.0);
  p->grad(0, 0) = 1.0;
  opt.step(store);
  CHECK(p->value(0, 0) < 0.0);
  CHECK(p->grad(0, 0) == 0.0);  // cleared after the step
}
