#pragma once

#include "dcqa/backend.hpp"
#include "dcqa/model.hpp"
#include "dcqa/types.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dcqa {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int max_epochs = 50;
  int early_stop_patience = 15;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  DatasetTag dataset = DatasetTag::SYNTHETIC;

  void validate() const;
};

// Everything train() needs to build the model it optimizes.
struct TrainSetup {
  TrainConfig train;
  DCQAConfig model;
  BackendSpec backend;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct RunResult {
  double best_dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::uint64_t seed = 0;
  std::vector<EpochStats> history;
};

// Hyperparameter search spaces used throughout the experiments.
inline const std::vector<double> kLearningRateGrid{1e-4, 5e-5, 1e-5, 5e-6};
inline const std::vector<int> kBatchSizeGrid{16, 8, 4};

// Seed protocol: five seeds for ARC-C, three everywhere else.
std::vector<std::uint64_t> default_seeds(DatasetTag tag);

// Decoupled-weight-decay adaptive-moment optimizer.
class AdamW {
 public:
  AdamW(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  // Applies one update using grad * grad_scale, then clears the grads.
  void step(ParameterStore& store, double grad_scale = 1.0);

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Fraction of labeled examples predicted correctly.
double evaluate_accuracy(const DCQAModel& model, const std::vector<MCQExample>& examples);

// Throws when a loss stops being finite, naming where it happened.
void ensure_finite_loss(double loss, int epoch, int batch);

// Cross-entropy training with per-epoch dev evaluation and early
// stopping on dev accuracy. Restores the best-dev weights into the
// model before computing test accuracy, and writes them to
// checkpoint_path when given. Fully deterministic for a fixed seed.
RunResult train(const TrainSetup& setup, const DatasetSplits& splits, DCQAModel& model,
                const std::string& checkpoint_path = "");

// Convenience overload that builds the model from the setup.
RunResult train(const TrainSetup& setup, const DatasetSplits& splits,
                const std::string& checkpoint_path = "");

// Seeds for model init and shuffling, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct SeedRun {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  RunResult result;
};

struct MultiSeedResult {
  std::vector<SeedRun> runs;
  double dev_mean = 0.0, dev_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
  std::string dev_formatted, test_formatted;
  bool any_failed = false;
};

// Runs train() once per seed and reports mean and population standard
// deviation of dev/test accuracy. Failed seeds are flagged and excluded
// from the aggregates.
MultiSeedResult multi_seed_run(const TrainSetup& base, const std::vector<std::uint64_t>& seeds,
                               const DatasetSplits& splits);

// "55.00(±5.00)": percent, two decimals, population std.
std::string format_mean_std(const std::vector<double>& accuracies);

struct GridCell {
  double learning_rate = 0.0;
  int batch_size = 0;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct GridSearchResult {
  double best_learning_rate = 0.0;
  int best_batch_size = 0;
  std::vector<GridCell> cells;
};

// Exhaustive product over both grids; ties break toward the larger
// learning rate, then the larger batch size.
GridSearchResult grid_search(const TrainSetup& base, const std::vector<double>& learning_rates,
                             const std::vector<int>& batch_sizes, const DatasetSplits& splits);

}  // namespace dcqa
