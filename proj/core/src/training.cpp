#include "dcqa/training.hpp"

#include "dcqa/errors.hpp"
#include "dcqa/rng.hpp"
#include "dcqa/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dcqa {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0 || weight_decay < 0.0)
    throw ConfigError("train config: learning_rate must be positive, weight_decay non-negative");
  if (batch_size <= 0 || max_epochs <= 0 || early_stop_patience <= 0)
    throw ConfigError("train config: counts must be positive");
  if (early_stop_patience > max_epochs)
    throw ConfigError("train config: patience must not exceed max_epochs");
}

std::vector<std::uint64_t> default_seeds(DatasetTag tag) {
  if (tag == DatasetTag::ARC_C) return {1, 10, 20, 30, 40};
  return {1, 10, 20};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

AdamW::AdamW(double learning_rate, double weight_decay, double beta1, double beta2, double eps)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(ParameterStore& store, double grad_scale) {
  if (m_.size() != store.size()) {
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < store.size(); ++i) {
      const Mat& val = store.at(i).value;
      m_.push_back(Mat::Zero(val.rows(), val.cols()));
      v_.push_back(Mat::Zero(val.rows(), val.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store.at(i);
    Mat g = p.grad * grad_scale;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat update = (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + eps_);
    p.value -= lr_ * (update + wd_ * p.value);
    p.grad.setZero();
  }
}

double evaluate_accuracy(const DCQAModel& model, const std::vector<MCQExample>& examples) {
  long correct = 0, total = 0;
  for (const auto& ex : examples) {
    if (!ex.answer_index.has_value()) continue;
    ++total;
    if (model.predict(ex) == *ex.answer_index) ++correct;
  }
  if (total == 0) throw ArgumentError("evaluate: no labeled examples");
  return static_cast<double>(correct) / static_cast<double>(total);
}

void ensure_finite_loss(double loss, int epoch, int batch) {
  if (!std::isfinite(loss))
    throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                ", batch " + std::to_string(batch));
}

namespace {

std::vector<Mat> snapshot(const ParameterStore& store) {
  std::vector<Mat> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store.at(i).value);
  return out;
}

void restore(ParameterStore& store, const std::vector<Mat>& values) {
  for (std::size_t i = 0; i < store.size(); ++i) store.at(i).value = values[i];
}

}  // namespace

RunResult train(const TrainSetup& setup, const DatasetSplits& splits, DCQAModel& model,
                const std::string& checkpoint_path) {
  setup.train.validate();
  if (splits.train.empty() || splits.dev.empty())
    throw ArgumentError("train: train and dev splits must be non-empty");

  const TrainConfig& tc = setup.train;
  AdamW opt(tc.learning_rate, tc.weight_decay);
  Rng shuffle_rng(derive_seed(tc.seed, 3));

  RunResult result;
  result.seed = tc.seed;
  double best_acc = -1.0;
  std::vector<Mat> best_weights = snapshot(model.params());

  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batch_index = 0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(tc.batch_size));
      const int batch_count = static_cast<int>(batch_end - cursor);
      for (; cursor < batch_end; ++cursor) {
        const MCQExample& ex = splits.train[order[cursor]];
        Tape tape;
        Var loss = model.forward_loss(tape, ex);
        const double loss_value = tape.value(loss)(0, 0);
        ensure_finite_loss(loss_value, epoch, batch_index);
        epoch_loss += loss_value;
        tape.backward(loss);
      }
      opt.step(model.params(), 1.0 / static_cast<double>(batch_count));
      ++batch_index;
    }

    const double dev_acc = evaluate_accuracy(model, splits.dev);
    result.history.push_back(
        {epoch, epoch_loss / static_cast<double>(splits.train.size()), dev_acc});
    result.epochs_run = epoch;

    if (dev_acc > best_acc) {
      best_acc = dev_acc;
      result.best_epoch = epoch;
      best_weights = snapshot(model.params());
    }
    if (epoch - result.best_epoch >= tc.early_stop_patience) break;
  }

  restore(model.params(), best_weights);
  result.best_dev_accuracy = best_acc;
  if (!splits.test.empty()) result.test_accuracy = evaluate_accuracy(model, splits.test);
  if (!checkpoint_path.empty()) save_model(checkpoint_path, model);
  return result;
}

RunResult train(const TrainSetup& setup, const DatasetSplits& splits,
                const std::string& checkpoint_path) {
  BackendSpec backend = setup.backend;
  backend.seed = derive_seed(setup.train.seed, 1);
  DCQAModel model(setup.model, backend, derive_seed(setup.train.seed, 2));
  return train(setup, splits, model, checkpoint_path);
}

MultiSeedResult multi_seed_run(const TrainSetup& base, const std::vector<std::uint64_t>& seeds,
                               const DatasetSplits& splits) {
  if (seeds.size() < 2) throw ArgumentError("multi-seed run needs at least two seeds");
  MultiSeedResult out;
  std::vector<double> dev, test;
  for (std::uint64_t seed : seeds) {
    SeedRun run;
    run.seed = seed;
    TrainSetup setup = base;
    setup.train.seed = seed;
    try {
      run.result = train(setup, splits);
      dev.push_back(run.result.best_dev_accuracy);
      test.push_back(run.result.test_accuracy);
    } catch (const std::exception& e) {
      run.failed = true;
      run.error = e.what();
      out.any_failed = true;
    }
    out.runs.push_back(std::move(run));
  }
  auto stats = [](const std::vector<double>& xs, double& mean, double& sd) {
    if (xs.empty()) {
      mean = sd = 0.0;
      return;
    }
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / static_cast<double>(xs.size()));
  };
  stats(dev, out.dev_mean, out.dev_std);
  stats(test, out.test_mean, out.test_std);
  out.dev_formatted = format_mean_std(dev);
  out.test_formatted = format_mean_std(test);
  return out;
}

std::string format_mean_std(const std::vector<double>& accuracies) {
  if (accuracies.empty()) return "n/a";
  double mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
                static_cast<double>(accuracies.size());
  double var = 0.0;
  for (double x : accuracies) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / static_cast<double>(accuracies.size()));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f(±%.2f)", 100.0 * mean, 100.0 * sd);
  return buf;
}

GridSearchResult grid_search(const TrainSetup& base, const std::vector<double>& learning_rates,
                             const std::vector<int>& batch_sizes, const DatasetSplits& splits) {
  if (learning_rates.empty() || batch_sizes.empty())
    throw ArgumentError("grid search: grids must be non-empty");

  // Descending sweep makes the tie-break (larger lr, then larger batch)
  // a plain strict comparison.
  std::vector<double> lrs = learning_rates;
  std::vector<int> bss = batch_sizes;
  std::sort(lrs.rbegin(), lrs.rend());
  std::sort(bss.rbegin(), bss.rend());

  GridSearchResult out;
  double best = -1.0;
  for (double lr : lrs) {
    for (int bs : bss) {
      TrainSetup setup = base;
      setup.train.learning_rate = lr;
      setup.train.batch_size = bs;
      RunResult r = train(setup, splits);
      out.cells.push_back({lr, bs, r.best_dev_accuracy, r.test_accuracy});
      if (r.best_dev_accuracy > best) {
        best = r.best_dev_accuracy;
        out.best_learning_rate = lr;
        out.best_batch_size = bs;
      }
    }
  }
  return out;
}

}  // namespace dcqa
