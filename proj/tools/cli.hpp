#pragma once

#include "dcqa/backend.hpp"
#include "dcqa/model.hpp"
#include "dcqa/training.hpp"
#include "dcqa/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dcqa::cli {

// Exit codes: 0 success, 2 usage, 3 config validation, 4 data, 5 runtime.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitRuntime = 5;

// Entire experiment description, read from one JSON config file with
// optional dotted-path overrides (--set a.b.c=value).
struct ExperimentConfig {
  DatasetTag dataset_tag = DatasetTag::SYNTHETIC;
  std::string data_dir;         // prepared unified splits (env DCQA_DATA_DIR fallback)
  std::uint64_t dev_seed = 1;   // in-house dev carving seed
  struct Synthetic {
    int n_examples = 200;
    int n_choices = 5;
    int vocab_size = 64;
    std::uint64_t seed = 1;
  } synthetic;

  BackendSpec backend;
  DCQAConfig model;
  TrainConfig training;
  std::string output_dir = "runs";

  std::string resolved_json;  // the fully resolved document, for manifests

  TrainSetup setup() const;
};

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

// Loads the splits the config points at (or generates the synthetic set).
DatasetSplits load_splits(const ExperimentConfig& cfg);

std::string variant_name_for(const AblationSet& flags);

int run_cli(int argc, const char* const* argv);

}  // namespace dcqa::cli
