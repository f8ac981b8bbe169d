#pragma once

#include "dcqa/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dcqa {

// Parses one of the published dataset serializations into the unified
// example model. Choice order is preserved; answer labels are mapped to
// 0-based indices. PIQA and SocialIQA read a companion labels file
// (<stem>-labels.lst next to the data file) when it exists; without it
// the examples stay unlabeled.
//
// Records whose choice count differs from the dataset's declared #C are
// a schema error, except for the ARC datasets whose published files are
// known to contain a handful of 3- and 5-choice questions; those records
// are dropped, matching the benchmark counts used downstream.
std::vector<MCQExample> load_dataset(const std::string& path, DatasetTag tag);

// Unified line-delimited format: one JSON object per example with fields
// (id, question, choices, answer_index, dataset_tag).
std::vector<MCQExample> read_unified(const std::string& path);
void write_unified(const std::string& path, const std::vector<MCQExample>& examples);

// Deterministically carves an in-house dev set out of a training set.
// The returned train and dev partition the input; test stays empty for
// the caller to attach.
DatasetSplits split_in_house_dev(const std::vector<MCQExample>& train, int dev_size,
                                 std::uint64_t seed);

// Desk-scale learnability fixture: every choice shares a fixed common
// token set and exactly the gold choice shares one extra nuance token
// with the question. 80/10/10 split, gold labels exactly balanced.
DatasetSplits make_synthetic_dataset(int n_examples, int n_choices, int vocab_size,
                                     std::uint64_t seed);

// In-house dev sizes for the datasets whose official test labels are
// unreleased (their official dev set serves as the test split).
int in_house_dev_size(DatasetTag tag);
bool uses_in_house_dev(DatasetTag tag);

// Default file names of the published distributions, relative to the
// dataset's directory.
struct DatasetFiles {
  std::string train;
  std::string dev;
  std::string test;  // empty when the official test set is unused
};
DatasetFiles default_dataset_files(DatasetTag tag);

// Full preparation protocol: load official files from data_dir, carve
// the in-house dev split when required, relabel the official dev as
// test where applicable.
DatasetSplits prepare_dataset(DatasetTag tag, const std::string& data_dir, std::uint64_t seed);

}  // namespace dcqa
