#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dcqa {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Padding mask over sequence positions: 1 = real token, 0 = padding.
// Right padding only, so every mask is a prefix of ones.
using Mask = std::vector<std::uint8_t>;

inline int mask_count(const Mask& m) {
  int n = 0;
  for (auto v : m) n += (v != 0);
  return n;
}

enum class DatasetTag {
  CSQA,
  OBQA,
  ARC_E,
  ARC_C,
  QASC,
  PIQA,
  SocialIQA,
  SYNTHETIC,
};

std::string to_string(DatasetTag tag);
DatasetTag dataset_tag_from_string(const std::string& name);

// Declared choice count per dataset (#C). Examples deviating from it
// are rejected at load time.
int dataset_choice_count(DatasetTag tag);

// One question with n choices and (when labeled) a gold answer index.
struct MCQExample {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  std::optional<int> answer_index;
  DatasetTag dataset_tag = DatasetTag::SYNTHETIC;
};

enum class SplitProvenance { OFFICIAL, IN_HOUSE_DEV };

struct DatasetSplits {
  std::vector<MCQExample> train;
  std::vector<MCQExample> dev;
  std::vector<MCQExample> test;
  SplitProvenance provenance = SplitProvenance::OFFICIAL;
};

}  // namespace dcqa
