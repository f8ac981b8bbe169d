#pragma once

#include "dcqa/model.hpp"
#include "dcqa/training.hpp"
#include "dcqa/types.hpp"

#include <string>
#include <vector>

namespace dcqa {

// Per-question-token attention percentages for each choice:
//   M_i  = rowsoftmax(Q A_i^T) over real choice tokens;
//   raw  = per question token, max over choice tokens;
//   scaled to [0, 100] by per-choice min-max normalization.
// A constant raw row (min == max) is flagged degenerate and set to zero.
struct TokenWeightRow {
  std::vector<std::string> question_tokens;
  Mat per_choice_percentages;           // n x l, entries in [0, 100]
  std::vector<bool> degenerate;         // one flag per choice
  std::vector<Mat> attention;           // n raw softmax matrices (l x m_i)
};

TokenWeightRow token_weights(const Mat& Q, const Mask& q_mask, const std::vector<Mat>& A,
                             const std::vector<Mask>& a_masks,
                             const std::vector<std::string>& question_tokens = {});

// The three attention maps shown per example: encoder Q vs A, refined
// Q vs A, refined Q vs enhanced A. Stages two and three use each
// choice's own refined question.
struct StageTriplet {
  std::vector<TokenWeightRow> stages;   // exactly 3
  std::vector<std::string> stage_names;
};

StageTriplet stage_triplet(const ForwardOutput& fwd);

enum class HeatmapFormat { JSON, CSV, PNG };
HeatmapFormat heatmap_format_from_string(const std::string& name);

// Serializable bundle shared by the JSON/CSV/PNG writers.
struct HeatmapData {
  std::vector<std::string> question_tokens;
  std::vector<std::string> choices;
  std::vector<std::string> stage_names;
  std::vector<std::vector<Mat>> matrices;                  // [stage][choice] raw attention
  std::vector<std::vector<std::vector<double>>> pooled;    // [stage][choice][q_token] percent
};

HeatmapData heatmap_data(const TokenWeightRow& row, const std::vector<std::string>& choices);
HeatmapData heatmap_data(const StageTriplet& triplet, const std::vector<std::string>& choices);

void export_heatmap(const HeatmapData& data, const std::string& out_path, HeatmapFormat format);
HeatmapData read_heatmap_json(const std::string& path);

struct ParameterCount {
  long long total = 0;
  std::string millions;  // two decimals
};

ParameterCount count_parameters(const DCQAModel& model);

// Table-4 variant ids and their flag sets. -C1 maps onto the same set
// as -ComE and -C3 onto the same set as -CE.
enum class AblationVariant { FULL, NoComE, NoCR, NoDE, NoCE, NoC1, NoC2, NoC3 };

std::string to_string(AblationVariant v);
AblationVariant ablation_variant_from_string(const std::string& name);
AblationSet ablation_flags(AblationVariant v);
std::vector<AblationVariant> all_ablation_variants();

struct AblationRow {
  AblationVariant variant;
  MultiSeedResult result;
};

struct AblationReport {
  DatasetTag dataset;
  std::vector<AblationRow> rows;
};

AblationReport run_ablation(const TrainSetup& base, const std::vector<AblationVariant>& variants,
                            const std::vector<std::uint64_t>& seeds, const DatasetSplits& splits);

std::string format_ablation_table(const AblationReport& report);

}  // namespace dcqa
