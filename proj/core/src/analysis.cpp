#include "dcqa/analysis.hpp"

#include "dcqa/errors.hpp"
#include "dcqa/tape.hpp"
#include "png_writer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dcqa {

using nlohmann::json;

namespace {

// Trims a matrix with a right-padding mask to its real rows.
Mat real_rows(const Mat& x, const Mask& mask) {
  return x.topRows(mask_count(mask));
}

struct SingleChoiceWeights {
  Mat attention;            // l_real x m_real
  std::vector<double> pct;  // length l_real
  bool degenerate = false;
};

SingleChoiceWeights weights_for_choice(const Mat& Q, const Mask& q_mask, const Mat& A,
                                       const Mask& a_mask) {
  const Mat q = real_rows(Q, q_mask);
  const int m_real = mask_count(a_mask);
  if (q.rows() == 0 || m_real == 0)
    throw DegenerateInputError("token weights: empty question or choice");

  Mat logits = q * A.transpose();  // l_real x m
  Mat full = masked_softmax_rows(logits, &a_mask);
  // Compact to real columns; the enhanced-choice mask can have interior
  // zeros (choice padding precedes the clue rows), so no prefix shortcut.
  Mat attn(q.rows(), m_real);
  int keep = 0;
  for (Eigen::Index c = 0; c < full.cols(); ++c)
    if (a_mask[static_cast<std::size_t>(c)] != 0) attn.col(keep++) = full.col(c);

  SingleChoiceWeights out;
  out.attention = attn;
  std::vector<double> raw(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index r = 0; r < attn.rows(); ++r)
    raw[static_cast<std::size_t>(r)] = attn.row(r).maxCoeff();

  const double lo = *std::min_element(raw.begin(), raw.end());
  const double hi = *std::max_element(raw.begin(), raw.end());
  out.pct.assign(raw.size(), 0.0);
  if (hi > lo) {
    for (std::size_t i = 0; i < raw.size(); ++i)
      out.pct[i] = 100.0 * (raw[i] - lo) / (hi - lo);
  } else {
    out.degenerate = true;  // constant scores; defined as all-zero
  }
  return out;
}

std::vector<std::string> default_tokens(Eigen::Index count) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < count; ++i) out.push_back("q" + std::to_string(i));
  return out;
}

}  // namespace

TokenWeightRow token_weights(const Mat& Q, const Mask& q_mask, const std::vector<Mat>& A,
                             const std::vector<Mask>& a_masks,
                             const std::vector<std::string>& question_tokens) {
  if (A.empty() || A.size() != a_masks.size())
    throw ArgumentError("token weights: need one mask per choice");
  const int l_real = mask_count(q_mask);

  TokenWeightRow row;
  row.per_choice_percentages = Mat::Zero(static_cast<Eigen::Index>(A.size()), l_real);
  for (std::size_t i = 0; i < A.size(); ++i) {
    SingleChoiceWeights w = weights_for_choice(Q, q_mask, A[i], a_masks[i]);
    row.attention.push_back(w.attention);
    row.degenerate.push_back(w.degenerate);
    for (int c = 0; c < l_real; ++c)
      row.per_choice_percentages(static_cast<Eigen::Index>(i), c) =
          w.pct[static_cast<std::size_t>(c)];
  }
  row.question_tokens = question_tokens.empty() ? default_tokens(l_real) : question_tokens;
  row.question_tokens.resize(static_cast<std::size_t>(l_real));
  return row;
}

StageTriplet stage_triplet(const ForwardOutput& fwd) {
  StageTriplet out;
  out.stage_names = {"encoder_q_vs_a", "refined_q_vs_a", "refined_q_vs_enhanced_a"};

  std::vector<Mat> a_mats;
  std::vector<Mask> a_masks;
  for (const auto& c : fwd.choices) {
    a_mats.push_back(c.A);
    a_masks.push_back(c.a_mask);
  }
  out.stages.push_back(token_weights(fwd.Q, fwd.q_mask, a_mats, a_masks, fwd.q_tokens));

  // Stages 2 and 3 pair each choice with its own refined question, so
  // the rows are assembled choice by choice.
  auto per_choice_stage = [&](bool enhanced) {
    TokenWeightRow stage;
    const int l_real = mask_count(fwd.q_mask);
    stage.question_tokens = fwd.q_tokens.empty()
                                ? default_tokens(l_real)
                                : fwd.q_tokens;
    stage.question_tokens.resize(static_cast<std::size_t>(l_real));
    stage.per_choice_percentages =
        Mat::Zero(static_cast<Eigen::Index>(fwd.choices.size()), l_real);
    for (std::size_t i = 0; i < fwd.choices.size(); ++i) {
      const ChoiceTrace& c = fwd.choices[i];
      const Mat& target = enhanced && c.A_hat.size() > 0 ? c.A_hat : c.A;
      const Mask& target_mask = enhanced && c.A_hat.size() > 0 ? c.ahat_mask : c.a_mask;
      SingleChoiceWeights w = weights_for_choice(c.Qi_hat, fwd.q_mask, target, target_mask);
      stage.attention.push_back(w.attention);
      stage.degenerate.push_back(w.degenerate);
      for (int col = 0; col < l_real; ++col)
        stage.per_choice_percentages(static_cast<Eigen::Index>(i), col) =
            w.pct[static_cast<std::size_t>(col)];
    }
    return stage;
  };
  out.stages.push_back(per_choice_stage(false));
  out.stages.push_back(per_choice_stage(true));
  return out;
}

HeatmapFormat heatmap_format_from_string(const std::string& name) {
  if (name == "json") return HeatmapFormat::JSON;
  if (name == "csv") return HeatmapFormat::CSV;
  if (name == "png") return HeatmapFormat::PNG;
  throw ConfigError("unknown heatmap format: " + name);
}

namespace {

std::vector<std::string> choice_names(std::size_t n, const std::vector<std::string>& given) {
  if (!given.empty()) return given;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("choice" + std::to_string(i));
  return out;
}

}  // namespace

HeatmapData heatmap_data(const TokenWeightRow& row, const std::vector<std::string>& choices) {
  HeatmapData d;
  d.question_tokens = row.question_tokens;
  d.choices = choice_names(static_cast<std::size_t>(row.per_choice_percentages.rows()), choices);
  d.stage_names = {"encoder_q_vs_a"};
  d.matrices.push_back(row.attention);
  std::vector<std::vector<double>> pooled;
  for (Eigen::Index i = 0; i < row.per_choice_percentages.rows(); ++i) {
    std::vector<double> p(static_cast<std::size_t>(row.per_choice_percentages.cols()));
    for (Eigen::Index c = 0; c < row.per_choice_percentages.cols(); ++c)
      p[static_cast<std::size_t>(c)] = row.per_choice_percentages(i, c);
    pooled.push_back(std::move(p));
  }
  d.pooled.push_back(std::move(pooled));
  return d;
}

HeatmapData heatmap_data(const StageTriplet& triplet, const std::vector<std::string>& choices) {
  if (triplet.stages.empty()) throw ArgumentError("heatmap: empty stage list");
  HeatmapData d = heatmap_data(triplet.stages[0], choices);
  d.stage_names = triplet.stage_names;
  for (std::size_t s = 1; s < triplet.stages.size(); ++s) {
    HeatmapData one = heatmap_data(triplet.stages[s], choices);
    d.matrices.push_back(one.matrices[0]);
    d.pooled.push_back(one.pooled[0]);
  }
  return d;
}

namespace {

void write_heatmap_json(const HeatmapData& d, const std::string& path) {
  json root;
  root["question_tokens"] = d.question_tokens;
  root["choices"] = d.choices;
  root["stages"] = d.stage_names;
  json mats = json::array();
  for (const auto& stage : d.matrices) {
    json per_choice = json::array();
    for (const Mat& m : stage) {
      json rows = json::array();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      per_choice.push_back(std::move(rows));
    }
    mats.push_back(std::move(per_choice));
  }
  root["matrices"] = mats;
  root["pooled_percentages"] = d.pooled;

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << root.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

void write_heatmap_csv(const HeatmapData& d, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "stage,choice";
  for (const auto& t : d.question_tokens) {
    std::string safe = t;
    for (auto& ch : safe)
      if (ch == ',' || ch == '\n') ch = ' ';
    os << ',' << safe;
  }
  os << '\n';
  char buf[64];
  for (std::size_t s = 0; s < d.pooled.size(); ++s) {
    for (std::size_t i = 0; i < d.pooled[s].size(); ++i) {
      os << d.stage_names[s] << ',' << i;
      for (double v : d.pooled[s][i]) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << ',' << buf;
      }
      os << '\n';
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

void write_heatmap_png(const HeatmapData& d, const std::string& path) {
  const int cell = 18;
  const int label_w = 110;
  const int header_h = 14;
  const int gap = 16;
  const int l = static_cast<int>(d.question_tokens.size());
  const int n = static_cast<int>(d.choices.size());
  const int panel_w = label_w + l * cell;
  const int stages = static_cast<int>(d.pooled.size());
  const int width = stages * panel_w + (stages - 1) * gap + 8;
  const int height = header_h + (n + 1) * cell + 8;

  img::Image image(width, height);
  for (int s = 0; s < stages; ++s) {
    const int x0 = 4 + s * (panel_w + gap);
    image.text(x0, 2, d.stage_names[static_cast<std::size_t>(s)].substr(0, 18), 1, 60, 60, 60);
    // column labels: question tokens, clipped to the cell width
    for (int c = 0; c < l; ++c)
      image.text(x0 + label_w + c * cell + 2, header_h + 2,
                 d.question_tokens[static_cast<std::size_t>(c)].substr(0, 2), 1, 0, 0, 0);
    for (int i = 0; i < n; ++i) {
      const int y = header_h + (i + 1) * cell;
      image.text(x0, y + 5, d.choices[static_cast<std::size_t>(i)].substr(0, 17), 1, 0, 0, 0);
      for (int c = 0; c < l; ++c) {
        double v = d.pooled[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]
                           [static_cast<std::size_t>(c)];
        double frac = std::clamp(v / 100.0, 0.0, 1.0);
        auto ch = static_cast<unsigned char>(255.0 - 205.0 * frac);
        image.fill_rect(x0 + label_w + c * cell, y, cell - 1, cell - 1, 255, ch, ch);
      }
    }
  }
  img::write_png(path, image);
}

}  // namespace

void export_heatmap(const HeatmapData& data, const std::string& out_path, HeatmapFormat format) {
  switch (format) {
    case HeatmapFormat::JSON: write_heatmap_json(data, out_path); return;
    case HeatmapFormat::CSV: write_heatmap_csv(data, out_path); return;
    case HeatmapFormat::PNG: write_heatmap_png(data, out_path); return;
  }
  throw ArgumentError("unknown heatmap format");
}

HeatmapData read_heatmap_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  json root = json::parse(is, nullptr, false);
  if (root.is_discarded()) throw IoError("invalid heatmap json: " + path);

  HeatmapData d;
  d.question_tokens = root.at("question_tokens").get<std::vector<std::string>>();
  d.choices = root.at("choices").get<std::vector<std::string>>();
  d.stage_names = root.at("stages").get<std::vector<std::string>>();
  for (const auto& stage : root.at("matrices")) {
    std::vector<Mat> mats;
    for (const auto& m : stage) {
      const auto rows = m.size();
      const auto cols = rows > 0 ? m[0].size() : 0;
      Mat mm(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          mm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m[r][c].get<double>();
      mats.push_back(std::move(mm));
    }
    d.matrices.push_back(std::move(mats));
  }
  d.pooled = root.at("pooled_percentages").get<std::vector<std::vector<std::vector<double>>>>();
  return d;
}

ParameterCount count_parameters(const DCQAModel& model) {
  ParameterCount out;
  out.total = model.params().total_scalars();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", static_cast<double>(out.total) / 1e6);
  out.millions = buf;
  return out;
}

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::FULL: return "FULL";
    case AblationVariant::NoComE: return "-ComE";
    case AblationVariant::NoCR: return "-CR";
    case AblationVariant::NoDE: return "-DE";
    case AblationVariant::NoCE: return "-CE";
    case AblationVariant::NoC1: return "-C1";
    case AblationVariant::NoC2: return "-C2";
    case AblationVariant::NoC3: return "-C3";
  }
  throw ArgumentError("unknown ablation variant");
}

AblationVariant ablation_variant_from_string(const std::string& name) {
  for (AblationVariant v : all_ablation_variants())
    if (to_string(v) == name) return v;
  throw ConfigError("unknown ablation variant: " + name);
}

AblationSet ablation_flags(AblationVariant v) {
  switch (v) {
    case AblationVariant::FULL: return {};
    case AblationVariant::NoComE:
    case AblationVariant::NoC1:
      // Removing C1 severs the commonality path entirely, so the two
      // variants share one flag set.
      return {AblationFlag::NO_COME, AblationFlag::NO_C1};
    case AblationVariant::NoCR: return {AblationFlag::NO_CR};
    case AblationVariant::NoDE: return {AblationFlag::NO_DE};
    case AblationVariant::NoCE:
    case AblationVariant::NoC3:
      return {AblationFlag::NO_CE};
    case AblationVariant::NoC2: return {AblationFlag::NO_C2};
  }
  throw ArgumentError("unknown ablation variant");
}

std::vector<AblationVariant> all_ablation_variants() {
  return {AblationVariant::FULL, AblationVariant::NoComE, AblationVariant::NoCR,
          AblationVariant::NoDE, AblationVariant::NoCE,   AblationVariant::NoC1,
          AblationVariant::NoC2, AblationVariant::NoC3};
}

AblationReport run_ablation(const TrainSetup& base, const std::vector<AblationVariant>& variants,
                            const std::vector<std::uint64_t>& seeds, const DatasetSplits& splits) {
  AblationReport report;
  report.dataset = base.train.dataset;
  for (AblationVariant v : variants) {
    TrainSetup setup = base;
    setup.model.ablation = ablation_flags(v);
    report.rows.push_back({v, multi_seed_run(setup, seeds, splits)});
  }
  return report;
}

std::string format_ablation_table(const AblationReport& report) {
  std::ostringstream os;
  os << "variant     dev             test\n";
  for (const auto& row : report.rows) {
    std::string name = to_string(row.variant);
    name.resize(12, ' ');
    std::string dev = row.result.dev_formatted;
    dev.resize(std::max<std::size_t>(dev.size(), 16), ' ');
    os << name << dev << row.result.test_formatted;
    if (row.result.any_failed) os << "  [partial: seed failures]";
    os << '\n';
  }
  return os.str();
}

}  // namespace dcqa
