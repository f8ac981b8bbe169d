#pragma once

#include "dcqa/tape.hpp"
#include "dcqa/types.hpp"

#include <vector>

namespace dcqa {

// Pairwise choice-attention weight. One shared d x d matrix by default;
// the per-pair variant keeps one matrix per ordered pair (i, j), i != j,
// stored row-major with the diagonal omitted.
struct ChoiceAttnWeights {
  enum class Sharing { Shared, PerPair };
  Sharing sharing = Sharing::Shared;
  Mat shared;
  std::vector<Mat> per_pair;

  static ChoiceAttnWeights make_shared_weight(Mat w) {
    ChoiceAttnWeights out;
    out.sharing = Sharing::Shared;
    out.shared = std::move(w);
    return out;
  }
};

// W_I (2d x d) plus the affine of the closing normalization.
struct CrossAttnWeights {
  Mat w_i;       // 2d x d
  Mat ln_gain;   // 1 x d
  Mat ln_bias;   // 1 x d

  static CrossAttnWeights identity_affine(Mat w) {
    CrossAttnWeights out;
    out.ln_gain = Mat::Ones(1, w.cols());
    out.ln_bias = Mat::Zero(1, w.cols());
    out.w_i = std::move(w);
    return out;
  }
};

// Enhanced matrix plus its max-pooled summary vector.
struct CrossAttnOutput {
  Mat enhanced;
  Vec pooled;
};

struct RefinedQuestion {
  Mat matrix;
  Vec pooled;
};

// ---- tape compositions (used by the model's forward pass) ----

struct TapeCrossAttn {
  Var enhanced;
  Var pooled;
};

struct TapeCrossWeights {
  Var w_i;
  Var ln_gain;
  Var ln_bias;
};

// Unified commonality of all choices:
//   S_ij = rowsoftmax(A_i W A_j^T), masked keys excluded;
//   C    = (sum_i sum_{j != i} S_ij A_j) / n.
// `weights` holds either one Var (shared) or n*(n-1) Vars (per pair).
Var tape_choice_commonality(Tape& t, const std::vector<Var>& choices,
                            const std::vector<Mask>& masks, const std::vector<Var>& weights);

// Two-directional cross attention between a target and a context:
//   I_q = rowsoftmax(X T^T);  I_c = rowsoftmax(T X^T);
//   T_x = I_c [I_q T ; X];    enhanced = norm(T + T_x W_I);
//   pooled = column max over unmasked target rows.
TapeCrossAttn tape_cross_attention(Tape& t, Var target, const Mask& target_mask, Var context,
                                   const Mask& context_mask, const TapeCrossWeights& w);

// ---- pure entry points (inference/analysis); same code path via a local tape ----

Mat choice_attention_commonality(const std::vector<Mat>& choices, const ChoiceAttnWeights& weights,
                                 const std::vector<Mask>& masks);

CrossAttnOutput cross_attention(const Mat& target, const Mask& target_mask, const Mat& context,
                                const Mask& context_mask, const CrossAttnWeights& weights);

// Element-wise subtraction of both parts: matrix = a.enhanced - b.enhanced,
// pooled = a.pooled - b.pooled.
RefinedQuestion refine(const CrossAttnOutput& with_choice, const CrossAttnOutput& with_commonality);

// Per-feature max over unmasked rows.
Vec max_pool_tokens(const Mat& x, const Mask& mask);

// Row-wise normalization at the identity affine (gain 1, bias 0), eps 1e-6.
Mat layer_normalize(const Mat& x);

}  // namespace dcqa
