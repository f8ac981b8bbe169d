#include "dcqa/attention.hpp"

#include "dcqa/errors.hpp"

namespace dcqa {

namespace {

void check_choice_shapes(const std::vector<Mat>& choices, const std::vector<Mask>& masks) {
  if (choices.size() < 2)
    throw ArgumentError("choice attention needs at least two choices");
  if (masks.size() != choices.size())
    throw ShapeError("choice attention: one mask per choice required");
  for (std::size_t i = 1; i < choices.size(); ++i) {
    if (choices[i].rows() != choices[0].rows() || choices[i].cols() != choices[0].cols())
      throw ShapeError("choice attention: all choice matrices must share one shape");
  }
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (static_cast<Eigen::Index>(masks[i].size()) != choices[i].rows())
      throw ShapeError("choice attention: mask length must equal choice rows");
  }
}

}  // namespace

Var tape_choice_commonality(Tape& t, const std::vector<Var>& choices,
                            const std::vector<Mask>& masks, const std::vector<Var>& weights) {
  const std::size_t n = choices.size();
  if (n < 2) throw ArgumentError("choice attention needs at least two choices");
  const bool shared = weights.size() == 1;
  if (!shared && weights.size() != n * (n - 1))
    throw ArgumentError("choice attention: expected 1 shared or n*(n-1) pair weights");

  Var acc;
  std::size_t pair = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      Var w = shared ? weights[0] : weights[pair];
      ++pair;
      Var logits = t.matmul_nt(t.matmul(choices[i], w), choices[j]);
      Var sim = t.softmax_rows(logits, &masks[j]);
      Var contrib = t.matmul(sim, choices[j]);
      acc = acc.valid() ? t.add(acc, contrib) : contrib;
    }
  }
  return t.scale(acc, 1.0 / static_cast<double>(n));
}

TapeCrossAttn tape_cross_attention(Tape& t, Var target, const Mask& target_mask, Var context,
                                   const Mask& context_mask, const TapeCrossWeights& w) {
  if (mask_count(target_mask) == 0)
    throw DegenerateInputError("cross attention: target is fully masked");
  if (mask_count(context_mask) == 0)
    throw DegenerateInputError("cross attention: context is fully masked");
  if (t.value(target).cols() != t.value(context).cols())
    throw ShapeError("cross attention: target and context feature dims differ");
  if (t.value(w.w_i).rows() != 2 * t.value(target).cols())
    throw ShapeError("cross attention: W_I must have 2d rows");

  Var iq = t.softmax_rows(t.matmul_nt(context, target), &target_mask);  // (m x l)
  Var ic = t.softmax_rows(t.matmul_nt(target, context), &context_mask); // (l x m)
  Var mix = t.concat_cols(t.matmul(iq, target), context);               // (m x 2d)
  Var tx = t.matmul(ic, mix);                                           // (l x 2d)
  Var enhanced = t.layer_norm(t.add(target, t.matmul(tx, w.w_i)), w.ln_gain, w.ln_bias);
  Var pooled = t.max_pool_rows(enhanced, &target_mask);
  return TapeCrossAttn{enhanced, pooled};
}

Mat choice_attention_commonality(const std::vector<Mat>& choices, const ChoiceAttnWeights& weights,
                                 const std::vector<Mask>& masks) {
  check_choice_shapes(choices, masks);
  const std::size_t n = choices.size();
  const Eigen::Index d = choices[0].cols();

  Tape t;
  std::vector<Var> cv;
  cv.reserve(n);
  for (const auto& a : choices) cv.push_back(t.leaf(a));

  std::vector<Var> wv;
  if (weights.sharing == ChoiceAttnWeights::Sharing::Shared) {
    if (weights.shared.rows() != d || weights.shared.cols() != d)
      throw ShapeError("choice attention: W must be d x d");
    wv.push_back(t.leaf(weights.shared));
  } else {
    if (weights.per_pair.size() != n * (n - 1))
      throw ShapeError("choice attention: need n*(n-1) pair matrices");
    for (const auto& w : weights.per_pair) {
      if (w.rows() != d || w.cols() != d) throw ShapeError("choice attention: W must be d x d");
      wv.push_back(t.leaf(w));
    }
  }
  return t.value(tape_choice_commonality(t, cv, masks, wv));
}

CrossAttnOutput cross_attention(const Mat& target, const Mask& target_mask, const Mat& context,
                                const Mask& context_mask, const CrossAttnWeights& weights) {
  if (static_cast<Eigen::Index>(target_mask.size()) != target.rows())
    throw ShapeError("cross attention: target mask length must equal target rows");
  if (static_cast<Eigen::Index>(context_mask.size()) != context.rows())
    throw ShapeError("cross attention: context mask length must equal context rows");
  Tape t;
  TapeCrossWeights w{t.leaf(weights.w_i), t.leaf(weights.ln_gain), t.leaf(weights.ln_bias)};
  TapeCrossAttn out =
      tape_cross_attention(t, t.leaf(target), target_mask, t.leaf(context), context_mask, w);
  return CrossAttnOutput{t.value(out.enhanced), t.value(out.pooled).row(0).transpose()};
}

RefinedQuestion refine(const CrossAttnOutput& with_choice, const CrossAttnOutput& with_commonality) {
  if (with_choice.enhanced.rows() != with_commonality.enhanced.rows() ||
      with_choice.enhanced.cols() != with_commonality.enhanced.cols() ||
      with_choice.pooled.size() != with_commonality.pooled.size())
    throw ShapeError("refine: inputs must share shapes");
  return RefinedQuestion{with_choice.enhanced - with_commonality.enhanced,
                         with_choice.pooled - with_commonality.pooled};
}

Vec max_pool_tokens(const Mat& x, const Mask& mask) { return max_pool_rows_value(x, &mask); }

Mat layer_normalize(const Mat& x) {
  return layer_norm_rows(x, Vec::Ones(x.cols()), Vec::Zero(x.cols()), 1e-6);
}

}  // namespace dcqa
