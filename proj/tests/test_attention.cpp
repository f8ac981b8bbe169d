#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcqa/attention.hpp"
#include "dcqa/errors.hpp"
#include "dcqa/parameters.hpp"

#include "testutil.hpp"

using namespace dcqa;
using testutil::ones_mask;
using testutil::TestRng;

namespace {

CrossAttnWeights random_cross_weights(TestRng& rng, int d) {
  CrossAttnWeights w;
  w.w_i = rng.matrix(2 * d, d, 0.7);
  w.ln_gain = Mat(rng.matrix(1, d, 0.3).array() + 1.0);
  w.ln_bias = rng.matrix(1, d, 0.3);
  return w;
}

}  // namespace

TEST_CASE("commonality: singleton softmax gives the pair average") {
  // n=2, m=1, d=1: each 1x1 softmax is [1], so C = (A_2 + A_1) / 2.
  const double a = 1.7, b = -0.4;
  std::vector<Mat> A{Mat::Constant(1, 1, a), Mat::Constant(1, 1, b)};
  std::vector<Mask> masks{ones_mask(1), ones_mask(1)};
  auto w = ChoiceAttnWeights::make_shared_weight(Mat::Constant(1, 1, 123.0));
  Mat C = choice_attention_commonality(A, w, masks);
  CHECK(C(0, 0) == doctest::Approx((a + b) / 2).epsilon(1e-12));
}

TEST_CASE("commonality: zero weight and identical choices") {
  // W = 0 makes every softmax row uniform; n(n-1) identical terms / n
  // leaves (n-1) x row-mean in every row.
  TestRng rng(5);
  const int n = 4, m = 3, d = 2;
  Mat base = rng.matrix(m, d);
  std::vector<Mat> A(n, base);
  std::vector<Mask> masks(n, ones_mask(m));
  auto w = ChoiceAttnWeights::make_shared_weight(Mat::Zero(d, d));
  Mat C = choice_attention_commonality(A, w, masks);
  Eigen::RowVectorXd row_mean = base.colwise().mean();
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < d; ++c)
      CHECK(C(r, c) == doctest::Approx((n - 1) * row_mean(c)).epsilon(1e-12));
}

TEST_CASE("commonality matches the loop oracle") {
  TestRng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = rng.uniform_int(2, 5);
    const int m = rng.uniform_int(1, 8);
    const int d = rng.uniform_int(1, 8);
    std::vector<Mat> A;
    std::vector<Mask> masks;
    for (int i = 0; i < n; ++i) {
      A.push_back(rng.matrix(m, d));
      masks.push_back(rng.mask(m));
    }
    Mat W = rng.matrix(d, d);
    auto weights = ChoiceAttnWeights::make_shared_weight(W);
    Mat got = choice_attention_commonality(A, weights, masks);
    Mat expected =
        testutil::oracle_choice_commonality(A, masks, [&](int, int) -> const Mat& { return W; });
    CHECK(testutil::max_abs_diff(got, expected) < 1e-10);
  }
}

TEST_CASE("commonality per-pair weights match the loop oracle") {
  TestRng rng(23);
  const int n = 3, m = 4, d = 3;
  std::vector<Mat> A;
  std::vector<Mask> masks;
  for (int i = 0; i < n; ++i) {
    A.push_back(rng.matrix(m, d));
    masks.push_back(ones_mask(m));
  }
  ChoiceAttnWeights weights;
  weights.sharing = ChoiceAttnWeights::Sharing::PerPair;
  std::vector<std::vector<Mat>> table(n, std::vector<Mat>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      table[i][j] = rng.matrix(d, d);
      weights.per_pair.push_back(table[i][j]);
    }
  Mat got = choice_attention_commonality(A, weights, masks);
  Mat expected = testutil::oracle_choice_commonality(
      A, masks, [&](int i, int j) -> const Mat& { return table[i][j]; });
  CHECK(testutil::max_abs_diff(got, expected) < 1e-10);
}

TEST_CASE("commonality is invariant under choice permutation with shared W") {
  TestRng rng(29);
  const int n = 4, m = 5, d = 6;
  std::vector<Mat> A;
  std::vector<Mask> masks;
  for (int i = 0; i < n; ++i) {
    A.push_back(rng.matrix(m, d));
    masks.push_back(rng.mask(m));
  }
  auto w = ChoiceAttnWeights::make_shared_weight(rng.matrix(d, d));
  Mat before = choice_attention_commonality(A, w, masks);

  std::vector<Mat> A2{A[2], A[0], A[3], A[1]};
  std::vector<Mask> masks2{masks[2], masks[0], masks[3], masks[1]};
  Mat after = choice_attention_commonality(A2, w, masks2);
  CHECK(testutil::max_abs_diff(before, after) < 1e-6);
}

TEST_CASE("commonality argument errors") {
  std::vector<Mat> one{Mat::Zero(2, 2)};
  std::vector<Mask> masks{ones_mask(2)};
  auto w = ChoiceAttnWeights::make_shared_weight(Mat::Zero(2, 2));
  CHECK_THROWS_AS(choice_attention_commonality(one, w, masks), ArgumentError);

  std::vector<Mat> bad{Mat::Zero(2, 2), Mat::Zero(3, 2)};
  std::vector<Mask> masks2{ones_mask(2), ones_mask(3)};
  CHECK_THROWS_AS(choice_attention_commonality(bad, w, masks2), ShapeError);
}

TEST_CASE("cross attention: 1x1 singleton") {
  const double tv = 0.8, cv = -1.3, w1 = 0.5, w2 = 2.0;
  Mat target = Mat::Constant(1, 1, tv);
  Mat context = Mat::Constant(1, 1, cv);
  CrossAttnWeights w = CrossAttnWeights::identity_affine(Mat(2, 1));
  w.w_i << w1, w2;

  auto out = cross_attention(target, ones_mask(1), context, ones_mask(1), w);
  Mat expected = layer_normalize(Mat::Constant(1, 1, tv + tv * w1 + cv * w2));
  CHECK(testutil::max_abs_diff(out.enhanced, expected) < 1e-12);
  CHECK(out.pooled(0) == doctest::Approx(expected(0, 0)));
}

TEST_CASE("cross attention matches the loop oracle") {
  TestRng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const int l = rng.uniform_int(1, 8);
    const int m = rng.uniform_int(1, 8);
    const int d = rng.uniform_int(2, 8);
    Mat target = rng.matrix(l, d);
    Mat context = rng.matrix(m, d);
    Mask tmask = rng.mask(l);
    Mask cmask = rng.mask(m);
    CrossAttnWeights w = random_cross_weights(rng, d);

    auto got = cross_attention(target, tmask, context, cmask, w);
    auto expected = testutil::oracle_cross_attention(target, tmask, context, cmask, w.w_i,
                                                     w.ln_gain.row(0).transpose(),
                                                     w.ln_bias.row(0).transpose());
    CHECK(testutil::max_abs_diff(got.enhanced, expected.enhanced) < 1e-10);
    CHECK(testutil::max_abs_diff(got.pooled, expected.pooled) < 1e-10);
  }
}

TEST_CASE("cross attention softmax rows sum to one and honor masks") {
  TestRng rng(37);
  const int l = 5, m = 4, d = 3;
  Mat target = rng.matrix(l, d);
  Mat context = rng.matrix(m, d);
  Mask tmask{1, 1, 1, 0, 0};
  Mask cmask{1, 1, 0, 1};

  Tape t;
  Var iq = t.softmax_rows(t.matmul_nt(t.leaf(context), t.leaf(target)), &tmask);
  Var ic = t.softmax_rows(t.matmul_nt(t.leaf(target), t.leaf(context)), &cmask);
  for (Eigen::Index r = 0; r < m; ++r) {
    CHECK(t.value(iq).row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(t.value(iq)(r, 3) == 0.0);
    CHECK(t.value(iq)(r, 4) == 0.0);
  }
  for (Eigen::Index r = 0; r < l; ++r) {
    CHECK(t.value(ic).row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(t.value(ic)(r, 2) == 0.0);
  }
}

TEST_CASE("cross attention degenerate inputs") {
  Mat x = Mat::Ones(2, 3);
  Mask ok = ones_mask(2);
  Mask none{0, 0};
  CrossAttnWeights w = CrossAttnWeights::identity_affine(Mat::Zero(6, 3));
  CHECK_THROWS_AS(cross_attention(x, none, x, ok, w), DegenerateInputError);
  CHECK_THROWS_AS(cross_attention(x, ok, x, none, w), DegenerateInputError);
  CrossAttnWeights bad = CrossAttnWeights::identity_affine(Mat::Zero(4, 3));
  CHECK_THROWS_AS(cross_attention(x, ok, x, ok, bad), ShapeError);
}

TEST_CASE("refine") {
  TestRng rng(41);
  CrossAttnOutput a{rng.matrix(3, 4), rng.matrix(4, 1).col(0)};
  CrossAttnOutput b{rng.matrix(3, 4), rng.matrix(4, 1).col(0)};

  SUBCASE("identical inputs give exactly zero") {
    auto r = refine(a, a);
    CHECK(r.matrix.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.pooled.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero commonality is the identity") {
    CrossAttnOutput zero{Mat::Zero(3, 4), Vec::Zero(4)};
    auto r = refine(a, zero);
    CHECK(testutil::max_abs_diff(r.matrix, a.enhanced) == 0.0);
  }
  SUBCASE("entrywise difference") {
    auto r = refine(a, b);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(r.matrix(i, j) == a.enhanced(i, j) - b.enhanced(i, j));
    for (int j = 0; j < 4; ++j) CHECK(r.pooled(j) == a.pooled(j) - b.pooled(j));
  }
  SUBCASE("shape mismatch") {
    CrossAttnOutput small{Mat::Zero(2, 4), Vec::Zero(4)};
    CHECK_THROWS_AS(refine(a, small), ShapeError);
  }
}

TEST_CASE("max pool tokens") {
  SUBCASE("single row is returned as-is") {
    Mat x(1, 3);
    x << 4, -1, 2;
    Vec p = max_pool_tokens(x, ones_mask(1));
    CHECK(p(0) == 4);
    CHECK(p(1) == -1);
  }
  SUBCASE("column-wise maxima") {
    Mat x(2, 2);
    x << 1, -2, 0, 5;
    Vec p = max_pool_tokens(x, ones_mask(2));
    CHECK(p(0) == 1);
    CHECK(p(1) == 5);
  }
  SUBCASE("masked rows never influence the result") {
    TestRng rng(43);
    Mat x = rng.matrix(4, 3);
    Mask mask{1, 1, 0, 1};
    Vec before = max_pool_tokens(x, mask);
    x.row(2).setConstant(1e9);
    Vec after = max_pool_tokens(x, mask);
    CHECK(testutil::max_abs_diff(before, after) == 0.0);
  }
  SUBCASE("all-masked throws") {
    Mask none{0, 0};
    CHECK_THROWS_AS(max_pool_tokens(Mat::Ones(2, 2), none), DegenerateInputError);
  }
}

TEST_CASE("layer normalize") {
  SUBCASE("constant row collapses to ~zero via the epsilon guard") {
    Mat x = Mat::Constant(1, 4, 3.0);
    Mat y = layer_normalize(x);
    CHECK(y.cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("rows have mean ~0 and variance ~1") {
    TestRng rng(47);
    Mat y = layer_normalize(rng.matrix(3, 8, 2.0));
    for (int r = 0; r < 3; ++r) {
      double mu = y.row(r).mean();
      double var = (y.row(r).array() - mu).square().sum() / 8.0;
      CHECK(std::abs(mu) < 1e-4);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
  SUBCASE("matches the loop oracle") {
    TestRng rng(53);
    Mat x = rng.matrix(4, 8);
    Mat got = layer_normalize(x);
    Mat expected = testutil::oracle_layer_norm(x, Vec::Ones(8), Vec::Zero(8), 1e-6);
    CHECK(testutil::max_abs_diff(got, expected) < 1e-10);
  }
}

TEST_CASE("gradients through commonality and cross attention") {
  TestRng rng(59);
  const int n = 3, m = 4, l = 3, d = 4;
  std::vector<Mat> A;
  std::vector<Mask> masks;
  for (int i = 0; i < n; ++i) {
    A.push_back(rng.matrix(m, d));
    masks.push_back(ones_mask(m));
  }
  Mat target = rng.matrix(l, d);
  Mask tmask = ones_mask(l);

  ParameterStore store;
  Parameter* W = store.add("w", rng.matrix(d, d));
  Parameter* WI = store.add("w_i", rng.matrix(2 * d, d, 0.5));
  Parameter* gain = store.add("gain", Mat::Ones(1, d));
  Parameter* bias = store.add("bias", Mat::Zero(1, d));

  // Scalar readout: sum of the cross-attention output where the context
  // is the commonality of the choices.
  auto eval = [&] {
    Tape t;
    std::vector<Var> av;
    for (const auto& a : A) av.push_back(t.leaf(a));
    Var c = tape_choice_commonality(t, av, masks, {t.param(*W)});
    TapeCrossWeights cw{t.param(*WI), t.param(*gain), t.param(*bias)};
    auto out = tape_cross_attention(t, t.leaf(target), tmask, c, masks[0], cw);
    return t.value(t.sum(t.add(out.enhanced, t.concat_rows(out.pooled,
                                                           t.slice_rows(out.enhanced, 0, l - 1)))))(
        0, 0);
  };

  store.zero_grads();
  {
    Tape t;
    std::vector<Var> av;
    for (const auto& a : A) av.push_back(t.leaf(a));
    Var c = tape_choice_commonality(t, av, masks, {t.param(*W)});
    TapeCrossWeights cw{t.param(*WI), t.param(*gain), t.param(*bias)};
    auto out = tape_cross_attention(t, t.leaf(target), tmask, c, masks[0], cw);
    Var readout = t.sum(
        t.add(out.enhanced, t.concat_rows(out.pooled, t.slice_rows(out.enhanced, 0, l - 1))));
    t.backward(readout);
  }

  for (Parameter* p : {W, WI, gain, bias}) {
    for (int k = 0; k < 6; ++k) {
      Eigen::Index r = rng.uniform_int(0, static_cast<int>(p->value.rows()) - 1);
      Eigen::Index c = rng.uniform_int(0, static_cast<int>(p->value.cols()) - 1);
      double fd = testutil::fd_slot(eval, &p->value(r, c));
      CAPTURE(p->name);
      CHECK(testutil::grad_rel_error(p->grad(r, c), fd) < 1e-4);
    }
  }
}
