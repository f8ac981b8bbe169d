#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcqa/errors.hpp"
#include "dcqa/parameters.hpp"
#include "dcqa/tape.hpp"

#include "testutil.hpp"

using namespace dcqa;
using testutil::TestRng;

namespace {

// Finite-difference check of d(sum(op(x)))/dx for a unary tape op.
void check_unary_grad(const std::function<Var(Tape&, Var)>& op, const Mat& x0,
                      double tol = 1e-6) {
  Mat x = x0;
  auto eval = [&] {
    Tape t;
    Var in = t.input(x);
    return t.value(t.sum(op(t, in)))(0, 0);
  };
  Tape t;
  Var in = t.input(x);
  Var out = t.sum(op(t, in));
  t.backward(out);
  Mat analytic = t.grad(in);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double fd = testutil::fd_slot(eval, &x(r, c));
      CAPTURE(r);
      CAPTURE(c);
      CHECK(testutil::grad_rel_error(analytic(r, c), fd) < tol);
    }
}

}  // namespace

TEST_CASE("values of basic ops") {
  Tape t;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  CHECK(t.value(t.add(t.leaf(a), t.leaf(b)))(1, 1) == 12);
  CHECK(t.value(t.sub(t.leaf(a), t.leaf(b)))(0, 0) == -4);
  CHECK(t.value(t.matmul(t.leaf(a), t.leaf(b)))(0, 0) == 19);
  CHECK(t.value(t.matmul_nt(t.leaf(a), t.leaf(b)))(0, 0) == 17);  // a * b^T
  CHECK(t.value(t.sum(t.leaf(a)))(0, 0) == 10);
  CHECK(t.value(t.scale(t.leaf(a), 0.5))(1, 0) == 1.5);
}

TEST_CASE("shape errors") {
  Tape t;
  Var a = t.leaf(Mat::Zero(2, 3));
  Var b = t.leaf(Mat::Zero(3, 2));
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.matmul_nt(a, b), ShapeError);
  CHECK_THROWS_AS(t.slice_rows(a, 1, 5), ShapeError);
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("gradients of primitive ops match finite differences") {
  TestRng rng(7);
  Mat x = rng.matrix(3, 4);

  check_unary_grad([](Tape& t, Var v) { return v; }, x);
  check_unary_grad([](Tape& t, Var v) { return t.scale(v, -2.5); }, x);
  check_unary_grad([](Tape& t, Var v) { return t.tanh(v); }, x);
  check_unary_grad([](Tape& t, Var v) { return t.softmax_rows(v); }, x);
  check_unary_grad([](Tape& t, Var v) { return t.slice_rows(v, 1, 2); }, x);
  check_unary_grad([](Tape& t, Var v) { return t.cmul(v, v); }, x);
  check_unary_grad([](Tape& t, Var v) { return t.concat_rows(v, t.scale(v, 2.0)); }, x);
  check_unary_grad([](Tape& t, Var v) { return t.concat_cols(v, v); }, x);

  Mask key_mask{1, 1, 0, 1};
  check_unary_grad([&](Tape& t, Var v) { return t.softmax_rows(v, &key_mask); }, x);

  Mask row_mask{1, 0, 1};
  check_unary_grad([&](Tape& t, Var v) { return t.max_pool_rows(v, &row_mask); }, x);
  check_unary_grad([&](Tape& t, Var v) { return t.zero_masked_rows(v, row_mask); }, x);

  Mat w = rng.matrix(4, 3);
  Mat w2 = rng.matrix(2, 4);
  check_unary_grad([&](Tape& t, Var v) { return t.matmul(v, t.leaf(w)); }, x);
  check_unary_grad([&](Tape& t, Var v) { return t.matmul_nt(v, t.leaf(w2)); }, x);

  Mat gain = rng.matrix(1, 4, 0.5).array() + 1.0;
  Mat bias = rng.matrix(1, 4, 0.2);
  check_unary_grad(
      [&](Tape& t, Var v) { return t.layer_norm(v, t.leaf(gain), t.leaf(bias)); }, x, 1e-5);

  Mat logits = rng.matrix(1, 5);
  Mat lcopy = logits;
  auto eval_ce = [&] {
    Tape t;
    return t.value(t.cross_entropy(t.input(lcopy), 2))(0, 0);
  };
  Tape t;
  Var in = t.input(lcopy);
  Var loss = t.cross_entropy(in, 2);
  t.backward(loss);
  Mat analytic = t.grad(in);
  for (Eigen::Index c = 0; c < lcopy.cols(); ++c) {
    double fd = testutil::fd_slot(eval_ce, &lcopy(0, c));
    CHECK(testutil::grad_rel_error(analytic(0, c), fd) < 1e-6);
  }
}

TEST_CASE("embedding gather/scatter gradients") {
  TestRng rng(11);
  Mat table = rng.matrix(6, 3);
  std::vector<int> ids{1, 4, 1};
  auto eval = [&] {
    Tape t;
    return t.value(t.sum(t.embedding_rows(t.input(table), ids)))(0, 0);
  };
  Tape t;
  Var tab = t.input(table);
  t.backward(t.sum(t.embedding_rows(tab, ids)));
  Mat g = t.grad(tab);
  // Row 1 is gathered twice, row 4 once, everything else never.
  CHECK(g(1, 0) == doctest::Approx(2.0));
  CHECK(g(4, 2) == doctest::Approx(1.0));
  CHECK(g(0, 0) == 0.0);
  double fd = testutil::fd_slot(eval, &table(1, 2));
  CHECK(testutil::grad_rel_error(g(1, 2), fd) < 1e-6);

  Tape t2;
  CHECK_THROWS_AS(t2.embedding_rows(t2.leaf(table), std::vector<int>{9}), ArgumentError);
}

TEST_CASE("parameter leaves accumulate into the store") {
  ParameterStore store;
  Parameter* p = store.add("w", Mat::Ones(2, 2));
  {
    Tape t;
    Var w = t.param(*p);
    t.backward(t.sum(t.scale(w, 3.0)));
  }
  CHECK(p->grad(0, 0) == doctest::Approx(3.0));
  {
    Tape t;
    Var w = t.param(*p);
    t.backward(t.sum(w));
  }
  CHECK(p->grad(1, 1) == doctest::Approx(4.0));  // accumulated across tapes
  store.zero_grads();
  CHECK(p->grad(0, 1) == 0.0);
}

TEST_CASE("a value used twice receives summed gradients") {
  Mat x0(1, 2);
  x0 << 0.3, -0.7;
  Tape t;
  Var x = t.input(x0);
  Var y = t.add(t.cmul(x, x), t.scale(x, 2.0));  // x^2 + 2x
  t.backward(t.sum(y));
  Mat g = t.grad(x);
  CHECK(g(0, 0) == doctest::Approx(2 * 0.3 + 2));
  CHECK(g(0, 1) == doctest::Approx(2 * -0.7 + 2));
}

TEST_CASE("masked softmax rows: zeros at masked keys, rows sum to one") {
  TestRng rng(3);
  Mat z = rng.matrix(4, 6, 3.0);
  Mask mask{1, 0, 1, 1, 0, 1};
  Mat y = masked_softmax_rows(z, &mask);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    CHECK(y(r, 1) == 0.0);
    CHECK(y(r, 4) == 0.0);
    CHECK(y.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  Mat expected = testutil::oracle_softmax_rows(z, &mask);
  CHECK(testutil::max_abs_diff(y, expected) < 1e-12);
}

TEST_CASE("max pool over fully masked input throws") {
  Mask all_zero{0, 0};
  CHECK_THROWS_AS(max_pool_rows_value(Mat::Ones(2, 2), &all_zero), DegenerateInputError);
}
