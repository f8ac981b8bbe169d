#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcqa/errors.hpp"
#include "dcqa/model.hpp"

#include "testutil.hpp"

#include <sstream>

using namespace dcqa;
using testutil::TestRng;

namespace {

BackendSpec reference_backend(int d = 8, int clue_len = 2) {
  BackendSpec spec;
  spec.config.hidden_dim = d;
  spec.config.vocab_size = 256;
  spec.config.max_seq_len = 32;
  spec.config.clue_len = clue_len;
  spec.seed = 21;
  return spec;
}

DCQAConfig model_config(int n, int d = 8, int clue_len = 2) {
  DCQAConfig cfg;
  cfg.n_choices = n;
  cfg.hidden_dim = d;
  cfg.clue_len = clue_len;
  cfg.mlp_hidden = d;
  return cfg;
}

MCQExample example5() {
  MCQExample ex;
  ex.id = "x1";
  ex.question = "which gas is the primary reason for the greenhouse effect";
  ex.choices = {"oxygen", "carbon dioxide", "nitrogen", "helium gas", "water vapor"};
  ex.answer_index = 1;
  ex.dataset_tag = DatasetTag::SYNTHETIC;
  return ex;
}

MCQExample random_example(TestRng& rng, int n, int id) {
  MCQExample ex;
  ex.id = "r" + std::to_string(id);
  std::ostringstream q;
  int qlen = rng.uniform_int(2, 6);
  for (int i = 0; i < qlen; ++i) q << "q" << rng.uniform_int(0, 30) << ' ';
  ex.question = q.str();
  for (int c = 0; c < n; ++c) {
    std::ostringstream a;
    int alen = rng.uniform_int(1, 4);
    for (int i = 0; i < alen; ++i) a << "c" << rng.uniform_int(0, 30) << ' ';
    ex.choices.push_back(a.str());
  }
  ex.answer_index = rng.uniform_int(0, n - 1);
  ex.dataset_tag = DatasetTag::SYNTHETIC;
  return ex;
}

}  // namespace

TEST_CASE("config validation") {
  DCQAConfig cfg = model_config(5);
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("NO_C1 without NO_COME is inconsistent") {
    cfg.ablation = {AblationFlag::NO_C1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("NO_COME without NO_C1 is inconsistent") {
    cfg.ablation = {AblationFlag::NO_COME};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("paired flags are fine") {
    cfg.ablation = {AblationFlag::NO_COME, AblationFlag::NO_C1};
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("n_choices below two") {
    cfg = model_config(1);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("represent_contexts") {
  DCQAModel model(model_config(5), reference_backend(), 1);
  MCQExample ex = example5();
  EncodedContexts enc = model.represent_contexts(ex);

  CHECK(enc.Q.cols() == 8);
  CHECK(enc.A.size() == 5);
  for (const auto& a : enc.A) {
    CHECK(a.cols() == 8);
    CHECK(a.rows() == enc.A[0].rows());  // shared padded length
  }

  SUBCASE("Q does not depend on the choices; swapping choices swaps A") {
    MCQExample swapped = ex;
    std::swap(swapped.choices[0], swapped.choices[1]);
    EncodedContexts enc2 = model.represent_contexts(swapped);
    CHECK(testutil::max_abs_diff(enc.Q, enc2.Q) == 0.0);
    CHECK(testutil::max_abs_diff(enc.A[0], enc2.A[1]) == 0.0);
    CHECK(testutil::max_abs_diff(enc.A[1], enc2.A[0]) == 0.0);
    CHECK(testutil::max_abs_diff(enc.A[2], enc2.A[2]) == 0.0);
  }
  SUBCASE("bit-identical across repeated calls") {
    EncodedContexts enc2 = model.represent_contexts(ex);
    CHECK(testutil::max_abs_diff(enc.Q, enc2.Q) == 0.0);
    for (std::size_t i = 0; i < enc.A.size(); ++i)
      CHECK(testutil::max_abs_diff(enc.A[i], enc2.A[i]) == 0.0);
  }
  SUBCASE("wrong choice count is rejected") {
    MCQExample bad = ex;
    bad.choices.pop_back();
    CHECK_THROWS_AS(model.represent_contexts(bad), ArgumentError);
  }
}

TEST_CASE("forward returns a probability distribution and all intermediates") {
  DCQAModel model(model_config(5), reference_backend(), 2);
  ForwardOutput out = model.forward(example5());

  CHECK(out.probs.size() == 5);
  CHECK(out.probs.minCoeff() >= 0.0);
  CHECK(out.probs.sum() == doctest::Approx(1.0).epsilon(1e-6));

  CHECK(out.C.size() > 0);
  CHECK(out.Qc_hat.size() > 0);
  CHECK(out.choices.size() == 5);
  for (const auto& c : out.choices) {
    CHECK(c.Qa_hat.rows() == out.Q.rows());
    CHECK(c.Qi_hat.rows() == out.Q.rows());
    CHECK(c.K.rows() == 2);                   // clue_len
    CHECK(c.A_hat.rows() == c.A.rows() + 2);  // m + p
    CHECK(c.a_pooled.size() == 8);
  }
}

TEST_CASE("permuting choices permutes the probabilities") {
  DCQAModel model(model_config(4), reference_backend(), 5);
  TestRng rng(71);
  for (int trial = 0; trial < 8; ++trial) {
    MCQExample ex = random_example(rng, 4, trial);
    Vec base = model.forward(ex).probs;

    std::vector<int> perm{2, 0, 3, 1};
    MCQExample permuted = ex;
    for (int i = 0; i < 4; ++i)
      permuted.choices[static_cast<std::size_t>(i)] =
          ex.choices[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    Vec moved = model.forward(permuted).probs;
    for (int i = 0; i < 4; ++i)
      CHECK(moved(i) == doctest::Approx(base(perm[static_cast<std::size_t>(i)])).epsilon(1e-5));
  }
}

TEST_CASE("every ablation variant runs and stays on the simplex") {
  const std::vector<AblationSet> variants = {
      {},
      {AblationFlag::NO_COME, AblationFlag::NO_C1},
      {AblationFlag::NO_CR},
      {AblationFlag::NO_DE},
      {AblationFlag::NO_CE},
      {AblationFlag::NO_C2},
      {AblationFlag::NO_COME, AblationFlag::NO_C1, AblationFlag::NO_CR, AblationFlag::NO_DE,
       AblationFlag::NO_CE},
  };
  MCQExample ex = example5();
  for (const auto& flags : variants) {
    DCQAConfig cfg = model_config(5);
    cfg.ablation = flags;
    DCQAModel model(cfg, reference_backend(), 3);
    ForwardOutput out = model.forward(ex);
    CHECK(out.probs.sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.probs.minCoeff() >= 0.0);

    // each flag removes exactly its piece of the pipeline
    if (flags.count(AblationFlag::NO_COME)) CHECK(out.C.size() == 0);
    if (flags.count(AblationFlag::NO_C1)) CHECK(out.Qc_hat.size() == 0);
    if (flags.count(AblationFlag::NO_DE)) CHECK(out.choices[0].K.size() == 0);
    if (flags.count(AblationFlag::NO_CE)) CHECK(out.choices[0].A_hat.size() == 0);
  }
}

TEST_CASE("ablation: NO_CR keeps C1 computed but unused") {
  DCQAConfig cfg = model_config(5);
  cfg.ablation = {AblationFlag::NO_CR};
  DCQAModel model(cfg, reference_backend(), 4);
  ForwardOutput out = model.forward(example5());
  CHECK(out.C.size() > 0);
  CHECK(out.Qc_hat.size() > 0);
  for (const auto& c : out.choices) CHECK(testutil::max_abs_diff(c.Qi_hat, c.Qa_hat) == 0.0);
}

TEST_CASE("score head") {
  const int d = 6;
  TestRng rng(83);
  MlpWeights w;
  w.w1 = rng.matrix(2 * d, 4);
  w.b1 = rng.matrix(1, 4);
  w.w2 = rng.matrix(4, 1);
  w.b2 = rng.matrix(1, 1);
  Vec q = rng.matrix(d, 1).col(0);
  Vec a = rng.matrix(d, 1).col(0);

  SUBCASE("zero weights give zero logits, hence uniform probabilities") {
    MlpWeights zero{Mat::Zero(2 * d, 4), Mat::Zero(1, 4), Mat::Zero(4, 1), Mat::Zero(1, 1)};
    CHECK(score_head(q, a, zero) == 0.0);
  }
  SUBCASE("matches a loop-computed MLP") {
    double got = score_head(q, a, w);
    std::vector<double> qa;
    for (int i = 0; i < d; ++i) qa.push_back(q(i));
    for (int i = 0; i < d; ++i) qa.push_back(a(i));
    double expected = w.b2(0, 0);
    for (int h = 0; h < 4; ++h) {
      double pre = w.b1(0, h);
      for (int i = 0; i < 2 * d; ++i) pre += qa[static_cast<std::size_t>(i)] * w.w1(i, h);
      expected += std::tanh(pre) * w.w2(h, 0);
    }
    CHECK(std::abs(got - expected) < 1e-10);
  }
  SUBCASE("softmax over logits is shift invariant") {
    Mat logits = rng.matrix(1, 5, 2.0);
    Mat shifted = logits.array() + 17.3;
    Mat p1 = masked_softmax_rows(logits, nullptr);
    Mat p2 = masked_softmax_rows(shifted, nullptr);
    CHECK(testutil::max_abs_diff(p1, p2) < 1e-6);
  }
  SUBCASE("shape mismatch") {
    Vec shorter = rng.matrix(d - 1, 1).col(0);
    CHECK_THROWS_AS(score_head(q, shorter, w), ShapeError);
  }
}

TEST_CASE("zero-initialized score head yields the uniform distribution") {
  DCQAModel model(model_config(5), reference_backend(), 6);
  for (const char* name : {"mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"})
    model.params().find(name)->value.setZero();
  Vec probs = model.forward(example5()).probs;
  for (int i = 0; i < 5; ++i) CHECK(probs(i) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("training loss gradients match finite differences end to end") {
  DCQAModel model(model_config(3, 6, 2), reference_backend(6, 2), 7);
  TestRng rng(91);
  MCQExample ex = random_example(rng, 3, 0);

  auto eval = [&] {
    Tape t;
    return t.value(model.forward_loss(t, ex))(0, 0);
  };

  model.params().zero_grads();
  {
    Tape t;
    t.backward(model.forward_loss(t, ex));
  }

  for (const char* name : {"choice_attn.w", "cross.c1.w_i", "cross.c2.w_i", "cross.c3.w_i",
                           "cross.c1.ln.gain", "cross.c2.ln.bias", "mlp.w1", "mlp.b1", "mlp.w2",
                           "mlp.b2"}) {
    Parameter* p = model.params().find(name);
    REQUIRE(p != nullptr);
    for (int k = 0; k < 4; ++k) {
      Eigen::Index r = rng.uniform_int(0, static_cast<int>(p->value.rows()) - 1);
      Eigen::Index c = rng.uniform_int(0, static_cast<int>(p->value.cols()) - 1);
      double fd = testutil::fd_slot(eval, &p->value(r, c));
      CAPTURE(name);
      CHECK(testutil::grad_rel_error(p->grad(r, c), fd) < 1e-3);
    }
  }
}

TEST_CASE("checkpoint save/load reproduces the forward pass exactly") {
  testutil::TempDir dir("dcqa_model_ckpt");
  DCQAConfig cfg = model_config(5);
  cfg.ablation = {AblationFlag::NO_DE};
  DCQAModel model(cfg, reference_backend(), 8);
  MCQExample ex = example5();
  Vec before = model.forward(ex).probs;

  const std::string path = (dir.path() / "model.dcqa").string();
  save_model(path, model);
  auto loaded = load_model(path);
  CHECK(loaded->config().ablation == cfg.ablation);
  Vec after = loaded->forward(ex).probs;
  CHECK(testutil::max_abs_diff(before, after) == 0.0);
}
