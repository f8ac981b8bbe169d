#include "dcqa/model.hpp"

#include "dcqa/checkpoint.hpp"
#include "dcqa/errors.hpp"
#include "dcqa/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace dcqa {

std::string to_string(AblationFlag flag) {
  switch (flag) {
    case AblationFlag::NO_COME: return "NO_COME";
    case AblationFlag::NO_CR: return "NO_CR";
    case AblationFlag::NO_DE: return "NO_DE";
    case AblationFlag::NO_CE: return "NO_CE";
    case AblationFlag::NO_C1: return "NO_C1";
    case AblationFlag::NO_C2: return "NO_C2";
    case AblationFlag::NO_C3: return "NO_C3";
  }
  throw ArgumentError("unknown ablation flag");
}

AblationFlag ablation_flag_from_string(const std::string& name) {
  for (AblationFlag f : {AblationFlag::NO_COME, AblationFlag::NO_CR, AblationFlag::NO_DE,
                         AblationFlag::NO_CE, AblationFlag::NO_C1, AblationFlag::NO_C2,
                         AblationFlag::NO_C3}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown ablation flag: " + name);
}

void DCQAConfig::validate() const {
  if (n_choices < 2) throw ConfigError("model config: n_choices must be at least 2");
  if (hidden_dim <= 0 || clue_len <= 0 || mlp_hidden <= 0)
    throw ConfigError("model config: counts must be positive");
  if (has(AblationFlag::NO_COME) != has(AblationFlag::NO_C1))
    throw ConfigError(
        "model config: NO_COME and NO_C1 must be ablated together (C1 consumes the "
        "commonality C)");
}

double score_head(const Vec& q_pooled, const Vec& a_pooled, const MlpWeights& w) {
  if (q_pooled.size() != a_pooled.size()) throw ShapeError("score_head: vector lengths differ");
  if (w.w1.rows() != q_pooled.size() + a_pooled.size())
    throw ShapeError("score_head: w1 must have 2d rows");
  Tape t;
  Mat qa(1, q_pooled.size() + a_pooled.size());
  qa << q_pooled.transpose(), a_pooled.transpose();
  Var h = t.tanh(t.add_row_vector(t.matmul(t.leaf(qa), t.leaf(w.w1)), t.leaf(w.b1)));
  Var s = t.add_row_vector(t.matmul(h, t.leaf(w.w2)), t.leaf(w.b2));
  return t.value(s)(0, 0);
}

DCQAModel::DCQAModel(DCQAConfig cfg, BackendSpec backend_spec, std::uint64_t head_seed)
    : cfg_(std::move(cfg)), backend_spec_(std::move(backend_spec)) {
  cfg_.validate();
  backend_ = make_backend(backend_spec_, store_);
  if (backend_->config().hidden_dim != cfg_.hidden_dim)
    throw ConfigError("model config: hidden_dim must match the backend");

  const int d = cfg_.hidden_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(head_seed);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c, double stddev) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, stddev);
    return m;
  };

  if (cfg_.choice_attn_per_pair) {
    const int n = cfg_.n_choices;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        choice_w_.push_back(store_.add(
            "choice_attn.w_" + std::to_string(i) + "_" + std::to_string(j),
            gaussian(d, d, sd)));
      }
  } else {
    choice_w_.push_back(store_.add("choice_attn.w", gaussian(d, d, sd)));
  }

  auto make_site = [&](const std::string& name) {
    return CrossSite{store_.add(name + ".w_i", gaussian(2 * d, d, 1.0 / std::sqrt(2.0 * d))),
                     store_.add(name + ".ln.gain", Mat::Ones(1, d)),
                     store_.add(name + ".ln.bias", Mat::Zero(1, d))};
  };
  c1_ = make_site("cross.c1");
  c2_ = make_site("cross.c2");
  c3_ = make_site("cross.c3");

  mlp_w1_ = store_.add("mlp.w1", gaussian(2 * d, cfg_.mlp_hidden, 1.0 / std::sqrt(2.0 * d)));
  mlp_b1_ = store_.add("mlp.b1", Mat::Zero(1, cfg_.mlp_hidden));
  // Zero output layer: the initial choice distribution is uniform.
  mlp_w2_ = store_.add("mlp.w2", Mat::Zero(cfg_.mlp_hidden, 1));
  mlp_b2_ = store_.add("mlp.b2", Mat::Zero(1, 1));
}

DCQAModel::EncodedVars DCQAModel::encode_contexts(Tape& t, const MCQExample& example) const {
  if (static_cast<int>(example.choices.size()) != cfg_.n_choices)
    throw ArgumentError("forward: example has " + std::to_string(example.choices.size()) +
                        " choices, model expects " + std::to_string(cfg_.n_choices));
  const int max_len = backend_->config().max_seq_len;

  EncodedVars out;
  TokenRow q_row = backend_->tokenize(example.question, max_len);
  out.q_mask = q_row.mask;
  out.q_pieces = q_row.pieces;
  out.Q = backend_->encode(t, q_row);

  // QA context: question + choice, padded to one shared length so the
  // choice-attention matrices line up.
  std::vector<TokenRow> rows;
  int m = 0;
  for (const auto& choice : example.choices) {
    rows.push_back(backend_->tokenize(example.question + " " + choice, max_len));
    m = std::max(m, rows.back().length());
  }
  for (auto& row : rows) {
    row.pad_to(m, kPadTokenId);
    out.a_masks.push_back(row.mask);
    out.A.push_back(backend_->encode(t, row));
  }
  return out;
}

DCQAModel::TapeForward DCQAModel::build_forward(Tape& t, const MCQExample& example) const {
  cfg_.validate();
  EncodedVars enc = encode_contexts(t, example);
  const int n = cfg_.n_choices;

  TapeForward f;
  f.Q = enc.Q;
  f.q_mask = enc.q_mask;
  f.q_tokens = enc.q_pieces;

  auto site_weights = [&](const CrossSite& s) {
    return TapeCrossWeights{t.param(*s.w_i), t.param(*s.ln_gain), t.param(*s.ln_bias)};
  };

  // (2) commonality of all choices.
  if (!cfg_.has(AblationFlag::NO_COME)) {
    std::vector<Var> wv;
    wv.reserve(choice_w_.size());
    for (Parameter* p : choice_w_) wv.push_back(t.param(*p));
    f.C = tape_choice_commonality(t, enc.A, enc.a_masks, wv);
    // A row of C is meaningful wherever any choice has a real token.
    f.c_mask.assign(enc.a_masks[0].size(), 0);
    for (const auto& m : enc.a_masks)
      for (std::size_t r = 0; r < m.size(); ++r)
        if (m[r]) f.c_mask[r] = 1;
  }

  // (3) C1: commonality-conditioned question.
  if (!cfg_.has(AblationFlag::NO_C1)) {
    TapeCrossAttn c1 = tape_cross_attention(t, enc.Q, enc.q_mask, f.C, f.c_mask,
                                            site_weights(c1_));
    f.Qc_hat = c1.enhanced;
    f.qc_pooled = c1.pooled;
  }

  Var logits;
  for (int i = 0; i < n; ++i) {
    TapeChoice tc;
    tc.A = enc.A[static_cast<std::size_t>(i)];
    tc.a_mask = enc.a_masks[static_cast<std::size_t>(i)];

    // (4) C2: choice-conditioned question. Removing C2 leaves the raw
    // question representation in its place.
    if (cfg_.has(AblationFlag::NO_C2)) {
      tc.Qa_hat = enc.Q;
      tc.qa_pooled = t.max_pool_rows(enc.Q, &enc.q_mask);
    } else {
      TapeCrossAttn c2 =
          tape_cross_attention(t, enc.Q, enc.q_mask, tc.A, tc.a_mask, site_weights(c2_));
      tc.Qa_hat = c2.enhanced;
      tc.qa_pooled = c2.pooled;
    }

    // (5) refinement: subtract the commonality-conditioned question.
    if (cfg_.has(AblationFlag::NO_CR) || cfg_.has(AblationFlag::NO_COME)) {
      tc.Qi_hat = tc.Qa_hat;
      tc.qi_pooled = tc.qa_pooled;
    } else {
      tc.Qi_hat = t.sub(tc.Qa_hat, f.Qc_hat);
      tc.qi_pooled = t.sub(tc.qa_pooled, f.qc_pooled);
    }

    // (6) clue generation.
    if (!cfg_.has(AblationFlag::NO_DE)) {
      tc.K = backend_->decode(t, tc.Qi_hat, enc.q_mask, cfg_.clue_len);
    }

    // (7) C3: choice enhancement against the refined question.
    if (cfg_.has(AblationFlag::NO_CE)) {
      tc.a_pooled = t.max_pool_rows(tc.A, &tc.a_mask);
      tc.ahat_mask.clear();
    } else {
      Var target = tc.A;
      tc.ahat_mask = tc.a_mask;
      if (!cfg_.has(AblationFlag::NO_DE)) {
        target = t.concat_rows(tc.A, tc.K);
        tc.ahat_mask.insert(tc.ahat_mask.end(), static_cast<std::size_t>(cfg_.clue_len), 1);
      }
      TapeCrossAttn c3 = tape_cross_attention(t, target, tc.ahat_mask, tc.Qi_hat, enc.q_mask,
                                              site_weights(c3_));
      tc.A_hat = c3.enhanced;
      tc.a_pooled = c3.pooled;
    }

    // (8) confidence logit.
    Var qa = t.concat_cols(tc.qi_pooled, tc.a_pooled);
    Var h = t.tanh(t.add_row_vector(t.matmul(qa, t.param(*mlp_w1_)), t.param(*mlp_b1_)));
    Var s = t.add_row_vector(t.matmul(h, t.param(*mlp_w2_)), t.param(*mlp_b2_));
    logits = logits.valid() ? t.concat_cols(logits, s) : s;

    f.choices.push_back(std::move(tc));
  }
  f.logits = logits;
  return f;
}

ForwardOutput DCQAModel::forward(const MCQExample& example) const {
  Tape t;
  TapeForward f = build_forward(t, example);

  ForwardOutput out;
  out.probs = masked_softmax_rows(t.value(f.logits), nullptr).row(0).transpose();
  out.Q = t.value(f.Q);
  out.q_mask = f.q_mask;
  out.q_tokens = f.q_tokens;
  if (f.C.valid()) {
    out.C = t.value(f.C);
    out.c_mask = f.c_mask;
  }
  if (f.Qc_hat.valid()) {
    out.Qc_hat = t.value(f.Qc_hat);
    out.qc_pooled = t.value(f.qc_pooled).row(0).transpose();
  }
  for (const auto& tc : f.choices) {
    ChoiceTrace ct;
    ct.A = t.value(tc.A);
    ct.a_mask = tc.a_mask;
    ct.Qa_hat = t.value(tc.Qa_hat);
    ct.qa_pooled = t.value(tc.qa_pooled).row(0).transpose();
    ct.Qi_hat = t.value(tc.Qi_hat);
    ct.qi_pooled = t.value(tc.qi_pooled).row(0).transpose();
    if (tc.K.valid()) ct.K = t.value(tc.K);
    if (tc.A_hat.valid()) {
      ct.A_hat = t.value(tc.A_hat);
      ct.ahat_mask = tc.ahat_mask;
    }
    ct.a_pooled = t.value(tc.a_pooled).row(0).transpose();
    out.choices.push_back(std::move(ct));
  }
  return out;
}

Var DCQAModel::forward_loss(Tape& tape, const MCQExample& example) const {
  if (!example.answer_index.has_value())
    throw ArgumentError("forward_loss: example has no gold answer");
  TapeForward f = build_forward(tape, example);
  return tape.cross_entropy(f.logits, *example.answer_index);
}

int DCQAModel::predict(const MCQExample& example) const {
  Tape t;
  TapeForward f = build_forward(t, example);
  Eigen::Index best = 0;
  t.value(f.logits).row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

EncodedContexts DCQAModel::represent_contexts(const MCQExample& example) const {
  Tape t;
  EncodedVars enc = encode_contexts(t, example);
  EncodedContexts out;
  out.Q = t.value(enc.Q);
  out.q_mask = enc.q_mask;
  out.q_pieces = enc.q_pieces;
  for (std::size_t i = 0; i < enc.A.size(); ++i) {
    out.A.push_back(t.value(enc.A[i]));
    out.a_masks.push_back(enc.a_masks[i]);
  }
  return out;
}

// ---- checkpointing ----

namespace {

nlohmann::json config_to_json(const DCQAConfig& c) {
  nlohmann::json flags = nlohmann::json::array();
  for (AblationFlag f : c.ablation) flags.push_back(to_string(f));
  return {{"n_choices", c.n_choices},
          {"hidden_dim", c.hidden_dim},
          {"clue_len", c.clue_len},
          {"mlp_hidden", c.mlp_hidden},
          {"choice_attn_per_pair", c.choice_attn_per_pair},
          {"ablation", flags}};
}

DCQAConfig config_from_json(const nlohmann::json& j) {
  DCQAConfig c;
  c.n_choices = j.at("n_choices").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.clue_len = j.at("clue_len").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.choice_attn_per_pair = j.value("choice_attn_per_pair", false);
  for (const auto& f : j.at("ablation")) c.ablation.insert(ablation_flag_from_string(f));
  return c;
}

nlohmann::json backend_config_to_json(const BackendConfig& b) {
  return {{"name", b.name},         {"hidden_dim", b.hidden_dim}, {"max_seq_len", b.max_seq_len},
          {"clue_len", b.clue_len}, {"vocab_size", b.vocab_size}, {"n_layers", b.n_layers},
          {"ff_dim", b.ff_dim}};
}

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig b;
  b.name = j.at("name").get<std::string>();
  b.hidden_dim = j.at("hidden_dim").get<int>();
  b.max_seq_len = j.at("max_seq_len").get<int>();
  b.clue_len = j.at("clue_len").get<int>();
  b.vocab_size = j.at("vocab_size").get<int>();
  b.n_layers = j.at("n_layers").get<int>();
  b.ff_dim = j.at("ff_dim").get<int>();
  return b;
}

}  // namespace

void save_model(const std::string& path, const DCQAModel& model) {
  nlohmann::json meta;
  meta["model"] = config_to_json(model.config());
  meta["backend"] = backend_config_to_json(model.backend().config());
  meta["backend_seed"] = model.backend_spec().seed;
  meta["tokenizer"] = {{"kind", model.backend().tokenizer().kind()},
                       {"vocab", model.backend().tokenizer().vocab()}};
  save_weights(path, model.params(), meta.dump());
}

std::unique_ptr<DCQAModel> load_model(const std::string& path) {
  // Peek the metadata first to rebuild the exact architecture, then
  // overwrite the freshly initialized weights from the archive.
  nlohmann::json meta = nlohmann::json::parse(peek_weights_meta(path));
  DCQAConfig cfg = config_from_json(meta.at("model"));

  BackendSpec spec;
  spec.config = backend_config_from_json(meta.at("backend"));
  spec.seed = meta.value("backend_seed", std::uint64_t{0});
  // All weights come from the archive, so a directory-backed backend is
  // rebuilt as a plain reference backend with the archived tokenizer.
  spec.config.name = "reference";
  const auto& tok = meta.at("tokenizer");
  if (tok.at("kind").get<std::string>() == "vocab")
    spec.tokenizer =
        std::make_shared<VocabTokenizer>(tok.at("vocab").get<std::vector<std::string>>());

  auto model = std::make_unique<DCQAModel>(cfg, spec, /*head_seed=*/0);
  load_weights(path, model->params());
  return model;
}

}  // namespace dcqa
