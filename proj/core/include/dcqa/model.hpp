#pragma once

#include "dcqa/attention.hpp"
#include "dcqa/backend.hpp"
#include "dcqa/parameters.hpp"
#include "dcqa/tape.hpp"
#include "dcqa/types.hpp"

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace dcqa {

enum class AblationFlag { NO_COME, NO_CR, NO_DE, NO_CE, NO_C1, NO_C2, NO_C3 };

using AblationSet = std::set<AblationFlag>;

std::string to_string(AblationFlag flag);
AblationFlag ablation_flag_from_string(const std::string& name);

struct DCQAConfig {
  int n_choices = 5;
  int hidden_dim = 16;  // d; must equal the backend's hidden_dim
  int clue_len = 10;    // p
  int mlp_hidden = 16;
  bool choice_attn_per_pair = false;
  AblationSet ablation;

  bool has(AblationFlag f) const { return ablation.count(f) != 0; }
  // Flag-set consistency: NO_COME and NO_C1 only ever appear together
  // (C1 consumes C; removing either severs the commonality path).
  void validate() const;
};

struct EncodedContexts {
  Mat Q;
  Mask q_mask;
  std::vector<std::string> q_pieces;
  std::vector<Mat> A;
  std::vector<Mask> a_masks;
};

// Per-choice intermediates of one forward pass, in paper order.
struct ChoiceTrace {
  Mat A;
  Mask a_mask;
  Mat Qa_hat;      // question enhanced by this choice (C2)
  Vec qa_pooled;
  Mat Qi_hat;      // refined, choice-specific question
  Vec qi_pooled;
  Mat K;           // decoder clue states; empty under NO_DE
  Mat A_hat;       // enhanced choice (C3); empty under NO_CE
  Mask ahat_mask;
  Vec a_pooled;
};

struct ForwardOutput {
  Vec probs;
  Mat Q;
  Mask q_mask;
  std::vector<std::string> q_tokens;
  Mat C;        // commonality; empty under NO_COME
  Mask c_mask;
  Mat Qc_hat;   // commonality-conditioned question (C1); empty under NO_C1
  Vec qc_pooled;
  std::vector<ChoiceTrace> choices;
};

struct MlpWeights {
  Mat w1;  // 2d x h
  Mat b1;  // 1 x h
  Mat w2;  // h x 1
  Mat b2;  // 1 x 1
};

// Confidence logit for one choice: one hidden tanh layer over [q; a].
double score_head(const Vec& q_pooled, const Vec& a_pooled, const MlpWeights& weights);

class DCQAModel {
 public:
  DCQAModel(DCQAConfig cfg, BackendSpec backend_spec, std::uint64_t head_seed);

  // Full pipeline with every intermediate the analysis stage consumes.
  ForwardOutput forward(const MCQExample& example) const;

  // Cross-entropy of the gold index against the choice distribution,
  // built on the caller's tape so gradients reach every parameter.
  Var forward_loss(Tape& tape, const MCQExample& example) const;

  // Argmax prediction convenience.
  int predict(const MCQExample& example) const;

  EncodedContexts represent_contexts(const MCQExample& example) const;

  const DCQAConfig& config() const { return cfg_; }
  const BackendSpec& backend_spec() const { return backend_spec_; }
  const Backend& backend() const { return *backend_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

 private:
  struct TapeChoice {
    Var A;
    Mask a_mask;
    Var Qa_hat, qa_pooled;
    Var Qi_hat, qi_pooled;
    Var K;
    Var A_hat;
    Mask ahat_mask;
    Var a_pooled;
  };
  struct TapeForward {
    Var logits;  // 1 x n
    Var Q;
    Mask q_mask;
    std::vector<std::string> q_tokens;
    Var C;
    Mask c_mask;
    Var Qc_hat, qc_pooled;
    std::vector<TapeChoice> choices;
  };

  TapeForward build_forward(Tape& t, const MCQExample& example) const;

  struct EncodedVars {
    Var Q;
    Mask q_mask;
    std::vector<std::string> q_pieces;
    std::vector<Var> A;
    std::vector<Mask> a_masks;
  };
  EncodedVars encode_contexts(Tape& t, const MCQExample& example) const;

  DCQAConfig cfg_;
  BackendSpec backend_spec_;
  ParameterStore store_;
  std::unique_ptr<Backend> backend_;

  std::vector<Parameter*> choice_w_;  // 1 (shared) or n*(n-1) matrices
  struct CrossSite {
    Parameter *w_i, *ln_gain, *ln_bias;
  };
  CrossSite c1_, c2_, c3_;
  Parameter *mlp_w1_, *mlp_b1_, *mlp_w2_, *mlp_b2_;
};

// Checkpoint archive of a full model: weights + DCQAConfig + backend
// description (including the tokenizer vocabulary when explicit).
void save_model(const std::string& path, const DCQAModel& model);
std::unique_ptr<DCQAModel> load_model(const std::string& path);

}  // namespace dcqa
