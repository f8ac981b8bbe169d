#pragma once

#include "dcqa/parameters.hpp"
#include "dcqa/tape.hpp"
#include "dcqa/tokenizer.hpp"
#include "dcqa/types.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dcqa {

struct BackendConfig {
  std::string name = "reference";
  int hidden_dim = 16;   // d
  int max_seq_len = 64;
  int clue_len = 10;     // p
  int vocab_size = 2048;
  int n_layers = 1;
  int ff_dim = 0;        // 0 = 2 * hidden_dim

  int ff() const { return ff_dim > 0 ? ff_dim : 2 * hidden_dim; }
  void validate() const;
};

// Encoder-decoder language model behind tokenize/encode/decode.
// encode returns (seq_len x d) hidden states with padded rows zeroed;
// decode greedily generates clue_len positions conditioned on a memory
// matrix via cross attention and returns their last-layer hidden states.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendConfig& config() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;

  virtual TokenRow tokenize(const std::string& text, int max_len) const = 0;
  virtual Var encode(Tape& tape, const TokenRow& row) const = 0;
  virtual Var decode(Tape& tape, Var memory, const Mask& memory_mask, int clue_len) const = 0;

  // Inference conveniences that run on a local tape.
  Mat encode_values(const TokenRow& row) const;
  Mat decode_values(const Mat& memory, const Mask& memory_mask, int clue_len) const;
};

// Single-head pre-LN-free transformer: embedding + sinusoidal positions,
// n_layers of (self-attention, add+norm, feed-forward, add+norm) in the
// encoder, plus causal self-attention and memory cross-attention in the
// decoder. Deterministic given (config, seed). Doubles throughout, so it
// doubles as the 64-bit gradient-check backend.
class TransformerBackend : public Backend {
 public:
  TransformerBackend(BackendConfig cfg, ParameterStore& store, std::uint64_t seed,
                     std::shared_ptr<const Tokenizer> tokenizer = nullptr,
                     const std::string& param_prefix = "backend");

  const BackendConfig& config() const override { return cfg_; }
  const Tokenizer& tokenizer() const override { return *tok_; }

  TokenRow tokenize(const std::string& text, int max_len) const override;
  Var encode(Tape& tape, const TokenRow& row) const override;
  Var decode(Tape& tape, Var memory, const Mask& memory_mask, int clue_len) const override;

 private:
  struct AttnP {
    Parameter *wq, *wk, *wv, *wo;
  };
  struct NormP {
    Parameter *gain, *bias;
  };
  struct FfnP {
    Parameter *w1, *b1, *w2, *b2;
  };
  struct EncLayer {
    AttnP attn;
    NormP ln1;
    FfnP ffn;
    NormP ln2;
  };
  struct DecLayer {
    AttnP self;
    NormP ln1;
    AttnP cross;
    NormP ln2;
    FfnP ffn;
    NormP ln3;
  };

  Var attend(Tape& t, Var queries, Var keys_values, const Mask* key_mask, const Mat* causal_bias,
             const AttnP& p) const;
  Var ffn(Tape& t, Var x, const FfnP& p) const;
  Var norm(Tape& t, Var x, const NormP& p) const;

  BackendConfig cfg_;
  std::shared_ptr<const Tokenizer> tok_;
  Parameter* embed_ = nullptr;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  Parameter* out_proj_ = nullptr;
  Mat positions_;  // max_seq_len x d
};

struct BackendSpec {
  BackendConfig config;
  std::uint64_t seed = 7;
  std::string model_dir;  // required when config.name == "pretrained"
  // When set, overrides the default tokenizer (checkpoint restore path).
  std::shared_ptr<const Tokenizer> tokenizer;
};

// name "reference": seeded TransformerBackend with a hash tokenizer.
// name "pretrained": TransformerBackend configured from
// <model_dir>/backend.json, weights from <model_dir>/weights.bin and an
// optional word vocabulary from <model_dir>/vocab.txt.
std::unique_ptr<Backend> make_backend(const BackendSpec& spec, ParameterStore& store);

Mat sinusoidal_positions(int max_len, int dim);

}  // namespace dcqa
