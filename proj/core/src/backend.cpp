#include "dcqa/backend.hpp"

#include "dcqa/checkpoint.hpp"
#include "dcqa/errors.hpp"
#include "dcqa/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace dcqa {

void BackendConfig::validate() const {
  if (hidden_dim <= 0 || max_seq_len <= 0 || clue_len <= 0 || n_layers <= 0)
    throw ConfigError("backend config: counts must be positive");
  if (vocab_size <= kNumSpecialTokens)
    throw ConfigError("backend config: vocab_size must exceed the special-token count");
}

Mat sinusoidal_positions(int max_len, int dim) {
  Mat pe = Mat::Zero(max_len, dim);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int k = 0; k < dim; ++k) {
      double rate = std::pow(10000.0, -2.0 * static_cast<double>(k / 2) / dim);
      pe(pos, k) = (k % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

Mat Backend::encode_values(const TokenRow& row) const {
  Tape t;
  return t.value(encode(t, row));
}

Mat Backend::decode_values(const Mat& memory, const Mask& memory_mask, int clue_len) const {
  Tape t;
  return t.value(decode(t, t.leaf(memory), memory_mask, clue_len));
}

namespace {

Mat gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  return m;
}

}  // namespace

TransformerBackend::TransformerBackend(BackendConfig cfg, ParameterStore& store,
                                       std::uint64_t seed,
                                       std::shared_ptr<const Tokenizer> tokenizer,
                                       const std::string& param_prefix)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  tok_ = tokenizer ? std::move(tokenizer)
                   : std::make_shared<HashTokenizer>(cfg_.vocab_size);
  if (tok_->vocab_size() > cfg_.vocab_size)
    throw ConfigError("backend: tokenizer vocabulary exceeds configured vocab_size");

  const int d = cfg_.hidden_dim;
  const int ff = cfg_.ff();
  const double attn_sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double ff_sd = 1.0 / std::sqrt(static_cast<double>(ff));
  Rng rng(seed);

  auto mat = [&](const std::string& name, Eigen::Index r, Eigen::Index c, double sd) {
    return store.add(param_prefix + "." + name, gaussian(rng, r, c, sd));
  };
  auto zeros = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
    return store.add(param_prefix + "." + name, Mat::Zero(r, c));
  };
  auto ones = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
    return store.add(param_prefix + "." + name, Mat::Ones(r, c));
  };
  auto make_attn = [&](const std::string& p) {
    return AttnP{mat(p + ".wq", d, d, attn_sd), mat(p + ".wk", d, d, attn_sd),
                 mat(p + ".wv", d, d, attn_sd), mat(p + ".wo", d, d, attn_sd)};
  };
  auto make_norm = [&](const std::string& p) {
    return NormP{ones(p + ".gain", 1, d), zeros(p + ".bias", 1, d)};
  };
  auto make_ffn = [&](const std::string& p) {
    return FfnP{mat(p + ".w1", d, ff, attn_sd), zeros(p + ".b1", 1, ff),
                mat(p + ".w2", ff, d, ff_sd), zeros(p + ".b2", 1, d)};
  };

  embed_ = mat("embed", cfg_.vocab_size, d, 0.5);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    enc_.push_back(EncLayer{make_attn(p + ".attn"), make_norm(p + ".ln1"), make_ffn(p + ".ffn"),
                            make_norm(p + ".ln2")});
  }
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    dec_.push_back(DecLayer{make_attn(p + ".self"), make_norm(p + ".ln1"),
                            make_attn(p + ".cross"), make_norm(p + ".ln2"),
                            make_ffn(p + ".ffn"), make_norm(p + ".ln3")});
  }
  out_proj_ = mat("out_proj", d, cfg_.vocab_size, attn_sd);
  positions_ = sinusoidal_positions(cfg_.max_seq_len, d);
}

TokenRow TransformerBackend::tokenize(const std::string& text, int max_len) const {
  return tok_->tokenize(text, max_len);
}

Var TransformerBackend::attend(Tape& t, Var queries, Var keys_values, const Mask* key_mask,
                               const Mat* causal_bias, const AttnP& p) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden_dim));
  Var q = t.matmul(queries, t.param(*p.wq));
  Var k = t.matmul(keys_values, t.param(*p.wk));
  Var v = t.matmul(keys_values, t.param(*p.wv));
  Var logits = t.scale(t.matmul_nt(q, k), inv_sqrt_d);
  if (causal_bias != nullptr) logits = t.add(logits, t.leaf(*causal_bias));
  Var weights = t.softmax_rows(logits, key_mask);
  return t.matmul(t.matmul(weights, v), t.param(*p.wo));
}

Var TransformerBackend::ffn(Tape& t, Var x, const FfnP& p) const {
  Var h = t.tanh(t.add_row_vector(t.matmul(x, t.param(*p.w1)), t.param(*p.b1)));
  return t.add_row_vector(t.matmul(h, t.param(*p.w2)), t.param(*p.b2));
}

Var TransformerBackend::norm(Tape& t, Var x, const NormP& p) const {
  return t.layer_norm(x, t.param(*p.gain), t.param(*p.bias));
}

Var TransformerBackend::encode(Tape& t, const TokenRow& row) const {
  if (row.length() == 0) throw ArgumentError("encode: empty token row");
  if (row.length() > cfg_.max_seq_len)
    throw CapacityError("encode: sequence exceeds max_seq_len");
  if (static_cast<int>(row.mask.size()) != row.length())
    throw ShapeError("encode: mask/id length mismatch");

  Var x = t.add(t.embedding_rows(t.param(*embed_), row.ids),
                t.leaf(positions_.topRows(row.length())));
  for (const auto& layer : enc_) {
    x = norm(t, t.add(x, attend(t, x, x, &row.mask, nullptr, layer.attn)), layer.ln1);
    x = norm(t, t.add(x, ffn(t, x, layer.ffn)), layer.ln2);
  }
  return t.zero_masked_rows(x, row.mask);
}

Var TransformerBackend::decode(Tape& t, Var memory, const Mask& memory_mask, int clue_len) const {
  if (clue_len < 1) throw ArgumentError("decode: clue length must be at least 1");
  if (clue_len > cfg_.max_seq_len) throw CapacityError("decode: clue length exceeds max_seq_len");
  if (static_cast<Eigen::Index>(memory_mask.size()) != t.value(memory).rows())
    throw ShapeError("decode: memory mask length mismatch");
  if (mask_count(memory_mask) == 0) throw DegenerateInputError("decode: memory fully masked");

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<int> generated{kStartTokenId};
  Var hidden_rows;  // grows to (clue_len x d)

  for (int step = 0; step < clue_len; ++step) {
    const int len = static_cast<int>(generated.size());
    Mat causal = Mat::Zero(len, len);
    for (int r = 0; r < len; ++r)
      for (int c = r + 1; c < len; ++c) causal(r, c) = neg_inf;

    Var x = t.add(t.embedding_rows(t.param(*embed_), generated), t.leaf(positions_.topRows(len)));
    for (const auto& layer : dec_) {
      x = norm(t, t.add(x, attend(t, x, x, nullptr, &causal, layer.self)), layer.ln1);
      x = norm(t, t.add(x, attend(t, x, memory, &memory_mask, nullptr, layer.cross)), layer.ln2);
      x = norm(t, t.add(x, ffn(t, x, layer.ffn)), layer.ln3);
    }
    Var last = t.slice_rows(x, len - 1, 1);
    hidden_rows = hidden_rows.valid() ? t.concat_rows(hidden_rows, last) : last;

    // Greedy next token. The argmax is a discrete choice: it conditions
    // later steps but carries no gradient itself.
    Eigen::RowVectorXd logits = t.value(last).row(0) * out_proj_->value;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    generated.push_back(static_cast<int>(best));
  }
  return hidden_rows;
}

namespace {

std::shared_ptr<const Tokenizer> tokenizer_from_dir(const std::string& dir, int vocab_size) {
  std::ifstream vf(dir + "/vocab.txt");
  if (!vf) return std::make_shared<HashTokenizer>(vocab_size);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(vf, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return std::make_shared<VocabTokenizer>(std::move(words));
}

BackendConfig config_from_dir(const std::string& dir, BackendConfig base) {
  std::ifstream cf(dir + "/backend.json");
  if (!cf) throw IoError("pretrained backend: missing " + dir + "/backend.json");
  nlohmann::json j = nlohmann::json::parse(cf, nullptr, false);
  if (j.is_discarded()) throw IoError("pretrained backend: invalid backend.json in " + dir);
  base.hidden_dim = j.value("hidden_dim", base.hidden_dim);
  base.max_seq_len = j.value("max_seq_len", base.max_seq_len);
  base.clue_len = j.value("clue_len", base.clue_len);
  base.vocab_size = j.value("vocab_size", base.vocab_size);
  base.n_layers = j.value("n_layers", base.n_layers);
  base.ff_dim = j.value("ff_dim", base.ff_dim);
  return base;
}

}  // namespace

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, ParameterStore& store) {
  if (spec.config.name == "reference") {
    return std::make_unique<TransformerBackend>(spec.config, store, spec.seed, spec.tokenizer);
  }
  if (spec.config.name == "pretrained") {
    if (spec.model_dir.empty())
      throw ConfigError("pretrained backend requires a model directory");
    BackendConfig cfg = config_from_dir(spec.model_dir, spec.config);
    auto tok = spec.tokenizer ? spec.tokenizer : tokenizer_from_dir(spec.model_dir, cfg.vocab_size);
    auto backend = std::make_unique<TransformerBackend>(cfg, store, spec.seed, tok);
    load_weights(spec.model_dir + "/weights.bin", store);
    return backend;
  }
  throw ConfigError("unknown backend name: " + spec.config.name);
}

}  // namespace dcqa
