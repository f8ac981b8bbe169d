#pragma once

#include "dcqa/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dcqa {

// One tokenized text. mask is a prefix of ones (right padding); pieces
// holds the surface form of each real token for visualization.
struct TokenRow {
  std::vector<int> ids;
  Mask mask;
  std::vector<std::string> pieces;

  int length() const { return static_cast<int>(ids.size()); }
  void pad_to(int len, int pad_id);
};

inline constexpr int kPadTokenId = 0;
inline constexpr int kStartTokenId = 1;
inline constexpr int kUnkTokenId = 2;
inline constexpr int kNumSpecialTokens = 3;

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenRow tokenize(const std::string& text, int max_len) const = 0;
  virtual int vocab_size() const = 0;
  // "hash" or "vocab"; used by checkpoints to rebuild the tokenizer.
  virtual std::string kind() const = 0;
  virtual std::vector<std::string> vocab() const { return {}; }
};

// Closed-form tokenizer: lowercase, alphanumeric runs are words,
// punctuation characters are single tokens, ids are hashed into
// [kNumSpecialTokens, vocab_size).
class HashTokenizer : public Tokenizer {
 public:
  explicit HashTokenizer(int vocab_size);
  TokenRow tokenize(const std::string& text, int max_len) const override;
  int vocab_size() const override { return vocab_size_; }
  std::string kind() const override { return "hash"; }

 private:
  int vocab_size_;
};

// Word-level tokenizer over an explicit vocabulary; unknown words map
// to the unk id. Used by backends loaded from a model directory.
class VocabTokenizer : public Tokenizer {
 public:
  explicit VocabTokenizer(std::vector<std::string> words);
  TokenRow tokenize(const std::string& text, int max_len) const override;
  int vocab_size() const override;
  std::string kind() const override { return "vocab"; }
  std::vector<std::string> vocab() const override { return words_; }

 private:
  std::vector<std::string> words_;
  std::vector<std::pair<std::string, int>> index_;  // sorted by word
};

// Shared text normalization: lowercased word/punctuation pieces.
std::vector<std::string> split_pieces(const std::string& text);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace dcqa
