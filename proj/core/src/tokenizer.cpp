#include "dcqa/tokenizer.hpp"

#include "dcqa/errors.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

namespace dcqa {

void TokenRow::pad_to(int len, int pad_id) {
  while (length() < len) {
    ids.push_back(pad_id);
    mask.push_back(0);
    pieces.emplace_back();
  }
}

std::vector<std::string> split_pieces(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

TokenRow rows_from_pieces(std::vector<std::string> pieces, int max_len,
                          const std::function<int(const std::string&)>& to_id) {
  if (pieces.empty()) throw ArgumentError("tokenize: text is empty after normalization");
  if (max_len <= 0) throw ArgumentError("tokenize: max_len must be positive");
  if (static_cast<int>(pieces.size()) > max_len) pieces.resize(static_cast<std::size_t>(max_len));
  TokenRow row;
  row.ids.reserve(pieces.size());
  row.mask.assign(pieces.size(), 1);
  for (const auto& p : pieces) row.ids.push_back(to_id(p));
  row.pieces = std::move(pieces);
  return row;
}

}  // namespace

HashTokenizer::HashTokenizer(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size_ <= kNumSpecialTokens)
    throw ArgumentError("hash tokenizer: vocab_size must exceed the special-token count");
}

TokenRow HashTokenizer::tokenize(const std::string& text, int max_len) const {
  const std::uint64_t buckets = static_cast<std::uint64_t>(vocab_size_ - kNumSpecialTokens);
  return rows_from_pieces(split_pieces(text), max_len, [&](const std::string& p) {
    return kNumSpecialTokens + static_cast<int>(fnv1a64(p) % buckets);
  });
}

VocabTokenizer::VocabTokenizer(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i)
    index_.emplace_back(words_[i], kNumSpecialTokens + static_cast<int>(i));
  std::sort(index_.begin(), index_.end());
}

int VocabTokenizer::vocab_size() const {
  return kNumSpecialTokens + static_cast<int>(words_.size());
}

TokenRow VocabTokenizer::tokenize(const std::string& text, int max_len) const {
  return rows_from_pieces(split_pieces(text), max_len, [&](const std::string& p) {
    auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(p, 0),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it != index_.end() && it->first == p) return it->second;
    return kUnkTokenId;
  });
}

}  // namespace dcqa
