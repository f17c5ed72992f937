// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MEMESCOPE_TOKENIZER_H_
#define MEMESCOPE_TOKENIZER_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memescope {

// Ordered WordPiece vocabulary. Ids 0..3 are always [PAD], [CLS], [SEP],
// [UNK]; continuation pieces carry a "##" prefix.
class WordPieceVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kCls = 1;
  static constexpr std::size_t kSep = 2;
  static constexpr std::size_t kUnk = 3;

  // Specials only.
  WordPieceVocab();
  // Throws ValidationError if the specials are misplaced or a token repeats.
  explicit WordPieceVocab(std::vector<std::string> tokens);

  // Specials followed by the given tokens in first-seen order, duplicates and
  // specials skipped.
  static WordPieceVocab from_tokens(const std::vector<std::string>& tokens);

  // One token per line; the line number is the id.
  static WordPieceVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  static bool is_special(std::size_t id) { return id <= kUnk; }

  friend bool operator==(const WordPieceVocab& a, const WordPieceVocab& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Contiguous piece range [begin, end) of one pre-tokenized word.
struct WordSpan {
  std::string word;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// [CLS] pieces... [SEP] [PAD]...; exactly max_text_len ids.
struct TokenSequence {
  std::vector<std::size_t> ids;
  std::vector<bool> pad_mask;
  std::vector<WordSpan> words;
  std::size_t sep_position = 0;

  std::size_t length() const { return ids.size(); }
  // Count of non-pad positions, including [CLS] and [SEP].
  std::size_t real_length() const { return sep_position + 1; }
};

// Lowercases ASCII, splits on whitespace, and emits each ASCII punctuation
// character as its own word.
std::vector<std::string> pre_tokenize(std::string_view text);

// Greedy longest-match-first split of one word. A word that cannot be fully
// covered becomes a single [UNK].
std::vector<std::size_t> wordpiece(std::string_view word, const WordPieceVocab& vocab);

// Throws ValidationError on blank text or max_text_len < 3. Words beyond
// max_text_len - 2 pieces are truncated (a word cut mid-way keeps its prefix).
TokenSequence tokenize(std::string_view text, const WordPieceVocab& vocab,
                       std::size_t max_text_len);

}  // namespace memescope

#endif  // MEMESCOPE_TOKENIZER_H_
