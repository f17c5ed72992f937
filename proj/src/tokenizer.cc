// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/tokenizer.h"

#include <array>
#include <cctype>
#include <fstream>

#include "memescope/error.h"

namespace memescope {
namespace {

constexpr std::array<const char*, 4> kSpecials = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
constexpr std::size_t kMaxWordChars = 100;

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

}  // namespace

WordPieceVocab::WordPieceVocab() : WordPieceVocab(std::vector<std::string>(kSpecials.begin(), kSpecials.end())) {}

WordPieceVocab::WordPieceVocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecials.size()) {
    throw ValidationError("vocabulary needs at least the 4 special tokens");
  }
  for (std::size_t i = 0; i < kSpecials.size(); ++i) {
    if (tokens_[i] != kSpecials[i]) {
      throw ValidationError("vocabulary id " + std::to_string(i) + " must be " + kSpecials[i] +
                            ", found '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) {
      throw ValidationError("vocabulary id " + std::to_string(i) + " is empty");
    }
    if (!index_.emplace(tokens_[i], i).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "' at id " +
                            std::to_string(i));
    }
  }
}

WordPieceVocab WordPieceVocab::from_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> all(kSpecials.begin(), kSpecials.end());
  std::unordered_map<std::string, bool> seen;
  for (const char* s : kSpecials) seen[s] = true;
  for (const auto& t : tokens) {
    if (t.empty() || seen[t]) continue;
    seen[t] = true;
    all.push_back(t);
  }
  return WordPieceVocab(std::move(all));
}

WordPieceVocab WordPieceVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return WordPieceVocab(std::move(tokens));
}

void WordPieceVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<std::size_t> WordPieceVocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& WordPieceVocab::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return words;
}

std::vector<std::size_t> wordpiece(std::string_view word, const WordPieceVocab& vocab) {
  if (word.size() > kMaxWordChars) return {WordPieceVocab::kUnk};
  std::vector<std::size_t> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    std::optional<std::size_t> match;
    while (end > start) {
      std::string candidate(word.substr(start, end - start));
      if (start > 0) candidate.insert(0, "##");
      match = vocab.find(candidate);
      if (match) break;
      --end;
    }
    if (!match) return {WordPieceVocab::kUnk};
    pieces.push_back(*match);
    start = end;
  }
  return pieces;
}

TokenSequence tokenize(std::string_view text, const WordPieceVocab& vocab,
                       std::size_t max_text_len) {
  if (max_text_len < 3) {
    throw ValidationError("max_text_len must be >= 3, got " + std::to_string(max_text_len));
  }
  const std::vector<std::string> words = pre_tokenize(text);
  if (words.empty()) throw ValidationError("cannot tokenize blank text");

  const std::size_t budget = max_text_len - 2;
  TokenSequence seq;
  seq.ids.push_back(WordPieceVocab::kCls);
  for (const auto& w : words) {
    if (seq.ids.size() - 1 >= budget) break;
    const std::vector<std::size_t> pieces = wordpiece(w, vocab);
    WordSpan span{w, seq.ids.size(), seq.ids.size()};
    for (std::size_t id : pieces) {
      if (seq.ids.size() - 1 >= budget) break;
      seq.ids.push_back(id);
    }
    span.end = seq.ids.size();
    seq.words.push_back(std::move(span));
  }
  seq.sep_position = seq.ids.size();
  seq.ids.push_back(WordPieceVocab::kSep);
  seq.pad_mask.assign(seq.ids.size(), false);
  while (seq.ids.size() < max_text_len) {
    seq.ids.push_back(WordPieceVocab::kPad);
    seq.pad_mask.push_back(true);
  }
  return seq;
}

}  // namespace memescope
