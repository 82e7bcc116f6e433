#pragma once

// Word tokenizer, sentence splitter and the token-id vocabulary shared by the
// language-model backends.
//
// Normalization: ASCII letters are lowercased, whitespace runs collapse, each
// punctuation mark becomes its own token and each CJK ideograph is one token.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "genki/error.hpp"

namespace genki {

namespace utf8 {

struct CodePoint {
  char32_t value;
  std::size_t length;
};

/// Decodes the code point starting at `pos`. Malformed bytes decode as
/// U+FFFD with length 1 so that scanning always makes progress.
inline CodePoint decode(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t i) -> int {
    if (pos + i >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + i]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0)
      return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0)
      return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
  }
  return {0xFFFD, 1};
}

}  // namespace utf8

namespace detail {

inline bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' ||
         c == 0x3000 || c == 0xA0;
}

inline bool is_cjk_punct(char32_t c) {
  switch (c) {
    case 0x3002: case 0xFF01: case 0xFF1F: case 0xFF0C: case 0x3001: case 0xFF1B:
    case 0xFF1A: case 0x201C: case 0x201D: case 0x2018: case 0x2019: case 0x300A:
    case 0x300B: case 0xFF08: case 0xFF09: case 0x300C: case 0x300D:
      return true;
    default:
      return false;
  }
}

inline bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  return is_cjk_punct(c);
}

inline bool is_ideograph(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0xF900 && c <= 0xFAFF);
}

// Punctuation glued to the preceding token when detokenizing.
inline bool attaches_left(std::string_view tok) {
  static constexpr std::string_view kClosing[] = {".", ",", "!", "?", ";", ":", ")", "]",
                                                  "}", "%", "。", "！", "？", "，", "、", "；",
                                                  "：", "”", "’", "》", "）", "」"};
  for (auto c : kClosing)
    if (tok == c) return true;
  return false;
}

// Punctuation glued to the following token.
inline bool attaches_right(std::string_view tok) {
  static constexpr std::string_view kOpening[] = {"(", "[", "{", "“", "‘", "《", "（", "「"};
  for (auto c : kOpening)
    if (tok == c) return true;
  return false;
}

inline bool starts_with_ideograph(std::string_view tok) {
  return !tok.empty() && is_ideograph(utf8::decode(tok, 0).value);
}

inline void lower_ascii(std::string& s) {
  for (auto& ch : s)
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
}

}  // namespace detail

/// Tokens as seen by the language models: lowercased words, punctuation marks
/// and CJK ideographs, in order.
inline std::vector<std::string> lm_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      detail::lower_ascii(word);
      out.push_back(std::move(word));
      word.clear();
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto cp = utf8::decode(text, i);
    const auto raw = text.substr(i, cp.length);
    if (detail::is_space(cp.value)) {
      flush();
    } else if (detail::is_punct(cp.value) || detail::is_ideograph(cp.value)) {
      flush();
      out.emplace_back(raw);
    } else {
      word.append(raw);
    }
    i += cp.length;
  }
  flush();
  return out;
}

inline bool is_punct_token(std::string_view tok) {
  if (tok.empty()) return false;
  const auto cp = utf8::decode(tok, 0);
  return cp.length == tok.size() && detail::is_punct(cp.value);
}

/// Lowercased word tokens with punctuation removed; the unit counted by
/// corpus statistics and by the evaluation metrics.
inline std::vector<std::string> word_tokens(std::string_view text) {
  auto toks = lm_tokens(text);
  std::erase_if(toks, [](const std::string& t) { return is_punct_token(t); });
  return toks;
}

/// Inverse of lm_tokens up to normalization.
inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  bool glue_next = true;
  std::string_view prev;
  for (const auto& tok : tokens) {
    const bool glue = glue_next || detail::attaches_left(tok) ||
                      (detail::starts_with_ideograph(tok) && detail::starts_with_ideograph(prev));
    if (!glue) out.push_back(' ');
    out += tok;
    glue_next = detail::attaches_right(tok);
    prev = tok;
  }
  return out;
}

/// Canonical form of `text` under the tokenizer's normalization.
inline std::string normalize_text(std::string_view text) { return detokenize(lm_tokens(text)); }

/// Splits on `.`, `!`, `?` followed by whitespace or end of text, and on the
/// full-width terminators `。！？` unconditionally. Runs of terminators stay
/// with their sentence. Returned sentences are trimmed and never empty.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto piece = text.substr(start, end - start);
    std::size_t b = 0, e = piece.size();
    while (b < e && detail::is_space(utf8::decode(piece, b).value)) b += utf8::decode(piece, b).length;
    while (e > b) {
      // whitespace handled here is ASCII or U+3000 (3 bytes) / U+00A0 (2 bytes)
      std::size_t back = e - 1;
      while (back > b && (static_cast<unsigned char>(piece[back]) & 0xC0) == 0x80) --back;
      if (!detail::is_space(utf8::decode(piece, back).value)) break;
      e = back;
    }
    if (e > b) out.emplace_back(piece.substr(b, e - b));
    start = end;
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto cp = utf8::decode(text, i);
    const bool ascii_term = cp.value == '.' || cp.value == '!' || cp.value == '?';
    const bool wide_term = cp.value == 0x3002 || cp.value == 0xFF01 || cp.value == 0xFF1F;
    if (!ascii_term && !wide_term) {
      i += cp.length;
      continue;
    }
    // absorb the whole run of terminators
    std::size_t j = i + cp.length;
    bool any_wide = wide_term;
    while (j < text.size()) {
      const auto nx = utf8::decode(text, j);
      const bool t = nx.value == '.' || nx.value == '!' || nx.value == '?' || nx.value == 0x3002 ||
                     nx.value == 0xFF01 || nx.value == 0xFF1F;
      if (!t) break;
      any_wide = any_wide || nx.value > 0x7F;
      j += nx.length;
    }
    if (any_wide || j == text.size() || detail::is_space(utf8::decode(text, j).value)) emit(j);
    i = j;
  }
  if (start < text.size()) emit(text.size());
  return out;
}

using TokenId = std::uint32_t;

/// Token ids plus the text they were produced from.
struct TokenSeq {
  std::vector<TokenId> tokens;
  std::string text;

  bool operator==(const TokenSeq&) const = default;
};

/// Bidirectional token/id map. Ids 0..2 are reserved for the specials.
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;

  Vocabulary() : words_{"<s>", "</s>", "<unk>"} {
    for (TokenId i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  explicit Vocabulary(const std::vector<std::string>& words) {
    for (const auto& w : words) {
      if (index_.contains(w)) throw DataError("duplicate vocabulary entry '" + w + "'");
      index_.emplace(w, static_cast<TokenId>(words_.size()));
      words_.push_back(w);
    }
    if (words_.size() < 3 || words_[kBos] != "<s>" || words_[kEos] != "</s>" ||
        words_[kUnk] != "<unk>")
      throw DataError("vocabulary must start with <s>, </s>, <unk>");
  }

  /// Vocabulary over every lm token of `texts`, ids assigned in sorted token
  /// order so the result does not depend on the order of the inputs.
  static Vocabulary from_texts(const std::vector<std::string>& texts) {
    std::map<std::string, int> seen;
    for (const auto& t : texts)
      for (auto& tok : lm_tokens(t)) seen.emplace(std::move(tok), 0);
    Vocabulary v;
    for (const auto& [tok, _] : seen) v.add(tok);
    return v;
  }

  TokenId add(const std::string& word) {
    auto [it, inserted] = index_.emplace(word, static_cast<TokenId>(words_.size()));
    if (inserted) words_.push_back(word);
    return it->second;
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(TokenId id) const { return words_.at(id); }

  TokenId id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }

  TokenSeq encode(std::string_view text, bool append_eos = false) const {
    TokenSeq seq;
    seq.text = std::string(text);
    for (const auto& tok : lm_tokens(text)) seq.tokens.push_back(id(tok));
    if (append_eos) seq.tokens.push_back(kEos);
    return seq;
  }

  /// Drops specials and detokenizes the rest.
  std::string decode(const std::vector<TokenId>& ids) const {
    std::vector<std::string> toks;
    for (auto i : ids)
      if (i > kUnk && i < words_.size()) toks.push_back(words_[i]);
    return detokenize(toks);
  }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, TokenId, std::less<>> index_;
};

}  // namespace genki
