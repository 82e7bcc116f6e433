#pragma once

// Knowledge-base passages, QA pairs and corpus-level word statistics.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "genki/error.hpp"
#include "genki/tokenize.hpp"
#include "json.hpp"

namespace genki {

struct Passage {
  std::string id;
  std::string text;
  std::optional<std::string> source;

  bool operator==(const Passage&) const = default;
};

enum class AnswerFormat { Entity, Sentence, Span };

inline std::string to_string(AnswerFormat f) {
  switch (f) {
    case AnswerFormat::Entity: return "entity";
    case AnswerFormat::Sentence: return "sentence";
    case AnswerFormat::Span: return "span";
  }
  return "entity";
}

inline AnswerFormat parse_answer_format(std::string_view s) {
  if (s == "entity") return AnswerFormat::Entity;
  if (s == "sentence") return AnswerFormat::Sentence;
  if (s == "span") return AnswerFormat::Span;
  throw DataError("unknown answer format '" + std::string(s) + "'");
}

struct QaPair {
  std::string id;
  std::string question;
  std::vector<std::string> answers;  // any one counts as correct
  AnswerFormat format = AnswerFormat::Entity;

  bool operator==(const QaPair&) const = default;
};

namespace detail {

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}

inline std::string required_string(const nlohmann::json& obj, const char* key,
                                   const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw FormatError(where + ": missing or non-string field '" + key + "'");
  return it->get<std::string>();
}

// Calls `fn(json, line_no)` for every non-blank line of a JSONL file.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object())
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected a JSON object");
    fn(obj, line_no);
  }
}

}  // namespace detail

/// Reads a passage JSONL file. Rejects malformed lines (reporting the line
/// number), blank texts and duplicate ids.
inline std::vector<Passage> ingest_passages(const std::string& path) {
  std::vector<Passage> out;
  std::set<std::string> ids;
  detail::for_each_jsonl(path, [&](const nlohmann::json& obj, std::size_t line_no) {
    const std::string where = path + ":" + std::to_string(line_no);
    Passage p;
    p.id = detail::required_string(obj, "id", where);
    p.text = detail::required_string(obj, "text", where);
    if (auto it = obj.find("source"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw FormatError(where + ": field 'source' must be a string");
      p.source = it->get<std::string>();
    }
    if (detail::blank(p.text)) throw DataError(where + ": passage '" + p.id + "' has empty text");
    if (!ids.insert(p.id).second) throw DataError(where + ": duplicate passage id '" + p.id + "'");
    out.push_back(std::move(p));
  });
  return out;
}

inline std::vector<QaPair> ingest_qa(const std::string& path) {
  std::vector<QaPair> out;
  std::set<std::string> ids;
  detail::for_each_jsonl(path, [&](const nlohmann::json& obj, std::size_t line_no) {
    const std::string where = path + ":" + std::to_string(line_no);
    QaPair q;
    q.id = detail::required_string(obj, "id", where);
    q.question = detail::required_string(obj, "question", where);
    auto ans = obj.find("answers");
    if (ans == obj.end() || !ans->is_array() || ans->empty())
      throw FormatError(where + ": 'answers' must be a non-empty array");
    for (const auto& a : *ans) {
      if (!a.is_string()) throw FormatError(where + ": answers must be strings");
      q.answers.push_back(a.get<std::string>());
    }
    try {
      q.format = parse_answer_format(obj.value("format", std::string("entity")));
    } catch (const DataError& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (detail::blank(q.question)) throw DataError(where + ": empty question in '" + q.id + "'");
    if (!ids.insert(q.id).second) throw DataError(where + ": duplicate qa id '" + q.id + "'");
    out.push_back(std::move(q));
  });
  return out;
}

inline nlohmann::json to_json(const Passage& p) {
  nlohmann::json j{{"id", p.id}, {"text", p.text}};
  if (p.source) j["source"] = *p.source;
  return j;
}

inline nlohmann::json to_json(const QaPair& q) {
  return {{"id", q.id}, {"question", q.question}, {"answers", q.answers},
          {"format", to_string(q.format)}};
}

template <typename Record>
void write_jsonl(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

/// Sentence count and per-word occurrence counts of a corpus.
struct CorpusStats {
  std::uint64_t sentence_count = 0;
  std::map<std::string, std::uint64_t> word_freq;

  std::size_t vocab_size() const { return word_freq.size(); }

  /// Frequency of `word`, 0 when absent.
  std::uint64_t freq(const std::string& word) const {
    auto it = word_freq.find(word);
    return it == word_freq.end() ? 0 : it->second;
  }

  /// Sum of two disjoint corpora's statistics.
  CorpusStats& operator+=(const CorpusStats& other) {
    sentence_count += other.sentence_count;
    for (const auto& [w, f] : other.word_freq) word_freq[w] += f;
    return *this;
  }

  bool operator==(const CorpusStats&) const = default;
};

/// Segments every passage into sentences and counts word occurrences.
/// A corpus without passages or without any word token is rejected.
inline CorpusStats build_stats(const std::vector<Passage>& passages) {
  if (passages.empty()) throw DataError("cannot build statistics over an empty corpus");
  CorpusStats stats;
  for (const auto& p : passages) {
    for (const auto& sentence : split_sentences(p.text)) {
      ++stats.sentence_count;
      for (auto& w : word_tokens(sentence)) ++stats.word_freq[std::move(w)];
    }
  }
  if (stats.word_freq.empty()) throw DataError("corpus has no word tokens");
  return stats;
}

inline nlohmann::json to_json(const CorpusStats& s) {
  return {{"sentence_count", s.sentence_count}, {"vocab_size", s.vocab_size()},
          {"word_freq", s.word_freq}};
}

inline CorpusStats stats_from_json(const nlohmann::json& j) {
  try {
    CorpusStats s;
    s.sentence_count = j.at("sentence_count").get<std::uint64_t>();
    s.word_freq = j.at("word_freq").get<std::map<std::string, std::uint64_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad corpus statistics: ") + e.what());
  }
}

}  // namespace genki
