#pragma once

// Inverse word frequency, inverse sentence frequency and normalized sentence
// weights over a corpus' statistics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "genki/corpus.hpp"
#include "genki/error.hpp"
#include "genki/tokenize.hpp"

namespace genki {

/// Counts lookups of words missing from the corpus statistics. Such words
/// are treated as occurring once.
struct OovCounter {
  std::atomic<std::uint64_t> hits{0};
};

/// log(1 + Count) / f_w. Unknown words use f_w = 1.
inline double iwf(const std::string& word, const CorpusStats& stats, OovCounter* oov = nullptr) {
  std::uint64_t f = stats.freq(word);
  if (f == 0) {
    if (oov) oov->hits.fetch_add(1, std::memory_order_relaxed);
    f = 1;
  }
  return std::log1p(static_cast<double>(stats.sentence_count)) / static_cast<double>(f);
}

/// Maximum iwf over the sentence's words.
inline double isf(std::string_view sentence, const CorpusStats& stats, OovCounter* oov = nullptr) {
  const auto words = word_tokens(sentence);
  if (words.empty()) throw InvalidArgument("isf: sentence has no word tokens");
  double best = 0;
  for (const auto& w : words) best = std::max(best, iwf(w, stats, oov));
  return best;
}

struct SentenceWeight {
  std::string sentence;
  double isf = 0;
  double nisf = 0;
};

/// ISF of each sentence normalized to sum to one.
inline std::vector<SentenceWeight> nisf(const std::vector<std::string>& sentences,
                                        const CorpusStats& stats, OovCounter* oov = nullptr) {
  if (sentences.empty()) throw InvalidArgument("nisf: no sentences");
  if (stats.sentence_count == 0) throw InvalidArgument("nisf: statistics hold no sentences");
  std::vector<SentenceWeight> out;
  out.reserve(sentences.size());
  double total = 0;
  for (const auto& s : sentences) {
    out.push_back({s, isf(s, stats, oov), 0.0});
    total += out.back().isf;
  }
  for (auto& w : out) w.nisf = w.isf / total;
  return out;
}

}  // namespace genki
