#pragma once

// Question/answer consistency: NISF-weighted log-probabilities of the answer
// given the question plus the question given the answer.

#include <string>
#include <vector>

#include "genki/corpus.hpp"
#include "genki/lm.hpp"
#include "genki/textstats.hpp"
#include "genki/tokenize.hpp"

namespace genki {

struct ConsistencyScore {
  double value = 0;
  double forward_term = 0;   // answer given question
  double backward_term = 0;  // question given answer
};

namespace detail {

inline std::vector<std::string> scored_sentences(std::string_view text) {
  auto sentences = split_sentences(text);
  std::erase_if(sentences, [](const std::string& s) { return word_tokens(s).empty(); });
  return sentences;
}

// sum_j NISF(target_j) * log Prob(target_j | context)
inline double weighted_term(std::string_view context, std::string_view target,
                            const LmScorer& scorer, const CorpusStats& stats,
                            const Vocabulary& vocab, OovCounter* oov) {
  const auto sentences = scored_sentences(target);
  if (sentences.empty()) throw InvalidArgument("consistency: text has no word tokens");
  const auto ctx = vocab.encode(context);
  double term = 0;
  for (const auto& w : nisf(sentences, stats, oov))
    term += w.nisf * masked_cond_logprob(scorer, ctx, vocab.encode(w.sentence));
  return term;
}

}  // namespace detail

/// Sentence weights are normalized separately within the answer and within
/// the question, both against the knowledge-base statistics.
inline ConsistencyScore consistency(std::string_view question, std::string_view answer,
                                    const LmScorer& scorer, const CorpusStats& stats,
                                    const Vocabulary& vocab, OovCounter* oov = nullptr) {
  if (detail::blank(question) || detail::blank(answer))
    throw InvalidArgument("consistency: question and answer must be non-empty");
  ConsistencyScore s;
  s.forward_term = detail::weighted_term(question, answer, scorer, stats, vocab, oov);
  s.backward_term = detail::weighted_term(answer, question, scorer, stats, vocab, oov);
  s.value = s.forward_term + s.backward_term;
  return s;
}

}  // namespace genki
