#pragma once

// Selection between the full-knowledge and retrieved-knowledge answers: the
// judgment score routes either to the reward model or to an external judge.

#include <cmath>
#include <optional>
#include <set>
#include <string>

#include "genki/consistency.hpp"
#include "genki/corpus.hpp"
#include "genki/error.hpp"
#include "genki/lm.hpp"
#include "genki/reward.hpp"
#include "json.hpp"

namespace genki {

enum class Provenance { FullKnowledge, RetrievedKnowledge };

inline std::string to_string(Provenance p) {
  return p == Provenance::FullKnowledge ? "full_knowledge" : "retrieved_knowledge";
}

struct AnswerCandidate {
  std::string text;
  Provenance provenance = Provenance::FullKnowledge;
  bool postprocessed = false;

  bool operator==(const AnswerCandidate&) const = default;
};

enum class Route { RewardPick, ExternalPick };

inline std::string to_string(Route r) { return r == Route::RewardPick ? "reward" : "external"; }

/// How the mean reward in the judgment score's denominator was adjusted.
enum class RewardGuard { None, ZeroMean, NegativeMean };

inline std::string to_string(RewardGuard g) {
  switch (g) {
    case RewardGuard::None: return "none";
    case RewardGuard::ZeroMean: return "zero_mean";
    case RewardGuard::NegativeMean: return "negative_mean";
  }
  return "none";
}

inline constexpr double kZeroRewardEpsilon = 1e-9;

struct JudgmentScore {
  double value = 0;
  RewardGuard guard = RewardGuard::None;
};

/// exp(|cs1 - cs2|) - |rm1 - rm2| / (mean(rm) * mean(len)). A zero mean
/// reward is replaced by 1e-9 and a negative one by its magnitude.
inline JudgmentScore judgment_score_detailed(double cs1, double cs2, double rm1, double rm2,
                                             std::size_t len1, std::size_t len2) {
  if (len1 < 1 || len2 < 1) throw InvalidArgument("judgment_score: answer lengths must be >= 1");
  JudgmentScore out;
  double mean_rm = 0.5 * (rm1 + rm2);
  if (mean_rm == 0) {
    mean_rm = kZeroRewardEpsilon;
    out.guard = RewardGuard::ZeroMean;
  } else if (mean_rm < 0) {
    mean_rm = -mean_rm;
    out.guard = RewardGuard::NegativeMean;
  }
  const double mean_len = 0.5 * static_cast<double>(len1 + len2);
  out.value = std::exp(std::abs(cs1 - cs2)) - std::abs(rm1 - rm2) / (mean_rm * mean_len);
  return out;
}

inline double judgment_score(double cs1, double cs2, double rm1, double rm2, std::size_t len1,
                             std::size_t len2) {
  return judgment_score_detailed(cs1, cs2, rm1, rm2, len1, len2).value;
}

/// Reward route iff the score is strictly negative.
inline Route route_for(double s_c) { return s_c < 0 ? Route::RewardPick : Route::ExternalPick; }

enum class Choice { First, Second };

class ExternalJudge {
 public:
  virtual ~ExternalJudge() = default;
  virtual Choice choose(std::string_view question, std::string_view answer_1,
                        std::string_view answer_2, const FormatSpec& format) const = 0;
};

/// Offline judge: prefers the answer sharing more distinct words with the
/// question; ties go to the first answer.
class StubJudge final : public ExternalJudge {
 public:
  static std::size_t overlap(std::string_view question, std::string_view answer) {
    const auto q = word_tokens(question);
    const auto a = word_tokens(answer);
    const std::set<std::string> qs(q.begin(), q.end());
    const std::set<std::string> as(a.begin(), a.end());
    std::size_t n = 0;
    for (const auto& w : as) n += qs.contains(w);
    return n;
  }

  Choice choose(std::string_view question, std::string_view answer_1, std::string_view answer_2,
                const FormatSpec&) const override {
    return overlap(question, answer_2) > overlap(question, answer_1) ? Choice::Second
                                                                    : Choice::First;
  }
};

inline StubJudge stub_judge() { return {}; }

/// Reward route: the higher reward wins, a tie goes to the first candidate.
inline Choice reward_pick(double rm1, double rm2) { return rm2 > rm1 ? Choice::Second : Choice::First; }

struct ScoreBundle {
  std::string qid;
  double cs1 = 0, cs2 = 0;
  double rm1 = 0, rm2 = 0;
  std::size_t len1 = 1, len2 = 1;
  double s_c = 0;
  Route route = Route::ExternalPick;
  RewardGuard guard = RewardGuard::None;
  std::optional<Provenance> winner;
};

inline nlohmann::json to_json(const ScoreBundle& b) {
  return {{"qid", b.qid},
          {"cs1", b.cs1},
          {"cs2", b.cs2},
          {"rm1", b.rm1},
          {"rm2", b.rm2},
          {"len1", b.len1},
          {"len2", b.len2},
          {"s_c", b.s_c},
          {"route", to_string(b.route)},
          {"guard", to_string(b.guard)},
          {"winner_provenance", b.winner ? nlohmann::json(to_string(*b.winner)) : nlohmann::json()}};
}

/// Raised when the external judge fails; carries the bundle computed so far.
class SelectionError : public ModelError {
 public:
  SelectionError(const std::string& what, ScoreBundle partial)
      : ModelError(what), partial_(std::move(partial)) {}
  const ScoreBundle& partial() const { return partial_; }

 private:
  ScoreBundle partial_;
};

struct Selection {
  AnswerCandidate winner;
  ScoreBundle bundle;
};

/// Lengths are counted in tokenizer tokens.
inline std::size_t answer_length(std::string_view text) {
  return std::max<std::size_t>(1, lm_tokens(text).size());
}

/// Applies the routing rule with already computed scores.
inline Selection decide(const AnswerCandidate& cand1, const AnswerCandidate& cand2,
                        ScoreBundle bundle, std::string_view question, const ExternalJudge& judge,
                        const FormatSpec& format) {
  const auto js = judgment_score_detailed(bundle.cs1, bundle.cs2, bundle.rm1, bundle.rm2,
                                          bundle.len1, bundle.len2);
  bundle.s_c = js.value;
  bundle.guard = js.guard;
  bundle.route = route_for(js.value);
  const AnswerCandidate* winner = nullptr;
  if (bundle.route == Route::RewardPick) {
    winner = reward_pick(bundle.rm1, bundle.rm2) == Choice::Second ? &cand2 : &cand1;
  } else {
    Choice c;
    try {
      c = judge.choose(question, cand1.text, cand2.text, format);
    } catch (const std::exception& e) {
      throw SelectionError(std::string("external judge failed: ") + e.what(), bundle);
    }
    winner = c == Choice::Second ? &cand2 : &cand1;
  }
  bundle.winner = winner->provenance;
  return {*winner, std::move(bundle)};
}

/// Scores both postprocessed candidates and picks one.
inline Selection select(std::string_view question, const AnswerCandidate& cand1,
                        const AnswerCandidate& cand2, const LmScorer& scorer,
                        const CorpusStats& stats, const Vocabulary& vocab, const RewardModel& rm,
                        const ExternalJudge& judge, const FormatSpec& format,
                        std::string qid = {}) {
  if (!cand1.postprocessed || !cand2.postprocessed)
    throw InvalidArgument("select: both candidates must be postprocessed");
  if (cand1.text.empty() || cand2.text.empty()) throw InvalidArgument("select: empty candidate");
  ScoreBundle b;
  b.qid = std::move(qid);
  b.cs1 = consistency(question, cand1.text, scorer, stats, vocab).value;
  b.cs2 = consistency(question, cand2.text, scorer, stats, vocab).value;
  b.rm1 = rm.score(cand1.text, format, question);
  b.rm2 = rm.score(cand2.text, format, question);
  b.len1 = answer_length(cand1.text);
  b.len2 = answer_length(cand2.text);
  return decide(cand1, cand2, std::move(b), question, judge, format);
}

}  // namespace genki
