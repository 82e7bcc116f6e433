#pragma once

// Seeded synthetic knowledge base: every fact passage states a subject and
// its paired entity verbatim, questions ask for the entity paired with a
// subject. Distractor passages share no words with the questions.

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "genki/corpus.hpp"
#include "genki/regime_fit.hpp"

namespace genki {

struct SyntheticSpec {
  std::size_t facts = 100;
  std::size_t distractors = 100;
  std::size_t answer_pool = 20;  // distinct answer entities, reused across facts
  double train_fraction = 0.5;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<Passage> passages;
  std::vector<QaPair> train_qa;
  std::vector<QaPair> test_qa;
};

namespace detail {

class NameMaker {
 public:
  explicit NameMaker(std::uint64_t seed) : rng_(seed) {}

  std::string fresh() {
    static constexpr const char* kSyl[] = {"ka", "vo", "tel", "mun", "zi", "ra", "los", "pe",
                                           "dun", "qui", "bar", "nex", "so", "li", "tor", "fen",
                                           "gal", "ri", "mo", "sha", "ul", "dre", "vik", "ostr"};
    constexpr std::size_t n = std::size(kSyl);
    while (true) {
      std::string name;
      const std::size_t parts = 2 + rng_() % 2;
      for (std::size_t i = 0; i < parts; ++i) name += kSyl[rng_() % n];
      if (used_.insert(name).second) return name;
    }
  }

  std::uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

}  // namespace detail

inline SyntheticCorpus make_synthetic(const SyntheticSpec& spec = {}) {
  if (spec.facts == 0 || spec.answer_pool == 0)
    throw InvalidArgument("synthetic corpus needs facts and answers");
  static constexpr const char* kLead[] = {"records list", "old ledgers name", "chronicles link"};
  static constexpr const char* kTail[] = {"as partners since first census .",
                                          "in northern archive .", "among founding families ."};
  static constexpr const char* kRegion[] = {"green", "stone", "silver", "amber", "misty", "quiet"};
  static constexpr const char* kNoun[] = {"rivers", "orchards", "bridges", "towers",
                                          "meadows", "harbors", "lanterns", "gardens"};

  detail::NameMaker names(spec.seed);
  std::vector<std::string> answers;
  for (std::size_t i = 0; i < spec.answer_pool; ++i) answers.push_back(names.fresh());

  SyntheticCorpus out;
  const auto n_train = static_cast<std::size_t>(static_cast<double>(spec.facts) * spec.train_fraction);
  for (std::size_t i = 0; i < spec.facts; ++i) {
    // two-word subject so question and fact share more than one token
    const std::string subject = names.fresh() + " " + names.fresh();
    const std::string& answer = answers[i % answers.size()];
    Passage p;
    p.id = "f" + std::to_string(i);
    p.text = std::string(kLead[names.next() % 3]) + " " + subject + " " + answer + " " +
             kTail[names.next() % 3];
    p.source = "synthetic";
    out.passages.push_back(std::move(p));
    QaPair q{"q" + std::to_string(i), "who is paired with " + subject, {answer},
             AnswerFormat::Entity};
    (i < n_train ? out.train_qa : out.test_qa).push_back(std::move(q));
  }
  for (std::size_t i = 0; i < spec.distractors; ++i) {
    Passage p;
    p.id = "d" + std::to_string(i);
    const std::size_t a = names.next() % 8, b = (a + 1 + names.next() % 7) % 8;
    p.text = std::string(kRegion[names.next() % 6]) + " hills hold " + kNoun[a] + " and " +
             kNoun[b] + " near " + names.fresh() + " .";
    p.source = "synthetic";
    out.passages.push_back(std::move(p));
  }
  return out;
}

/// Points on y = x for x < knee and a flatter line with slope `slope2`
/// after it, plus Gaussian noise (Box-Muller over mt19937_64 bits).
inline std::vector<Point> two_regime_points(std::size_t n, double knee, double slope2,
                                            double noise, std::uint64_t seed, double x_max = 1.0) {
  std::mt19937_64 rng(seed);
  auto unit = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = x_max * static_cast<double>(i) / static_cast<double>(n - 1);
    const double clean = x < knee ? x : knee + slope2 * (x - knee);
    const double g = std::sqrt(-2.0 * std::log(unit())) * std::cos(2.0 * 3.141592653589793 * unit());
    pts.push_back({x, clean + noise * g});
  }
  return pts;
}

}  // namespace genki
