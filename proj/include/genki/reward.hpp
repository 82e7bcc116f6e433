#pragma once

// Reward models scoring an answer against a requested format, and the
// pairwise logistic loss used to train them.

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "genki/corpus.hpp"
#include "genki/error.hpp"
#include "genki/tokenize.hpp"
#include "json.hpp"

namespace genki {

struct FormatSpec {
  AnswerFormat kind = AnswerFormat::Entity;
  std::size_t max_tokens = 8;
  std::string description;  // format request text fed to the prompts

  void validate() const {
    if (max_tokens < 1) throw InvalidArgument("format max_tokens must be >= 1");
  }
};

class RewardModel {
 public:
  virtual ~RewardModel() = default;
  /// `question` is optional context; models may ignore it.
  virtual double score(std::string_view answer, const FormatSpec& format,
                       std::string_view question = {}) const = 0;
};

struct PreferencePair {
  std::string positive;
  std::string negative;
  FormatSpec format;
  std::string question;

  void validate() const {
    if (positive == negative) throw InvalidArgument("preference pair has identical answers");
  }
};

/// -log sigmoid(margin), evaluated without overflow.
inline double neg_log_sigmoid(double margin) {
  return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double pairwise_loss(const RewardModel& model, const PreferencePair& pair) {
  pair.validate();
  const double margin = model.score(pair.positive, pair.format, pair.question) -
                        model.score(pair.negative, pair.format, pair.question);
  return neg_log_sigmoid(margin);
}

inline constexpr int kRewardFeatureSchema = 1;
inline constexpr std::size_t kRewardFeatures = 4;
using RewardFeatures = std::array<double, kRewardFeatures>;

/// [bias, answer length in words, fraction of answer words that are format
/// keywords, fraction of answer words found in the question].
inline RewardFeatures reward_features(std::string_view answer, const FormatSpec& format,
                                      std::string_view question) {
  const auto words = word_tokens(answer);
  const auto kw = word_tokens(format.description);
  const auto qw = word_tokens(question);
  const std::set<std::string> keywords(kw.begin(), kw.end());
  const std::set<std::string> qwords(qw.begin(), qw.end());
  double in_kw = 0, in_q = 0;
  for (const auto& w : words) {
    in_kw += keywords.contains(w);
    in_q += qwords.contains(w);
  }
  const double n = static_cast<double>(words.size());
  return {1.0, n, n > 0 ? in_kw / n : 0.0, n > 0 ? in_q / n : 0.0};
}

/// Linear model over reward_features.
class LinearRewardModel final : public RewardModel {
 public:
  explicit LinearRewardModel(RewardFeatures weights = {}, std::uint64_t seed = 0)
      : weights_(weights), seed_(seed) {}

  double score(std::string_view answer, const FormatSpec& format,
               std::string_view question = {}) const override {
    const auto f = reward_features(answer, format, question);
    double s = 0;
    for (std::size_t i = 0; i < kRewardFeatures; ++i) s += weights_[i] * f[i];
    return s;
  }

  const RewardFeatures& weights() const { return weights_; }
  RewardFeatures& weights() { return weights_; }
  std::uint64_t seed() const { return seed_; }

  bool operator==(const LinearRewardModel& o) const {
    return weights_ == o.weights_ && seed_ == o.seed_;
  }

 private:
  RewardFeatures weights_{};
  std::uint64_t seed_ = 0;
};

inline LinearRewardModel toy_reward_model(RewardFeatures weights = {}) {
  return LinearRewardModel(weights);
}

/// d pairwise_loss / d weights = -(1 - sigmoid(margin)) (f+ - f-).
inline RewardFeatures pairwise_loss_grad(const LinearRewardModel& model,
                                         const PreferencePair& pair) {
  pair.validate();
  const auto fp = reward_features(pair.positive, pair.format, pair.question);
  const auto fn = reward_features(pair.negative, pair.format, pair.question);
  const double margin = model.score(pair.positive, pair.format, pair.question) -
                        model.score(pair.negative, pair.format, pair.question);
  const double coef = -(1.0 - sigmoid(margin));
  RewardFeatures g{};
  for (std::size_t i = 0; i < kRewardFeatures; ++i) g[i] = coef * (fp[i] - fn[i]);
  return g;
}

inline double mean_pairwise_loss(const RewardModel& model, const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw InvalidArgument("no preference pairs");
  double s = 0;
  for (const auto& p : pairs) s += pairwise_loss(model, p);
  return s / static_cast<double>(pairs.size());
}

/// Gradient descent on the mean pairwise loss. Zero steps returns the model
/// unchanged.
inline LinearRewardModel train_reward(LinearRewardModel model,
                                      const std::vector<PreferencePair>& pairs, std::size_t steps,
                                      double learning_rate = 0.05,
                                      std::vector<double>* loss_trace = nullptr) {
  if (pairs.empty()) throw InvalidArgument("train_reward: no preference pairs");
  for (const auto& p : pairs) p.validate();
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t s = 0; s < steps; ++s) {
    RewardFeatures grad{};
    double loss = 0;
    for (const auto& p : pairs) {
      const auto g = pairwise_loss_grad(model, p);
      for (std::size_t i = 0; i < kRewardFeatures; ++i) grad[i] += g[i] * inv_n;
      loss += pairwise_loss(model, p) * inv_n;
    }
    if (!std::isfinite(loss)) throw ModelError("reward training diverged at step " + std::to_string(s));
    if (loss_trace) loss_trace->push_back(loss);
    for (std::size_t i = 0; i < kRewardFeatures; ++i) model.weights()[i] -= learning_rate * grad[i];
  }
  for (double w : model.weights())
    if (!std::isfinite(w)) throw ModelError("reward training diverged");
  return model;
}

inline nlohmann::json to_json(const LinearRewardModel& m) {
  return {{"schema_version", kRewardFeatureSchema},
          {"features", {"bias", "length", "format_keyword_overlap", "question_overlap"}},
          {"weights", m.weights()},
          {"seed", m.seed()}};
}

inline LinearRewardModel reward_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kRewardFeatureSchema)
      throw FormatError("unsupported reward feature schema");
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != kRewardFeatures) throw FormatError("reward checkpoint has wrong weight count");
    RewardFeatures arr{};
    std::copy(w.begin(), w.end(), arr.begin());
    return LinearRewardModel(arr, j.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad reward checkpoint: ") + e.what());
  }
}

inline void save_reward(const LinearRewardModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << to_json(m).dump() << '\n';
}

inline LinearRewardModel load_reward(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed reward checkpoint: " + e.what());
  }
  return reward_from_json(j);
}

}  // namespace genki
