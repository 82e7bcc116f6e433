#pragma once

// Language-model scoring interface, a trainable bigram model and the
// knowledge-integration objectives: instruction loss over (input, answer)
// examples, domain loss over passages and their weighted combination.
//
// All losses are negative log-likelihoods (natural log) to be minimized.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "genki/error.hpp"
#include "genki/tokenize.hpp"
#include "json.hpp"

namespace genki {

class LmScorer {
 public:
  virtual ~LmScorer() = default;

  /// Total log-probability of `target` continuing `context`; always <= 0.
  virtual double logprob_cond(const TokenSeq& context, const TokenSeq& target) const = 0;

  /// Continuation of `prompt`, at most `max_tokens` tokens, without the
  /// end-of-sequence marker.
  virtual TokenSeq generate(const TokenSeq& prompt, std::size_t max_tokens) const = 0;
};

/// log Prob(target | context) where the masked slot sits after the context.
inline double masked_cond_logprob(const LmScorer& scorer, const TokenSeq& context,
                                  const TokenSeq& target) {
  if (target.tokens.empty() && target.text.empty())
    throw InvalidArgument("masked_cond_logprob: empty target");
  return scorer.logprob_cond(context, target);
}

struct LossWeights {
  double lambda1 = 1.0;  // domain passages
  double lambda2 = 0.5;  // instruction examples

  void validate() const {
    if (!(std::isfinite(lambda1) && std::isfinite(lambda2) && lambda1 > lambda2 && lambda2 > 0))
      throw InvalidArgument("loss weights must satisfy lambda1 > lambda2 > 0 (got " +
                            std::to_string(lambda1) + ", " + std::to_string(lambda2) + ")");
  }
};

struct TrainExample {
  TokenSeq input;   // instruction + question
  TokenSeq answer;  // non-empty
};

/// Bigram model: logits(next | prev) is row `prev` of a V x V table. The
/// first target token of a sequence conditions on the last context token, or
/// on <s> when the context is empty.
class ToyLm final : public LmScorer {
 public:
  ToyLm(Vocabulary vocab, std::uint64_t seed, double learning_rate = 0.05,
        double init_scale = 0.01)
      : vocab_(std::move(vocab)), seed_(seed), learning_rate_(learning_rate) {
    const std::size_t v = vocab_.size();
    logits_.assign(v * v, 0.0);
    if (init_scale != 0.0) {
      std::mt19937_64 rng(seed);
      for (auto& x : logits_) {
        // top 53 bits -> [0, 1); std distributions are not portable
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        x = init_scale * (2.0 * u - 1.0);
      }
    }
  }

  ToyLm(Vocabulary vocab, std::vector<double> logits, std::uint64_t seed, std::uint64_t step,
        double learning_rate)
      : vocab_(std::move(vocab)),
        logits_(std::move(logits)),
        seed_(seed),
        step_(step),
        learning_rate_(learning_rate) {
    if (logits_.size() != vocab_.size() * vocab_.size())
      throw InvalidArgument("logit table must be V x V");
    for (double x : logits_)
      if (!std::isfinite(x)) throw InvalidArgument("non-finite logit");
  }

  /// A model over `v` tokens (the three specials plus placeholder words).
  static ToyLm with_size(std::size_t v, std::uint64_t seed, double init_scale = 0.0) {
    if (v < 3) throw InvalidArgument("vocabulary must hold at least the 3 special tokens");
    Vocabulary vocab;
    for (std::size_t i = 3; i < v; ++i) vocab.add("w" + std::to_string(i));
    return ToyLm(std::move(vocab), seed, 0.05, init_scale);
  }

  std::size_t vocab_size() const { return vocab_.size(); }
  const Vocabulary& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }
  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr) { learning_rate_ = lr; }

  std::span<const double> logits() const { return logits_; }
  std::span<double> logits_mut() { return logits_; }
  std::span<const double> row(TokenId prev) const {
    return std::span<const double>(logits_).subspan(std::size_t{prev} * vocab_size(), vocab_size());
  }
  void set_logit(TokenId prev, TokenId next, double v) {
    logits_[std::size_t{prev} * vocab_size() + next] = v;
  }
  void advance_step() { ++step_; }

  double log_norm(TokenId prev) const {
    const auto r = row(prev);
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : r) mx = std::max(mx, x);
    double s = 0;
    for (double x : r) s += std::exp(x - mx);
    return mx + std::log(s);
  }

  double log_prob(TokenId prev, TokenId next) const {
    check(prev);
    check(next);
    return row(prev)[next] - log_norm(prev);
  }

  std::vector<double> probs(TokenId prev) const {
    check(prev);
    const double lz = log_norm(prev);
    std::vector<double> p;
    p.reserve(vocab_size());
    for (double x : row(prev)) p.push_back(std::exp(x - lz));
    return p;
  }

  static TokenId context_token(const std::vector<TokenId>& context) {
    return context.empty() ? Vocabulary::kBos : context.back();
  }

  double logprob_cond(const TokenSeq& context, const TokenSeq& target) const override {
    TokenId prev = context_token(context.tokens);
    check(prev);
    double total = 0;
    for (TokenId t : target.tokens) {
      total += log_prob(prev, t);
      prev = t;
    }
    return std::min(total, 0.0);
  }

  /// Greedy decoding; <s> and <unk> are never emitted, ties go to the lower id.
  TokenSeq generate(const TokenSeq& prompt, std::size_t max_tokens) const override {
    TokenSeq out;
    TokenId prev = context_token(prompt.tokens);
    check(prev);
    for (std::size_t n = 0; n < max_tokens; ++n) {
      const auto r = row(prev);
      TokenId best = Vocabulary::kEos;
      for (TokenId j = Vocabulary::kEos; j < r.size(); ++j) {
        if (j == Vocabulary::kUnk) continue;
        if (r[j] > r[best]) best = j;
      }
      if (best == Vocabulary::kEos) break;
      out.tokens.push_back(best);
      prev = best;
    }
    out.text = vocab_.decode(out.tokens);
    return out;
  }

  bool operator==(const ToyLm& o) const {
    return vocab_ == o.vocab_ && logits_ == o.logits_ && seed_ == o.seed_ && step_ == o.step_;
  }

 private:
  void check(TokenId id) const {
    if (id >= vocab_size())
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(vocab_size()));
  }

  Vocabulary vocab_;
  std::vector<double> logits_;
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;
  double learning_rate_ = 0.05;
};

/// -sum_i sum_t log Prob(a_i[t] | x_i, a_i[<t]).
inline double loss_f(const ToyLm& model, const std::vector<TrainExample>& batch) {
  if (batch.empty()) throw InvalidArgument("loss_f: empty batch");
  double nll = 0;
  for (const auto& ex : batch) {
    if (ex.answer.tokens.empty()) throw InvalidArgument("loss_f: empty answer");
    nll -= model.logprob_cond(ex.input, ex.answer);
  }
  return nll;
}

/// -sum_p sum_{t>=1} log Prob(p[t] | p[<t]); the first token is not predicted.
inline double loss_r(const ToyLm& model, const std::vector<TokenSeq>& passages) {
  double nll = 0;
  for (const auto& p : passages) {
    if (p.tokens.size() < 2) throw InvalidArgument("loss_r: passage needs at least 2 tokens");
    for (std::size_t t = 1; t < p.tokens.size(); ++t)
      nll -= model.log_prob(p.tokens[t - 1], p.tokens[t]);
  }
  return nll;
}

/// lambda1 * loss_r + lambda2 * loss_f. Either list may be empty (its term
/// is then zero) but not both.
inline double loss_combined(const ToyLm& model, const std::vector<TokenSeq>& passages,
                            const std::vector<TrainExample>& batch, const LossWeights& w) {
  w.validate();
  if (passages.empty() && batch.empty())
    throw InvalidArgument("loss_combined: no passages and no examples");
  const double lr = passages.empty() ? 0.0 : loss_r(model, passages);
  const double lf = batch.empty() ? 0.0 : loss_f(model, batch);
  return w.lambda1 * lr + w.lambda2 * lf;
}

struct LossAndGrad {
  double loss = 0;
  std::vector<double> grad;  // same layout as the logit table
};

namespace detail {

// Weighted transition counts (prev -> next) of both loss terms.
inline std::vector<double> transition_weights(const ToyLm& model,
                                              const std::vector<TokenSeq>& passages,
                                              const std::vector<TrainExample>& batch,
                                              const LossWeights& w) {
  const std::size_t v = model.vocab_size();
  std::vector<double> counts(v * v, 0.0);
  auto add = [&](TokenId prev, TokenId next, double weight) {
    if (prev >= v || next >= v) throw InvalidArgument("token id outside vocabulary");
    counts[std::size_t{prev} * v + next] += weight;
  };
  for (const auto& p : passages) {
    if (p.tokens.size() < 2) throw InvalidArgument("loss_r: passage needs at least 2 tokens");
    for (std::size_t t = 1; t < p.tokens.size(); ++t) add(p.tokens[t - 1], p.tokens[t], w.lambda1);
  }
  for (const auto& ex : batch) {
    if (ex.answer.tokens.empty()) throw InvalidArgument("loss_f: empty answer");
    TokenId prev = ToyLm::context_token(ex.input.tokens);
    for (TokenId t : ex.answer.tokens) {
      add(prev, t, w.lambda2);
      prev = t;
    }
  }
  return counts;
}

}  // namespace detail

/// Combined loss and its exact gradient with respect to every logit. For a
/// row with transition weights c_j the gradient is (sum_j c_j) softmax - c.
inline LossAndGrad loss_and_grad(const ToyLm& model, const std::vector<TokenSeq>& passages,
                                 const std::vector<TrainExample>& batch, const LossWeights& w) {
  w.validate();
  if (passages.empty() && batch.empty())
    throw InvalidArgument("loss_combined: no passages and no examples");
  const std::size_t v = model.vocab_size();
  const auto counts = detail::transition_weights(model, passages, batch, w);
  LossAndGrad out;
  out.grad.assign(v * v, 0.0);
  for (TokenId prev = 0; prev < v; ++prev) {
    const double* c = &counts[std::size_t{prev} * v];
    double total = 0;
    for (std::size_t j = 0; j < v; ++j) total += c[j];
    if (total == 0) continue;
    const double lz = model.log_norm(prev);
    const auto r = model.row(prev);
    double* g = &out.grad[std::size_t{prev} * v];
    for (std::size_t j = 0; j < v; ++j) {
      const double lp = r[j] - lz;
      g[j] = total * std::exp(lp) - c[j];
      if (c[j] != 0) out.loss -= c[j] * lp;
    }
  }
  return out;
}

/// Plain gradient descent on the combined loss at the model's learning rate.
/// `loss_trace`, when given, receives the loss before each step and the
/// final loss.
inline ToyLm train(ToyLm model, const std::vector<TokenSeq>& passages,
                   const std::vector<TrainExample>& batch, const LossWeights& w, std::size_t steps,
                   std::vector<double>* loss_trace = nullptr) {
  if (steps == 0) throw InvalidArgument("train: steps must be >= 1");
  const double lr = model.learning_rate();
  if (!(lr > 0) || !std::isfinite(lr)) throw InvalidArgument("train: learning rate must be > 0");
  for (std::size_t s = 0; s < steps; ++s) {
    const auto lg = loss_and_grad(model, passages, batch, w);
    if (!std::isfinite(lg.loss)) throw ModelError("training diverged at step " + std::to_string(s));
    if (loss_trace) loss_trace->push_back(lg.loss);
    auto params = model.logits_mut();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * lg.grad[i];
    model.advance_step();
  }
  const double final_loss = loss_combined(model, passages, batch, w);
  if (!std::isfinite(final_loss)) throw ModelError("training diverged");
  if (loss_trace) loss_trace->push_back(final_loss);
  return model;
}

inline nlohmann::json to_json(const ToyLm& m) {
  nlohmann::json logits = nlohmann::json::array();
  const std::size_t v = m.vocab_size();
  for (std::size_t i = 0; i < v; ++i) {
    const auto r = m.row(static_cast<TokenId>(i));
    logits.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"vocab", m.vocab().words()},
          {"logits", std::move(logits)},
          {"seed", m.seed()},
          {"step", m.step()},
          {"learning_rate", m.learning_rate()}};
}

inline ToyLm toy_lm_from_json(const nlohmann::json& j) {
  try {
    Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
    const auto rows = j.at("logits").get<std::vector<std::vector<double>>>();
    if (rows.size() != vocab.size()) throw FormatError("checkpoint logits must have V rows");
    std::vector<double> flat;
    flat.reserve(vocab.size() * vocab.size());
    for (const auto& r : rows) {
      if (r.size() != vocab.size()) throw FormatError("checkpoint logits must have V columns");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return ToyLm(std::move(vocab), std::move(flat), j.at("seed").get<std::uint64_t>(),
                 j.at("step").get<std::uint64_t>(), j.value("learning_rate", 0.05));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("bad model checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ToyLm& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << to_json(m).dump() << '\n';
}

inline ToyLm load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed checkpoint: " + e.what());
  }
  return toy_lm_from_json(j);
}

}  // namespace genki
