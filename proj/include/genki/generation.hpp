#pragma once

// End-to-end pipeline: train the full-knowledge, retrieved-knowledge and
// post-processing models, draft an answer along both knowledge paths,
// reformat each draft and select the final answer.

#include <algorithm>
#include <atomic>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "genki/consistency.hpp"
#include "genki/corpus.hpp"
#include "genki/ensemble.hpp"
#include "genki/error.hpp"
#include "genki/lm.hpp"
#include "genki/metrics.hpp"
#include "genki/retriever.hpp"
#include "genki/reward.hpp"
#include "json.hpp"

namespace genki {

/// How the post-processing model turns a draft into the final format.
enum class PostpDecoding {
  Constrained,  // greedy, restricted to contiguous spans of the draft
  Free,         // unconstrained greedy generation
};

struct TrainingConfig {
  std::size_t lm_steps = 150;
  double lm_learning_rate = 0.3;
  double init_scale = 0.01;
  std::size_t reward_steps = 200;
  double reward_learning_rate = 0.05;
};

struct EmbedderConfig {
  std::size_t dim = 4096;
  std::uint64_t seed = 1;
};

struct PipelineConfig {
  std::size_t k = 3;
  EmbedderConfig embedder;
  LossWeights weights;
  FormatSpec format{AnswerFormat::Entity, 4, "a short entity name"};
  std::map<std::string, std::string> prompt_templates = default_templates();
  std::size_t max_output_tokens = 50;
  std::uint64_t seed = 7;
  std::size_t jobs = 1;
  PostpDecoding postp_decoding = PostpDecoding::Constrained;
  TrainingConfig training;

  // The toy bigram backend conditions on the final prompt token, so the
  // templates end with the slot that carries the question-specific token.
  static std::map<std::string, std::string> default_templates() {
    return {
        {"I", "answer the question . {question}"},
        {"II", "{passages} answer the question using the passages . {question}"},
        {"III", "draft : {draft} format : {format} answer :"},
        {"IV", "question : {question} first : {answer_1} second : {answer_2} which answer "
               "better fits {format} ?"},
    };
  }

  void validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (embedder.dim < 1) throw ConfigError("embedder dim must be >= 1");
    try {
      weights.validate();
      format.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    for (const char* key : {"I", "II", "III", "IV"})
      if (!prompt_templates.contains(key))
        throw ConfigError(std::string("missing prompt template ") + key);
  }

  const std::string& tmpl(const std::string& key) const { return prompt_templates.at(key); }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"k", c.k},
          {"lambda1", c.weights.lambda1},
          {"lambda2", c.weights.lambda2},
          {"format",
           {{"kind", to_string(c.format.kind)},
            {"max_tokens", c.format.max_tokens},
            {"description", c.format.description}}},
          {"templates", c.prompt_templates},
          {"max_output_tokens", c.max_output_tokens},
          {"seed", c.seed},
          {"jobs", c.jobs},
          {"embedder", {{"dim", c.embedder.dim}, {"seed", c.embedder.seed}}},
          {"postp_decoding", c.postp_decoding == PostpDecoding::Free ? "free" : "constrained"},
          {"training",
           {{"lm_steps", c.training.lm_steps},
            {"lm_learning_rate", c.training.lm_learning_rate},
            {"init_scale", c.training.init_scale},
            {"reward_steps", c.training.reward_steps},
            {"reward_learning_rate", c.training.reward_learning_rate}}}};
}

/// Reads the keys present in `j` over the defaults in `base`.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                                PipelineConfig base = {}) {
  try {
    base.k = j.value("k", base.k);
    base.weights.lambda1 = j.value("lambda1", base.weights.lambda1);
    base.weights.lambda2 = j.value("lambda2", base.weights.lambda2);
    base.max_output_tokens = j.value("max_output_tokens", base.max_output_tokens);
    base.seed = j.value("seed", base.seed);
    base.jobs = j.value("jobs", base.jobs);
    if (j.contains("format")) {
      const auto& f = j.at("format");
      if (f.contains("kind")) base.format.kind = parse_answer_format(f.at("kind").get<std::string>());
      base.format.max_tokens = f.value("max_tokens", base.format.max_tokens);
      base.format.description = f.value("description", base.format.description);
    }
    if (j.contains("embedder")) {
      base.embedder.dim = j.at("embedder").value("dim", base.embedder.dim);
      base.embedder.seed = j.at("embedder").value("seed", base.embedder.seed);
    }
    if (j.contains("templates"))
      for (const auto& [key, val] : j.at("templates").items())
        base.prompt_templates[key] = val.get<std::string>();
    if (j.contains("postp_decoding")) {
      const auto mode = j.at("postp_decoding").get<std::string>();
      if (mode == "free") base.postp_decoding = PostpDecoding::Free;
      else if (mode == "constrained") base.postp_decoding = PostpDecoding::Constrained;
      else throw ConfigError("postp_decoding must be 'constrained' or 'free'");
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      base.training.lm_steps = t.value("lm_steps", base.training.lm_steps);
      base.training.lm_learning_rate = t.value("lm_learning_rate", base.training.lm_learning_rate);
      base.training.init_scale = t.value("init_scale", base.training.init_scale);
      base.training.reward_steps = t.value("reward_steps", base.training.reward_steps);
      base.training.reward_learning_rate =
          t.value("reward_learning_rate", base.training.reward_learning_rate);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad pipeline config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return base;
}

/// Replaces `{name}` slots; unknown slots are left as written.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& slots) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        auto it = slots.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

/// id -> passage text.
using PassageLookup = std::map<std::string, std::string>;

inline PassageLookup make_lookup(const std::vector<Passage>& passages) {
  PassageLookup out;
  for (const auto& p : passages) out.emplace(p.id, p.text);
  return out;
}

/// Read-only retrieval context shared by every question.
struct RetrievalContext {
  const DenseIndex* index = nullptr;
  const Embedder* embedder = nullptr;
  const PassageLookup* passages = nullptr;

  std::vector<RetrievalResult> retrieve(std::string_view question, std::size_t k) const {
    if (!index || !embedder || !passages) throw InvalidArgument("retrieval context incomplete");
    return genki::retrieve(*index, *embedder, question, k);
  }

  std::string passage_block(const std::vector<RetrievalResult>& hits) const {
    std::string block;
    for (const auto& h : hits) {
      auto it = passages->find(h.passage_id);
      if (it == passages->end())
        throw DataError("index references unknown passage '" + h.passage_id + "'");
      if (!block.empty()) block += ' ';
      block += it->second;
    }
    return block;
  }
};

inline std::string prompt_full(const PipelineConfig& cfg, std::string_view question) {
  return render_template(cfg.tmpl("I"), {{"question", std::string(question)},
                                         {"format", cfg.format.description}});
}

inline std::string prompt_retrieved(const PipelineConfig& cfg, std::string_view question,
                                    const std::string& passages) {
  return render_template(cfg.tmpl("II"), {{"question", std::string(question)},
                                          {"passages", passages},
                                          {"format", cfg.format.description}});
}

inline std::string prompt_postp(const PipelineConfig& cfg, std::string_view draft,
                                std::string_view question = {}) {
  return render_template(cfg.tmpl("III"), {{"draft", std::string(draft)},
                                           {"question", std::string(question)},
                                           {"format", cfg.format.description}});
}

struct AnswerPaths {
  AnswerCandidate full;       // A_K
  AnswerCandidate retrieved;  // A_KR
  std::vector<RetrievalResult> hits;
};

namespace detail {

inline AnswerCandidate draft_with(const LmScorer& model, const std::string& prompt,
                                  const Vocabulary& vocab, std::size_t max_tokens,
                                  Provenance provenance) {
  const char* path = provenance == Provenance::FullKnowledge ? "full-knowledge" : "retrieved-knowledge";
  TokenSeq out;
  try {
    out = model.generate(vocab.encode(prompt), max_tokens);
  } catch (const std::exception& e) {
    throw ModelError(std::string(path) + " path: generation failed: " + e.what());
  }
  if (detail::blank(out.text)) throw ModelError(std::string(path) + " path: empty generation");
  auto toks = lm_tokens(out.text);
  if (toks.size() > max_tokens) toks.resize(max_tokens);
  return {detokenize(toks), provenance, false};
}

}  // namespace detail

/// Drafts A_K with the full-knowledge model (template I) and A_KR with the
/// retrieved-knowledge model (template II over the top-k passages).
inline AnswerPaths answer_paths(const QaPair& q, const LmScorer& full_model,
                                const LmScorer& retr_model, const RetrievalContext& retrieval,
                                const Vocabulary& vocab, const PipelineConfig& cfg) {
  AnswerPaths out;
  out.hits = retrieval.retrieve(q.question, cfg.k);
  out.full = detail::draft_with(full_model, prompt_full(cfg, q.question), vocab,
                                cfg.max_output_tokens, Provenance::FullKnowledge);
  out.retrieved = detail::draft_with(retr_model,
                                     prompt_retrieved(cfg, q.question, retrieval.passage_block(out.hits)),
                                     vocab, cfg.max_output_tokens, Provenance::RetrievedKnowledge);
  return out;
}

namespace detail {

inline TokenSeq extend(const TokenSeq& base, const std::vector<TokenId>& ids,
                       const std::vector<std::string>& words) {
  TokenSeq s = base;
  s.tokens.insert(s.tokens.end(), ids.begin(), ids.end());
  if (!words.empty()) s.text += (s.text.empty() ? "" : " ") + detokenize(words);
  return s;
}

inline TokenSeq single(TokenId id, std::string text) { return TokenSeq{{id}, std::move(text)}; }

// Greedy decoding where every emitted token must extend a contiguous span
// of the draft; the span may stop (</s>) after its first token.
inline std::string constrained_postp(const LmScorer& model, const TokenSeq& prompt,
                                     const std::vector<std::string>& draft,
                                     const Vocabulary& vocab, std::size_t max_tokens) {
  std::vector<TokenId> draft_ids;
  for (const auto& w : draft) draft_ids.push_back(vocab.id(w));

  std::vector<TokenId> out_ids;
  std::vector<std::string> out_words;
  std::vector<std::size_t> ends;  // draft positions matching the last emitted token

  // first token: any non-punctuation draft token, earliest occurrence wins ties
  {
    double best = -std::numeric_limits<double>::infinity();
    std::optional<std::size_t> pick;
    std::set<std::string> tried;
    for (std::size_t i = 0; i < draft.size(); ++i) {
      if (is_punct_token(draft[i]) || !tried.insert(draft[i]).second) continue;
      const double lp = model.logprob_cond(prompt, single(draft_ids[i], draft[i]));
      if (lp > best) {
        best = lp;
        pick = i;
      }
    }
    if (!pick) return {};
    out_ids.push_back(draft_ids[*pick]);
    out_words.push_back(draft[*pick]);
    for (std::size_t i = 0; i < draft.size(); ++i)
      if (draft[i] == draft[*pick]) ends.push_back(i);
  }

  while (out_ids.size() < max_tokens) {
    const auto ctx = extend(prompt, out_ids, out_words);
    double best = model.logprob_cond(ctx, single(Vocabulary::kEos, "</s>"));
    std::optional<std::size_t> pick;
    std::set<std::string> tried;
    for (std::size_t e : ends) {
      if (e + 1 >= draft.size() || !tried.insert(draft[e + 1]).second) continue;
      const double lp = model.logprob_cond(ctx, single(draft_ids[e + 1], draft[e + 1]));
      if (lp > best) {
        best = lp;
        pick = e + 1;
      }
    }
    if (!pick) break;
    const std::string chosen = draft[*pick];
    out_ids.push_back(draft_ids[*pick]);
    out_words.push_back(chosen);
    std::vector<std::size_t> next;
    for (std::size_t e : ends)
      if (e + 1 < draft.size() && draft[e + 1] == chosen) next.push_back(e + 1);
    ends = std::move(next);
  }
  return detokenize(out_words);
}

}  // namespace detail

/// Reformats a draft with the post-processing model (template III). The
/// result holds at most format.max_tokens tokens.
inline AnswerCandidate postprocess(const AnswerCandidate& cand, const LmScorer& postp_model,
                                   const FormatSpec& format, const PipelineConfig& cfg,
                                   const Vocabulary& vocab, std::string_view question = {}) {
  if (cand.postprocessed) throw InvalidArgument("postprocess: candidate already postprocessed");
  format.validate();
  const auto prompt = vocab.encode(prompt_postp(cfg, cand.text, question));
  std::string text;
  try {
    if (cfg.postp_decoding == PostpDecoding::Constrained) {
      text = detail::constrained_postp(postp_model, prompt, lm_tokens(cand.text), vocab,
                                       format.max_tokens);
    } else {
      text = postp_model.generate(prompt, format.max_tokens).text;
    }
  } catch (const std::exception& e) {
    throw ModelError(std::string("postprocess: generation failed: ") + e.what());
  }
  auto toks = lm_tokens(text);
  if (toks.empty()) throw ModelError("postprocess: model produced an empty answer");
  if (toks.size() > format.max_tokens) toks.resize(format.max_tokens);
  return {detokenize(toks), cand.provenance, true};
}

/// Everything downstream of training. Pointers are non-owning; every
/// referenced object must outlive the pipeline run and stay unmodified.
struct PipelineModels {
  const LmScorer* full = nullptr;         // L_1
  const LmScorer* retrieved = nullptr;    // L_2
  const LmScorer* postp = nullptr;        // L_3
  const LmScorer* consistency = nullptr;  // scorer behind C_s
  const RewardModel* reward = nullptr;
  const ExternalJudge* judge = nullptr;
  RetrievalContext retrieval;
  const CorpusStats* stats = nullptr;
  const Vocabulary* vocab = nullptr;

  void validate() const {
    if (!full || !retrieved || !postp || !consistency || !reward || !judge || !stats || !vocab ||
        !retrieval.index || !retrieval.embedder || !retrieval.passages)
      throw InvalidArgument("pipeline models incomplete");
  }
};

struct PipelineRun {
  std::string qid;
  std::vector<std::string> retrieved_ids;
  std::string raw_full, raw_retrieved;
  std::string post_full, post_retrieved;
  std::optional<ScoreBundle> bundle;
  std::string final_answer;
  std::optional<Provenance> final_provenance;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

inline nlohmann::json to_json(const PipelineRun& r) {
  nlohmann::json j{{"qid", r.qid},
                   {"retrieved_ids", r.retrieved_ids},
                   {"raw_full", r.raw_full},
                   {"raw_retrieved", r.raw_retrieved},
                   {"post_full", r.post_full},
                   {"post_retrieved", r.post_retrieved},
                   {"final_answer", r.final_answer}};
  j["final_provenance"] = r.final_provenance ? nlohmann::json(to_string(*r.final_provenance))
                                             : nlohmann::json();
  j["bundle"] = r.bundle ? to_json(*r.bundle) : nlohmann::json();
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json();
  return j;
}

/// Full flow for one question; failures land in PipelineRun::error.
inline PipelineRun run_question(const QaPair& q, const PipelineModels& m,
                                const PipelineConfig& cfg) {
  PipelineRun run;
  run.qid = q.id;
  try {
    const auto paths = answer_paths(q, *m.full, *m.retrieved, m.retrieval, *m.vocab, cfg);
    for (const auto& h : paths.hits) run.retrieved_ids.push_back(h.passage_id);
    run.raw_full = paths.full.text;
    run.raw_retrieved = paths.retrieved.text;
    const auto a1 = postprocess(paths.full, *m.postp, cfg.format, cfg, *m.vocab, q.question);
    const auto a2 = postprocess(paths.retrieved, *m.postp, cfg.format, cfg, *m.vocab, q.question);
    run.post_full = a1.text;
    run.post_retrieved = a2.text;
    auto sel = select(q.question, a1, a2, *m.consistency, *m.stats, *m.vocab, *m.reward, *m.judge,
                      cfg.format, q.id);
    run.final_answer = sel.winner.text;
    run.final_provenance = sel.winner.provenance;
    run.bundle = std::move(sel.bundle);
  } catch (const SelectionError& e) {
    run.bundle = e.partial();
    run.error = e.what();
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

/// One run per question, in input order. With cfg.jobs > 1 questions are
/// processed concurrently; the output does not depend on the job count.
inline std::vector<PipelineRun> run_pipeline(const std::vector<QaPair>& questions,
                                             const PipelineModels& models,
                                             const PipelineConfig& cfg) {
  cfg.validate();
  models.validate();
  std::vector<PipelineRun> runs(questions.size());
  if (cfg.jobs <= 1 || questions.size() <= 1) {
    for (std::size_t i = 0; i < questions.size(); ++i) runs[i] = run_question(questions[i], models, cfg);
    return runs;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> workers;
    const std::size_t n = std::min(cfg.jobs, questions.size());
    for (std::size_t w = 0; w < n; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < questions.size(); i = next++)
          runs[i] = run_question(questions[i], models, cfg);
      });
  }
  return runs;
}

inline std::string runs_jsonl(const std::vector<PipelineRun>& runs) {
  std::string out;
  for (const auto& r : runs) out += to_json(r).dump() + '\n';
  return out;
}

inline std::string audit_jsonl(const std::vector<PipelineRun>& runs) {
  std::string out;
  for (const auto& r : runs)
    if (r.bundle) out += to_json(*r.bundle).dump() + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Training of the three model roles and the reward model.

struct TrainedModels {
  ToyLm full;       // L_1: every passage
  ToyLm retrieved;  // L_2: retrieved passages
  ToyLm postp;      // L_3: draft -> formatted answer pairs
  LinearRewardModel reward;
  std::vector<std::string> retrieved_passage_ids;  // the union P_R
};

/// Vocabulary over passages, questions, answers and template text.
inline Vocabulary pipeline_vocabulary(const std::vector<Passage>& passages,
                                      const std::vector<QaPair>& qa, const PipelineConfig& cfg) {
  std::vector<std::string> texts;
  for (const auto& p : passages) texts.push_back(p.text);
  for (const auto& q : qa) {
    texts.push_back(q.question);
    for (const auto& a : q.answers) texts.push_back(a);
  }
  for (const auto& [_, t] : cfg.prompt_templates) texts.push_back(render_template(t, {}));
  texts.push_back(cfg.format.description);
  return Vocabulary::from_texts(texts);
}

namespace detail {

inline std::vector<TokenSeq> passage_sequences(const std::vector<std::string>& texts,
                                               const Vocabulary& vocab) {
  std::vector<TokenSeq> out;
  for (const auto& t : texts) {
    auto seq = vocab.encode(t, /*append_eos=*/true);
    if (seq.tokens.size() >= 2) out.push_back(std::move(seq));
  }
  return out;
}

inline ToyLm fresh_model(const Vocabulary& vocab, std::uint64_t seed, const TrainingConfig& t) {
  return ToyLm(vocab, seed, t.lm_learning_rate, t.init_scale);
}

}  // namespace detail

/// Union of the top-k passages over every question, in first-seen order.
inline std::vector<std::string> retrieved_union(const std::vector<QaPair>& questions,
                                                const RetrievalContext& retrieval, std::size_t k) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& q : questions)
    for (const auto& h : retrieval.retrieve(q.question, k))
      if (seen.insert(h.passage_id).second) ids.push_back(h.passage_id);
  return ids;
}

/// Preference pairs from gold exact match: answers matching a gold answer
/// are positives, the others negatives; the gold answer itself is always a
/// positive.
inline std::vector<PreferencePair> preference_pairs(
    const QaPair& q, const std::vector<std::string>& candidates, const FormatSpec& format) {
  std::vector<std::string> pos{q.answers.front()}, neg;
  std::set<std::string> seen{normalize_answer(q.answers.front())};
  for (const auto& c : candidates) {
    if (detail::blank(c) || !seen.insert(normalize_answer(c)).second) continue;
    (exact_match(q.answers, c) > 0 ? pos : neg).push_back(c);
  }
  std::vector<PreferencePair> out;
  for (const auto& p : pos)
    for (const auto& n : neg) out.push_back({p, n, format, q.question});
  return out;
}

/// Trains L_1 on all passages, L_2 on the passages retrieved for
/// `retrieval_questions`, both with the instruction loss over `train_qa`;
/// then L_3 on (L_2 draft, gold answer) pairs and the reward model on
/// exact-match preferences over the training drafts.
inline TrainedModels train_pipeline(const std::vector<Passage>& passages,
                                    const std::vector<QaPair>& train_qa,
                                    const std::vector<QaPair>& retrieval_questions,
                                    const RetrievalContext& retrieval, const Vocabulary& vocab,
                                    const PipelineConfig& cfg) {
  cfg.validate();
  if (train_qa.empty()) throw InvalidArgument("train_pipeline: no training questions");
  const auto& t = cfg.training;

  std::vector<std::string> all_texts;
  for (const auto& p : passages) all_texts.push_back(p.text);
  const auto all_seqs = detail::passage_sequences(all_texts, vocab);

  auto ids = retrieved_union(retrieval_questions, retrieval, cfg.k);
  for (const auto& id : retrieved_union(train_qa, retrieval, cfg.k))
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  std::vector<std::string> retr_texts;
  for (const auto& id : ids) retr_texts.push_back(retrieval.passages->at(id));
  const auto retr_seqs = detail::passage_sequences(retr_texts, vocab);

  std::vector<TrainExample> ex_full, ex_retr;
  std::vector<std::string> blocks;
  for (const auto& q : train_qa) {
    const auto answer = vocab.encode(q.answers.front(), /*append_eos=*/true);
    ex_full.push_back({vocab.encode(prompt_full(cfg, q.question)), answer});
    blocks.push_back(retrieval.passage_block(retrieval.retrieve(q.question, cfg.k)));
    ex_retr.push_back({vocab.encode(prompt_retrieved(cfg, q.question, blocks.back())), answer});
  }

  TrainedModels out{
      train(detail::fresh_model(vocab, cfg.seed, t), all_seqs, ex_full, cfg.weights, t.lm_steps),
      train(detail::fresh_model(vocab, cfg.seed + 1, t), retr_seqs, ex_retr, cfg.weights,
            t.lm_steps),
      detail::fresh_model(vocab, cfg.seed + 2, t),
      LinearRewardModel({}, cfg.seed),
      ids};

  // format passages: L_2 drafts on the training questions paired with gold
  std::vector<TrainExample> ex_postp;
  std::vector<std::string> drafts;
  for (std::size_t i = 0; i < train_qa.size(); ++i) {
    const auto draft =
        out.retrieved.generate(vocab.encode(prompt_retrieved(cfg, train_qa[i].question, blocks[i])),
                               cfg.max_output_tokens);
    drafts.push_back(draft.text);
    if (detail::blank(draft.text)) continue;
    ex_postp.push_back({vocab.encode(prompt_postp(cfg, draft.text, train_qa[i].question)),
                        vocab.encode(train_qa[i].answers.front(), /*append_eos=*/true)});
  }
  if (!ex_postp.empty())
    out.postp = train(std::move(out.postp), {}, ex_postp, cfg.weights, t.lm_steps);

  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < train_qa.size(); ++i) {
    const auto& q = train_qa[i];
    std::vector<std::string> cands{drafts[i]};
    if (!detail::blank(drafts[i])) {
      try {
        cands.push_back(postprocess({drafts[i], Provenance::RetrievedKnowledge, false}, out.postp,
                                    cfg.format, cfg, vocab, q.question)
                            .text);
      } catch (const ModelError&) {
      }
    }
    cands.push_back(out.full.generate(vocab.encode(prompt_full(cfg, q.question)),
                                      cfg.max_output_tokens)
                        .text);
    auto p = preference_pairs(q, cands, cfg.format);
    pairs.insert(pairs.end(), p.begin(), p.end());
  }
  if (!pairs.empty())
    out.reward = train_reward(out.reward, pairs, t.reward_steps, t.reward_learning_rate);
  return out;
}

}  // namespace genki
