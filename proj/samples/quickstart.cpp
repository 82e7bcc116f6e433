// Builds a small synthetic knowledge base, trains the toy models, answers
// the held-out questions and prints the metric footer.

#include <iostream>

#include "genki/genki.hpp"

int main() {
  using namespace genki;

  const auto corpus = make_synthetic({.facts = 40, .distractors = 40, .seed = 3});
  PipelineConfig cfg;
  cfg.k = 2;

  std::vector<QaPair> all = corpus.train_qa;
  all.insert(all.end(), corpus.test_qa.begin(), corpus.test_qa.end());
  const auto vocab = pipeline_vocabulary(corpus.passages, all, cfg);

  const HashEmbedder embedder(cfg.embedder.dim, cfg.embedder.seed);
  const auto index = build_index(corpus.passages, embedder);
  const auto lookup = make_lookup(corpus.passages);
  const RetrievalContext retrieval{&index, &embedder, &lookup};

  const auto trained =
      train_pipeline(corpus.passages, corpus.train_qa, corpus.test_qa, retrieval, vocab, cfg);

  const auto stats = build_stats(corpus.passages);
  const StubJudge judge;
  PipelineModels models;
  models.full = &trained.full;
  models.retrieved = &trained.retrieved;
  models.postp = &trained.postp;
  models.consistency = &trained.full;
  models.reward = &trained.reward;
  models.judge = &judge;
  models.retrieval = retrieval;
  models.stats = &stats;
  models.vocab = &vocab;

  const auto runs = run_pipeline(corpus.test_qa, models, cfg);
  std::map<std::string, std::string> hyps;
  for (const auto& r : runs) hyps[r.qid] = r.final_answer;

  const auto& first = runs.front();
  std::cout << corpus.test_qa.front().question << "\n  draft: " << first.raw_retrieved
            << "\n  final: " << first.final_answer << " (" << to_string(*first.final_provenance)
            << ", route " << to_string(first.bundle->route) << ")\n";

  const auto report = evaluate(corpus.test_qa, hyps);
  std::cout << "EM " << report.em << "  recall " << report.recall << "  F1 " << report.f1 << '\n';
}
