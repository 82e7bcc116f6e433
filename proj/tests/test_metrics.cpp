#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace genki;

TEST(Recall, WorkedExample) {
  EXPECT_DOUBLE_EQ(text_recall({"large language model"}, "language model"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(text_recall({"large language model"}, "large language model"), 1.0);
  EXPECT_DOUBLE_EQ(text_recall({"large language model"}, "tiny cat"), 0.0);
  EXPECT_DOUBLE_EQ(text_recall({"x"}, ""), 0.0);
  EXPECT_THROW(text_recall({}, "x"), InvalidArgument);
}

TEST(Recall, MaxOverGoldAndRepeatsCreditedOnce) {
  EXPECT_DOUBLE_EQ(text_recall({"a b c d", "b c"}, "b c"), 1.0);
  EXPECT_DOUBLE_EQ(text_recall({"b b"}, "b"), 0.5);
  EXPECT_DOUBLE_EQ(text_recall({"b"}, "b b b"), 1.0);
}

TEST(F1, HandComputed) {
  EXPECT_NEAR(text_f1({"a b c"}, "b c d"), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(text_f1({"a b c"}, "a b c"), 1.0);
  EXPECT_DOUBLE_EQ(text_f1({"a b c"}, "x"), 0.0);
}

TEST(ExactMatch, Normalization) {
  EXPECT_EQ(exact_match({"abc"}, "ABC "), 1.0);
  EXPECT_EQ(exact_match({"The Eiffel  Tower."}, "eiffel tower"), 1.0);
  EXPECT_EQ(exact_match({"x", "paris"}, " Paris!"), 1.0);
  EXPECT_EQ(exact_match({"paris"}, "paris france"), 0.0);
  EXPECT_EQ(normalize_answer("  An   Apple ?"), "apple");
}

TEST(Bleu, HandValues) {
  EXPECT_NEAR(bleu({"the cat sat"}, "the cat", 1), std::exp(1.0 - 1.5), 1e-12);
  EXPECT_NEAR(bleu({"the cat sat"}, "the cat", 1), 0.60653, 1e-5);
  EXPECT_DOUBLE_EQ(bleu({"the cat sat on"}, "the cat sat on", 4), 1.0);
  EXPECT_DOUBLE_EQ(bleu({"a b"}, "", 1), 0.0);
  EXPECT_THROW(bleu({"a"}, "a", 0), InvalidArgument);
  EXPECT_THROW(bleu({"a"}, "a", 5), InvalidArgument);
}

TEST(Rouge, HandValues) {
  EXPECT_NEAR(rouge_l({"a b c d"}, "a c d"), 2 * 0.75 / 1.75, 1e-12);
  EXPECT_NEAR(rouge_l({"a b c d"}, "a c d"), 0.857, 1e-3);
  EXPECT_DOUBLE_EQ(rouge_l({"a b c d"}, "a b c d"), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l({"a"}, ""), 0.0);
}

TEST(BleuRouge, AgreeWithBruteForce) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 100; ++t) {
    std::vector<gt::Toks> refs(1 + rng() % 2);
    std::vector<std::string> ref_text;
    for (auto& r : refs) {
      r = gt::random_words(rng, 8);
      ref_text.push_back(gt::join(r));
    }
    const auto hyp = gt::random_words(rng, 8);
    for (int n = 1; n <= 4; ++n)
      EXPECT_NEAR(bleu(ref_text, gt::join(hyp), n), gt::brute_bleu(refs, hyp, n), 1e-9) << t << " n=" << n;
    EXPECT_NEAR(rouge_l(ref_text, gt::join(hyp)), gt::brute_rouge(refs, hyp), 1e-9) << t;
  }
}

TEST(RetrievalQuality, WorkedExample) {
  EXPECT_DOUBLE_EQ(retrieval_quality("Large Language Model",
                                     {"Large language models have gained widespread language applications."}),
                   0.375);
  EXPECT_DOUBLE_EQ(retrieval_quality("paris", {"berlin is big"}), 0.0);
  EXPECT_DOUBLE_EQ(retrieval_quality("paris", {}), 0.0);
  EXPECT_DOUBLE_EQ(retrieval_quality("large language model", {"large language model"}), 1.0);
  EXPECT_DOUBLE_EQ(retrieval_quality("paris", {"no match", "paris ok"}), 0.5);
  EXPECT_THROW(retrieval_quality("", {"x"}), InvalidArgument);
}

// Article-free vocabulary: exact match drops articles while the token
// metrics count them, so the implication only holds without articles.
TEST(Metrics, RangeImplicationAndOrderInvariance) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::string> gold;
    for (std::size_t i = 0; i < 1 + rng() % 3; ++i) gold.push_back(gt::join(gt::no_articles(gt::random_words(rng, 4, 5))));
    const auto hyp = gt::join(gt::no_articles(gt::random_words(rng, 4, 5)));
    const double em = exact_match(gold, hyp), f1 = text_f1(gold, hyp), rec = text_recall(gold, hyp);
    for (double v : {em, f1, rec, bleu(gold, hyp, 2), rouge_l(gold, hyp)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (em == 1.0) {
      EXPECT_DOUBLE_EQ(f1, 1.0);
      EXPECT_DOUBLE_EQ(rec, 1.0);
    }
    EXPECT_DOUBLE_EQ(text_recall(gold, gold[0]), 1.0);
    auto rev = gold;
    std::reverse(rev.begin(), rev.end());
    EXPECT_EQ(exact_match(rev, hyp), em);
    EXPECT_EQ(text_f1(rev, hyp), f1);
    EXPECT_EQ(text_recall(rev, hyp), rec);
    EXPECT_EQ(bleu(rev, hyp, 3), bleu(gold, hyp, 3));
    EXPECT_EQ(rouge_l(rev, hyp), rouge_l(gold, hyp));
  }
}

TEST(SegmentFit, ExactLine) {
  std::vector<Point> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({i * 0.1, 2.0 * i * 0.1 + 0.5});
  const auto f = two_segment_fit(pts);
  for (const auto& s : {f.segment1, f.segment2}) {
    EXPECT_NEAR(s.slope, 2.0, 1e-9);
    EXPECT_NEAR(s.intercept, 0.5, 1e-9);
    EXPECT_NEAR(s.r2, 1.0, 1e-12);
  }
  EXPECT_GT(f.breakpoint, 0.0);
  EXPECT_LT(f.breakpoint, 1.1);
}

TEST(SegmentFit, RecoversTwoRegimes) {
  const auto pts = two_regime_points(41, 5.0, 0.1, 0.01, 5, 10.0);
  const auto f = two_segment_fit(pts);
  EXPECT_NEAR(f.breakpoint, 5.0, 10.0 / 40 + 1e-12);
  EXPECT_NEAR(f.segment1.slope, 1.0, 0.1);
  EXPECT_NEAR(f.segment2.slope, 0.1, 0.01);
  EXPECT_GT(f.segment1.r2, 0.985);
  EXPECT_GT(f.segment2.r2, 0.985);
}

TEST(SegmentFit, ConstantAndTooFew) {
  std::vector<Point> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({static_cast<double>(i), 3.0});
  const auto f = two_segment_fit(pts);
  EXPECT_DOUBLE_EQ(f.segment1.slope, 0.0);
  EXPECT_DOUBLE_EQ(f.segment1.r2, 1.0);
  EXPECT_DOUBLE_EQ(f.single.r2, 1.0);
  pts.resize(5);
  EXPECT_THROW(two_segment_fit(pts), InvalidArgument);
  EXPECT_THROW(two_segment_fit({{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, std::nan("")}}), InvalidArgument);
}

TEST(SegmentFit, SingleLineMatchesClosedForm) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    std::vector<Point> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({u(rng), u(rng)});
    double n = 10, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : pts) {
      sx += p.x;
      sy += p.y;
      sxx += p.x * p.x;
      sxy += p.x * p.y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    const auto f = two_segment_fit(pts);
    EXPECT_NEAR(f.single.slope, slope, 1e-9);
    EXPECT_NEAR(f.single.intercept, icpt, 1e-9);
  }
}

TEST(Report, TsvLayout) {
  const std::vector<QaPair> gold{{"q1", "?", {"paris"}, AnswerFormat::Entity},
                                 {"q2", "?", {"large language model"}, AnswerFormat::Entity}};
  const auto rep = evaluate(gold, {{"q1", "Paris"}, {"q2", "language model"}});
  EXPECT_DOUBLE_EQ(rep.em, 0.5);
  EXPECT_NEAR(rep.recall, (1 + 2.0 / 3) / 2, 1e-12);
  const auto tsv = report_tsv(rep);
  std::istringstream in(tsv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "qid\tem\trecall\tf1\tbleu1\tbleu2\tbleu3\tbleu4\trouge_l");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 12), "q1\t1.000000\t");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 3), "q2\t");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 4), "ALL\t");
  EXPECT_FALSE(std::getline(in, line));
}

TEST(Report, MissingHypothesisScoresZero) {
  const std::vector<QaPair> gold{{"q1", "?", {"paris"}, AnswerFormat::Entity}};
  const auto rep = evaluate(gold, {});
  EXPECT_EQ(rep.em, 0.0);
  EXPECT_EQ(rep.recall, 0.0);
}

TEST(Report, JobsAndHooks) {
  std::mt19937_64 rng(9);
  std::vector<QaPair> gold;
  std::map<std::string, std::string> hyps;
  for (int i = 0; i < 50; ++i) {
    const auto id = "q" + std::to_string(i);
    gold.push_back({id, "?", {gt::join(gt::random_words(rng, 4))}, AnswerFormat::Entity});
    hyps[id] = gt::join(gt::random_words(rng, 4));
  }
  const ExternalMetric len{"len", [](const QaPair&, std::string_view h) { return double(h.size()); }};
  const auto a = evaluate(gold, hyps, {len}, 1);
  const auto b = evaluate(gold, hyps, {len}, 4);
  EXPECT_EQ(report_tsv(a), report_tsv(b));
  ASSERT_EQ(a.extra.size(), 1u);
  double total = 0;
  for (const auto& [_, h] : hyps) total += double(h.size());
  EXPECT_NEAR(a.extra[0], total / 50, 1e-12);
  EXPECT_NE(report_tsv(a).find("\tlen\n"), std::string::npos);
}
