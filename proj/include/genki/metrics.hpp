#pragma once

// Answer-quality metrics: exact match, text-level recall and F1, BLEU-n,
// ROUGE-L, plus the retrieval-quality measure used by the analysis.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "genki/corpus.hpp"
#include "genki/error.hpp"
#include "genki/tokenize.hpp"

namespace genki {

/// Lowercase, trim, drop trailing punctuation and the articles a/an/the,
/// collapse whitespace.
inline std::string normalize_answer(std::string_view text) {
  auto toks = lm_tokens(text);
  while (!toks.empty() && is_punct_token(toks.back())) {
    const auto& t = toks.back();
    if (t == "." || t == "!" || t == "?" || t == "," || t == ";" || t == ":" || t == "。" ||
        t == "！" || t == "？")
      toks.pop_back();
    else
      break;
  }
  std::erase_if(toks, [](const std::string& t) { return t == "a" || t == "an" || t == "the"; });
  return detokenize(toks);
}

inline double exact_match(const std::vector<std::string>& gold, std::string_view hyp) {
  if (gold.empty()) throw InvalidArgument("exact_match: no gold answers");
  const auto h = normalize_answer(hyp);
  for (const auto& g : gold)
    if (normalize_answer(g) == h) return 1.0;
  return 0.0;
}

namespace detail {

inline std::size_t multiset_overlap(const std::vector<std::string>& a,
                                    const std::vector<std::string>& b) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : a) ++counts[t];
  std::size_t n = 0;
  for (const auto& t : b) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++n;
    }
  }
  return n;
}

}  // namespace detail

/// Fraction of a gold answer's tokens present in the hypothesis, each
/// token credited at most as often as it occurs. Maximized over gold answers.
inline double text_recall(const std::vector<std::string>& gold, std::string_view hyp) {
  if (gold.empty()) throw InvalidArgument("text_recall: no gold answers");
  const auto h = word_tokens(hyp);
  if (h.empty()) return 0.0;
  double best = 0;
  for (const auto& g : gold) {
    const auto gt = word_tokens(g);
    if (gt.empty()) continue;
    best = std::max(best, static_cast<double>(detail::multiset_overlap(gt, h)) /
                              static_cast<double>(gt.size()));
  }
  return best;
}

inline double text_f1(const std::vector<std::string>& gold, std::string_view hyp) {
  if (gold.empty()) throw InvalidArgument("text_f1: no gold answers");
  const auto h = word_tokens(hyp);
  if (h.empty()) return 0.0;
  double best = 0;
  for (const auto& g : gold) {
    const auto gt = word_tokens(g);
    if (gt.empty()) continue;
    const double common = static_cast<double>(detail::multiset_overlap(gt, h));
    if (common == 0) continue;
    const double p = common / static_cast<double>(h.size());
    const double r = common / static_cast<double>(gt.size());
    best = std::max(best, 2 * p * r / (p + r));
  }
  return best;
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

inline double bleu_single(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                          int max_n) {
  if (hyp.empty()) return 0.0;
  double log_sum = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto h = ngram_counts(hyp, n);
    const auto r = ngram_counts(ref, n);
    std::size_t total = 0, clipped = 0;
    for (const auto& [g, c] : h) {
      total += c;
      auto it = r.find(g);
      if (it != r.end()) clipped += std::min(c, it->second);
    }
    if (clipped == 0) return 0.0;  // unsmoothed
    log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }
  const double c = static_cast<double>(hyp.size()), rl = static_cast<double>(ref.size());
  const double bp = c >= rl ? 1.0 : std::exp(1.0 - rl / c);
  return bp * std::exp(log_sum / max_n);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Sentence BLEU with uniform weights over orders 1..n, brevity penalty and
/// no smoothing; maximized over references.
inline double bleu(const std::vector<std::string>& refs, std::string_view hyp, int n) {
  if (n < 1 || n > 4) throw InvalidArgument("bleu: n must be in 1..4");
  const auto h = word_tokens(hyp);
  double best = 0;
  for (const auto& r : refs) best = std::max(best, detail::bleu_single(word_tokens(r), h, n));
  return best;
}

/// ROUGE-L F-measure with beta = 1; maximized over references.
inline double rouge_l(const std::vector<std::string>& refs, std::string_view hyp) {
  const auto h = word_tokens(hyp);
  if (h.empty()) return 0.0;
  double best = 0;
  for (const auto& r : refs) {
    const auto rt = word_tokens(r);
    if (rt.empty()) continue;
    const double lcs = static_cast<double>(detail::lcs_length(rt, h));
    if (lcs == 0) continue;
    const double rec = lcs / static_cast<double>(rt.size());
    const double prec = lcs / static_cast<double>(h.size());
    best = std::max(best, 2 * prec * rec / (prec + rec));
  }
  return best;
}

/// Plural-insensitive token identity used by retrieval_quality.
inline std::string light_stem(std::string tok) {
  if (tok.size() > 3 && tok.back() == 's' && tok[tok.size() - 2] != 's') tok.pop_back();
  return tok;
}

/// Gold tokens found in the first retrieved passage that contains any of
/// them, divided by that passage's token count. A passage token only
/// credits a gold token as often as the gold answer contains it.
inline double retrieval_quality(std::string_view gold, const std::vector<std::string>& retrieved) {
  auto g = word_tokens(gold);
  if (g.empty()) throw InvalidArgument("retrieval_quality: empty gold answer");
  for (auto& t : g) t = light_stem(std::move(t));
  for (const auto& passage : retrieved) {
    auto p = word_tokens(passage);
    if (p.empty()) continue;
    for (auto& t : p) t = light_stem(std::move(t));
    const auto matched = detail::multiset_overlap(g, p);
    if (matched > 0) return static_cast<double>(matched) / static_cast<double>(p.size());
  }
  return 0.0;
}

/// Additional per-question metric supplied by the caller (for example a
/// coherence scorer backed by an external model).
struct ExternalMetric {
  std::string name;
  std::function<double(const QaPair&, std::string_view hyp)> fn;
};

struct MetricRow {
  std::string qid;
  double em = 0, recall = 0, f1 = 0;
  std::array<double, 4> bleu{};
  double rouge_l = 0;
  std::vector<double> extra;
};

struct MetricReport {
  double em = 0, recall = 0, f1 = 0;
  std::map<int, double> bleu;  // n -> mean BLEU-n
  double rouge_l = 0;
  std::vector<std::string> extra_names;
  std::vector<double> extra;
  std::vector<MetricRow> rows;
};

inline MetricRow score_row(const QaPair& q, const std::string& hyp,
                           const std::vector<ExternalMetric>& hooks = {}) {
  MetricRow row;
  row.qid = q.id;
  row.em = exact_match(q.answers, hyp);
  row.recall = text_recall(q.answers, hyp);
  row.f1 = text_f1(q.answers, hyp);
  for (int n = 1; n <= 4; ++n) row.bleu[n - 1] = bleu(q.answers, hyp, n);
  row.rouge_l = rouge_l(q.answers, hyp);
  for (const auto& h : hooks) row.extra.push_back(h.fn(q, hyp));
  return row;
}

/// Scores `hyps` (qid -> answer) against the gold QA pairs. A question with
/// no hypothesis scores as the empty answer. With jobs > 1 rows are scored
/// concurrently (hooks must then be thread-safe); means are summed in input
/// order either way, so the report does not depend on `jobs`.
inline MetricReport evaluate(const std::vector<QaPair>& gold,
                             const std::map<std::string, std::string>& hyps,
                             const std::vector<ExternalMetric>& hooks = {},
                             std::size_t jobs = 1) {
  MetricReport rep;
  for (int n = 1; n <= 4; ++n) rep.bleu[n] = 0;
  for (const auto& h : hooks) rep.extra_names.push_back(h.name);
  rep.extra.assign(hooks.size(), 0.0);
  rep.rows.resize(gold.size());
  auto score = [&](std::size_t i) {
    auto it = hyps.find(gold[i].id);
    rep.rows[i] = score_row(gold[i], it == hyps.end() ? std::string() : it->second, hooks);
  };
  if (jobs <= 1 || gold.size() <= 1) {
    for (std::size_t i = 0; i < gold.size(); ++i) score(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(jobs, gold.size()); ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < gold.size(); i = next++) score(i);
      });
  }
  for (const auto& row : rep.rows) {
    rep.em += row.em;
    rep.recall += row.recall;
    rep.f1 += row.f1;
    for (int n = 1; n <= 4; ++n) rep.bleu[n] += row.bleu[n - 1];
    rep.rouge_l += row.rouge_l;
    for (std::size_t i = 0; i < hooks.size(); ++i) rep.extra[i] += row.extra[i];
  }
  if (!gold.empty()) {
    const double inv = 1.0 / static_cast<double>(gold.size());
    rep.em *= inv;
    rep.recall *= inv;
    rep.f1 *= inv;
    for (auto& [n, v] : rep.bleu) v *= inv;
    rep.rouge_l *= inv;
    for (auto& v : rep.extra) v *= inv;
  }
  return rep;
}

namespace detail {

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

/// Per-question TSV rows followed by an `ALL` footer with the means.
inline std::string report_tsv(const MetricReport& rep) {
  std::ostringstream out;
  out << "qid\tem\trecall\tf1\tbleu1\tbleu2\tbleu3\tbleu4\trouge_l";
  for (const auto& n : rep.extra_names) out << '\t' << n;
  out << '\n';
  auto line = [&](const std::string& id, double em, double rec, double f1,
                  const std::array<double, 4>& b, double rl, const std::vector<double>& extra) {
    out << id << '\t' << detail::fmt6(em) << '\t' << detail::fmt6(rec) << '\t' << detail::fmt6(f1);
    for (double v : b) out << '\t' << detail::fmt6(v);
    out << '\t' << detail::fmt6(rl);
    for (double v : extra) out << '\t' << detail::fmt6(v);
    out << '\n';
  };
  for (const auto& r : rep.rows) line(r.qid, r.em, r.recall, r.f1, r.bleu, r.rouge_l, r.extra);
  line("ALL", rep.em, rep.recall, rep.f1,
       {rep.bleu.at(1), rep.bleu.at(2), rep.bleu.at(3), rep.bleu.at(4)}, rep.rouge_l, rep.extra);
  return out.str();
}

}  // namespace genki
