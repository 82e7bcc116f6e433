// genki: command-line driver for every pipeline stage. Stages talk to each
// other through files in the output directory (--out).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genki/genki.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kModel = 4 };

const char* const kRoles[] = {"full", "retrieved", "postp", "consistency", "reward", "judge"};

struct Paths {
  std::string corpus, qa, train_qa, index, out = "genki-out";
};

struct CliConfig {
  Paths paths;
  genki::PipelineConfig pipeline;
  std::map<std::string, std::string> backends;  // role -> toy | remote
  json endpoints = json::object();              // role or "default" -> endpoint object
  std::size_t buckets = 10;
};

// Command-line values; an option only overrides the config when given.
struct Flags {
  std::string config, out, corpus, qa, train_qa, index, hyp, runs, question, backend, field;
  std::size_t k = 0, jobs = 0, max_output_tokens = 0, buckets = 0, embed_dim = 0;
  std::size_t facts = 0, distractors = 0, steps = 0;
  double lambda1 = 0, lambda2 = 0;
  std::uint64_t seed = 0;
  std::multimap<std::string, CLI::Option*> given;  // one entry per subcommand

  bool has(const std::string& name) const {
    auto [lo, hi] = given.equal_range(name);
    for (auto it = lo; it != hi; ++it)
      if (it->second->count() > 0) return true;
    return false;
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw genki::DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << data)) throw genki::DataError("cannot write " + p.string());
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw genki::FormatError(p.string() + ": malformed JSON: " + e.what());
  }
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

CliConfig load_config(const Flags& f) {
  CliConfig c;
  for (const char* r : kRoles) c.backends[r] = "toy";
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw genki::ConfigError("config file not found: " + f.config);
    json j;
    try {
      j = json::parse(read_file(f.config));
    } catch (const json::parse_error& e) {
      throw genki::ConfigError(f.config + ": malformed JSON: " + e.what());
    }
    const fs::path base = fs::path(f.config).parent_path();
    try {
      for (const auto& [key, _] : j.items())
        if (key != "paths" && key != "pipeline" && key != "backends" && key != "endpoints" &&
            key != "analysis")
          throw genki::ConfigError(f.config + ": unknown key '" + key + "'");
      if (j.contains("paths")) {
        const auto& p = j["paths"];
        c.paths.corpus = resolve(p.value("corpus", ""), base);
        c.paths.qa = resolve(p.value("qa", ""), base);
        c.paths.train_qa = resolve(p.value("train_qa", ""), base);
        c.paths.index = resolve(p.value("index", ""), base);
        if (p.contains("out")) c.paths.out = resolve(p["out"].get<std::string>(), base);
      }
      if (j.contains("pipeline")) c.pipeline = genki::pipeline_config_from_json(j["pipeline"]);
      if (j.contains("backends"))
        for (const auto& [role, v] : j["backends"].items()) {
          if (!c.backends.contains(role))
            throw genki::ConfigError(f.config + ": unknown backend role '" + role + "'");
          c.backends[role] = v.get<std::string>();
        }
      if (j.contains("endpoints")) {
        c.endpoints = j["endpoints"];
        for (const auto& [role, e] : c.endpoints.items()) {
          if (role != "default" && !c.backends.contains(role))
            throw genki::ConfigError(f.config + ": unknown endpoint role '" + role + "'");
          genki::endpoint_from_json(e);
        }
      }
      if (j.contains("analysis")) c.buckets = j["analysis"].value("buckets", c.buckets);
    } catch (const json::exception& e) {
      throw genki::ConfigError(f.config + ": " + e.what());
    }
  }
  if (f.has("--out")) c.paths.out = f.out;
  if (f.has("--corpus")) c.paths.corpus = f.corpus;
  if (f.has("--qa")) c.paths.qa = f.qa;
  if (f.has("--train-qa")) c.paths.train_qa = f.train_qa;
  if (f.has("--index")) c.paths.index = f.index;
  auto& p = c.pipeline;
  if (f.has("--k")) p.k = f.k;
  if (f.has("--lambda1")) p.weights.lambda1 = f.lambda1;
  if (f.has("--lambda2")) p.weights.lambda2 = f.lambda2;
  if (f.has("--seed")) p.seed = f.seed;
  if (f.has("--jobs")) p.jobs = f.jobs;
  if (f.has("--max-output-tokens")) p.max_output_tokens = f.max_output_tokens;
  if (f.has("--embed-dim")) p.embedder.dim = f.embed_dim;
  if (f.has("--steps")) p.training.lm_steps = f.steps;
  if (f.has("--buckets")) c.buckets = f.buckets;
  if (f.has("--backend"))
    for (auto& [_, b] : c.backends) b = f.backend;
  for (const auto& [role, b] : c.backends)
    if (b != "toy" && b != "remote")
      throw genki::ConfigError("backend for '" + role + "' must be toy or remote, got '" + b + "'");
  if (c.buckets < 1) throw genki::ConfigError("buckets must be >= 1");
  p.validate();
  return c;
}

fs::path out_path(const CliConfig& c, const std::string& name) { return fs::path(c.paths.out) / name; }

// An input either named explicitly or left behind by an earlier command.
struct Input {
  std::string path;
  bool raw = false;  // user-supplied file rather than a stage artifact
};

Input locate(const std::string& explicit_path, const fs::path& artifact, const std::string& what,
             const std::string& producer) {
  if (!explicit_path.empty()) {
    if (!fs::exists(explicit_path)) throw genki::DataError(what + " not found: " + explicit_path);
    return {explicit_path, true};
  }
  if (!fs::exists(artifact))
    throw genki::DataError("missing " + what + " '" + artifact.string() + "'; run `" + producer +
                           "` first or pass the file explicitly");
  return {artifact.string(), false};
}

Input corpus_input(const CliConfig& c) {
  return locate(c.paths.corpus, out_path(c, "passages.jsonl"), "passage corpus",
                "genki ingest --corpus FILE");
}

Input qa_input(const CliConfig& c) {
  return locate(c.paths.qa, out_path(c, "qa.jsonl"), "question file", "genki ingest --qa FILE");
}

Input train_qa_input(const CliConfig& c) {
  return locate(c.paths.train_qa, out_path(c, "train_qa.jsonl"), "training question file",
                "genki ingest --train-qa FILE");
}

Input index_input(const CliConfig& c) {
  return locate(c.paths.index, out_path(c, "index.gkix"), "index", "genki index");
}

std::string models_artifact(const CliConfig& c, const std::string& name) {
  const auto p = out_path(c, "models") / name;
  if (!fs::exists(p))
    throw genki::DataError("missing model checkpoint '" + p.string() + "'; run `genki train` first");
  return p.string();
}

// Hash embedder matching the one that built the index.
genki::HashEmbedder embedder_for(const genki::DenseIndex& index, const std::string& index_path,
                                 const CliConfig& c) {
  std::uint64_t seed = c.pipeline.embedder.seed;
  const fs::path meta = index_path + ".json";
  if (fs::exists(meta)) {
    const auto j = read_json(meta);
    seed = j.value("seed", seed);
    if (j.value("dim", index.dim()) != index.dim())
      throw genki::FormatError(meta.string() + ": dim disagrees with " + index_path);
  }
  return genki::HashEmbedder(index.dim(), seed);
}

genki::EndpointConfig endpoint_for(const CliConfig& c, const std::string& role) {
  const json* j = nullptr;
  if (c.endpoints.contains(role)) j = &c.endpoints[role];
  else if (c.endpoints.contains("default")) j = &c.endpoints["default"];
  if (!j)
    throw genki::ConfigError("backend '" + role +
                             "' is remote but the config has no endpoints." + role +
                             " or endpoints.default");
  return genki::endpoint_from_json(*j);
}

// ---------------------------------------------------------------------------

int cmd_synth(const CliConfig& c, const Flags& f) {
  genki::SyntheticSpec spec;
  if (f.has("--facts")) spec.facts = f.facts;
  if (f.has("--distractors")) spec.distractors = f.distractors;
  if (f.has("--seed")) spec.seed = f.seed;
  const auto corpus = genki::make_synthetic(spec);
  fs::create_directories(c.paths.out);
  genki::write_jsonl(out_path(c, "synthetic_corpus.jsonl").string(), corpus.passages);
  genki::write_jsonl(out_path(c, "synthetic_train_qa.jsonl").string(), corpus.train_qa);
  genki::write_jsonl(out_path(c, "synthetic_test_qa.jsonl").string(), corpus.test_qa);
  std::cout << corpus.passages.size() << " passages, " << corpus.train_qa.size() << " train and "
            << corpus.test_qa.size() << " test questions in " << c.paths.out << '\n';
  return kOk;
}

int cmd_ingest(const CliConfig& c) {
  if (c.paths.corpus.empty()) throw genki::ConfigError("ingest needs --corpus");
  for (const auto* p : {&c.paths.corpus, &c.paths.qa, &c.paths.train_qa})
    if (!p->empty() && !fs::exists(*p)) throw genki::DataError("input not found: " + *p);
  const auto passages = genki::ingest_passages(c.paths.corpus);
  const auto stats = genki::build_stats(passages);
  fs::create_directories(c.paths.out);
  genki::write_jsonl(out_path(c, "passages.jsonl").string(), passages);
  write_file(out_path(c, "stats.json"), genki::to_json(stats).dump(1) + '\n');
  std::cout << passages.size() << " passages, " << stats.sentence_count << " sentences, "
            << stats.vocab_size() << " distinct words\n";
  auto copy_qa = [&](const std::string& src, const char* name) {
    if (src.empty()) return;
    const auto qa = genki::ingest_qa(src);
    genki::write_jsonl(out_path(c, name).string(), qa);
    std::cout << qa.size() << " questions -> " << out_path(c, name).string() << '\n';
  };
  copy_qa(c.paths.qa, "qa.jsonl");
  copy_qa(c.paths.train_qa, "train_qa.jsonl");
  return kOk;
}

int cmd_index(const CliConfig& c) {
  const auto corpus = corpus_input(c);
  const auto passages = genki::ingest_passages(corpus.path);
  if (passages.empty()) throw genki::DataError("no passages in " + corpus.path);
  const genki::HashEmbedder emb(c.pipeline.embedder.dim, c.pipeline.embedder.seed);
  const auto index = genki::build_index(passages, emb);
  const std::string path = c.paths.index.empty() ? out_path(c, "index.gkix").string() : c.paths.index;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  genki::save_index(index, path);
  write_file(path + ".json", json{{"embedder", "hash"},
                                  {"dim", index.dim()},
                                  {"seed", c.pipeline.embedder.seed},
                                  {"count", index.size()}}
                                 .dump(1) + '\n');
  std::cout << index.size() << " passages x " << index.dim() << " dims -> " << path << '\n';
  return kOk;
}

json hits_json(const std::vector<genki::RetrievalResult>& hits) {
  json arr = json::array();
  for (const auto& h : hits)
    arr.push_back({{"rank", h.rank}, {"passage_id", h.passage_id}, {"score", h.score}});
  return arr;
}

int cmd_retrieve(const CliConfig& c, const Flags& f) {
  const auto idx = index_input(c);
  std::optional<Input> qa;
  if (f.question.empty()) qa = qa_input(c);
  const auto index = genki::load_index(idx.path);
  const auto emb = embedder_for(index, idx.path, c);
  if (!f.question.empty()) {
    for (const auto& h : genki::retrieve(index, emb, f.question, c.pipeline.k))
      std::cout << h.rank << '\t' << h.passage_id << '\t' << h.score << '\n';
    return kOk;
  }
  std::string out;
  for (const auto& q : genki::ingest_qa(qa->path))
    out += json{{"qid", q.id}, {"results", hits_json(genki::retrieve(index, emb, q.question,
                                                                       c.pipeline.k))}}
               .dump() +
           '\n';
  write_file(out_path(c, "retrieval.jsonl"), out);
  std::cout << "retrieval results -> " << out_path(c, "retrieval.jsonl").string() << '\n';
  return kOk;
}

int cmd_train(const CliConfig& c) {
  const auto corpus = corpus_input(c);
  const auto train_in = train_qa_input(c);
  const auto idx = index_input(c);
  std::optional<Input> extra;
  if (!c.paths.qa.empty() || fs::exists(out_path(c, "qa.jsonl"))) extra = qa_input(c);

  const auto passages = genki::ingest_passages(corpus.path);
  const auto train_qa = genki::ingest_qa(train_in.path);
  if (train_qa.empty()) throw genki::DataError("no training questions in " + train_in.path);
  std::vector<genki::QaPair> retrieval_qa;
  if (extra) retrieval_qa = genki::ingest_qa(extra->path);
  const auto index = genki::load_index(idx.path);
  const auto emb = embedder_for(index, idx.path, c);
  const auto lookup = genki::make_lookup(passages);
  const genki::RetrievalContext rc{&index, &emb, &lookup};

  std::vector<genki::QaPair> all = train_qa;
  all.insert(all.end(), retrieval_qa.begin(), retrieval_qa.end());
  const auto vocab = genki::pipeline_vocabulary(passages, all, c.pipeline);
  const auto models = genki::train_pipeline(passages, train_qa, retrieval_qa, rc, vocab, c.pipeline);

  const auto dir = out_path(c, "models");
  fs::create_directories(dir);
  genki::save_checkpoint(models.full, (dir / "full.json").string());
  genki::save_checkpoint(models.retrieved, (dir / "retrieved.json").string());
  genki::save_checkpoint(models.postp, (dir / "postp.json").string());
  genki::save_reward(models.reward, (dir / "reward.json").string());
  write_file(dir / "manifest.json", json{{"pipeline", genki::to_json(c.pipeline)},
                                         {"vocab_size", vocab.size()},
                                         {"retrieved_passage_ids", models.retrieved_passage_ids}}
                                        .dump(1) + '\n');
  std::cout << "vocabulary " << vocab.size() << ", " << models.retrieved_passage_ids.size()
            << " retrieved passages; checkpoints -> " << dir.string() << '\n';
  return kOk;
}

int cmd_answer(const CliConfig& c) {
  const auto corpus = corpus_input(c);
  const auto qa_in = qa_input(c);
  const auto idx = index_input(c);
  const auto& b = c.backends;
  auto toy = [&](const char* role) { return b.at(role) == "toy"; };
  const bool need_toy_lm = toy("full") || toy("retrieved") || toy("postp") || toy("consistency");
  std::map<std::string, std::string> ckpt;
  for (const char* name : {"full", "retrieved", "postp"})
    if (toy(name) || (std::string(name) == "full" && toy("consistency")))
      ckpt[name] = models_artifact(c, std::string(name) + ".json");
  if (toy("reward")) ckpt["reward"] = models_artifact(c, "reward.json");

  const auto passages = genki::ingest_passages(corpus.path);
  const auto questions = genki::ingest_qa(qa_in.path);
  const auto index = genki::load_index(idx.path);
  const auto emb = embedder_for(index, idx.path, c);
  const auto lookup = genki::make_lookup(passages);
  const auto stats = genki::build_stats(passages);

  std::map<std::string, genki::ToyLm> lms;
  for (const auto& [name, path] : ckpt)
    if (name != "reward") lms.emplace(name, genki::load_checkpoint(path));
  genki::Vocabulary vocab = need_toy_lm ? lms.begin()->second.vocab()
                                        : genki::pipeline_vocabulary(passages, questions, c.pipeline);

  std::map<std::string, std::unique_ptr<genki::RemoteScorer>> remote;
  auto scorer = [&](const char* role, const char* toy_name) -> const genki::LmScorer* {
    if (toy(role)) return &lms.at(toy_name);
    auto& slot = remote[role];
    if (!slot)
      slot = std::make_unique<genki::RemoteScorer>(genki::HttpJsonClient(endpoint_for(c, role)),
                                                   &vocab);
    return slot.get();
  };

  std::optional<genki::LinearRewardModel> toy_rm;
  std::optional<genki::RemoteRewardModel> remote_rm;
  const genki::RewardModel* rm = nullptr;
  if (toy("reward")) rm = &toy_rm.emplace(genki::load_reward(ckpt.at("reward")));
  else rm = &remote_rm.emplace(genki::HttpJsonClient(endpoint_for(c, "reward")));

  const genki::StubJudge stub;
  std::optional<genki::RemoteJudge> remote_judge;
  const genki::ExternalJudge* judge = &stub;
  if (!toy("judge"))
    judge = &remote_judge.emplace(genki::HttpJsonClient(endpoint_for(c, "judge")),
                                  c.pipeline.tmpl("IV"));

  genki::PipelineModels m;
  m.full = scorer("full", "full");
  m.retrieved = scorer("retrieved", "retrieved");
  m.postp = scorer("postp", "postp");
  m.consistency = scorer("consistency", "full");
  m.reward = rm;
  m.judge = judge;
  m.retrieval = {&index, &emb, &lookup};
  m.stats = &stats;
  m.vocab = &vocab;

  const auto runs = genki::run_pipeline(questions, m, c.pipeline);
  write_file(out_path(c, "runs.jsonl"), genki::runs_jsonl(runs));
  write_file(out_path(c, "audit.jsonl"), genki::audit_jsonl(runs));
  std::size_t failed = 0;
  for (const auto& r : runs)
    if (!r.ok()) {
      ++failed;
      std::cerr << "genki: question " << r.qid << " failed: " << *r.error << '\n';
    }
  std::cout << runs.size() - failed << "/" << runs.size() << " questions answered -> "
            << out_path(c, "runs.jsonl").string() << '\n';
  return !runs.empty() && failed == runs.size() ? kModel : kOk;
}

// qid -> answer from pipeline runs, a {qid|id, answer} file or a QA file.
std::map<std::string, std::string> load_hypotheses(const std::string& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  if (!in) throw genki::DataError("cannot read " + path);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (genki::detail::blank(line)) continue;
    const std::string where = path + ":" + std::to_string(n);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw genki::FormatError(where + ": malformed JSON");
    }
    if (!j.is_object()) throw genki::FormatError(where + ": expected an object");
    std::string id;
    if (j.contains("qid") && j["qid"].is_string()) id = j["qid"];
    else if (j.contains("id") && j["id"].is_string()) id = j["id"];
    else throw genki::FormatError(where + ": record has no qid");
    std::string ans;
    if (j.contains("final_answer") && j["final_answer"].is_string()) ans = j["final_answer"];
    else if (j.contains("answer") && j["answer"].is_string()) ans = j["answer"];
    else if (j.contains("answers") && j["answers"].is_array() && !j["answers"].empty() &&
             j["answers"][0].is_string())
      ans = j["answers"][0];
    else throw genki::FormatError(where + ": record has no answer");
    if (!out.emplace(id, ans).second) throw genki::DataError(where + ": duplicate qid '" + id + "'");
  }
  return out;
}

int cmd_eval(const CliConfig& c, const Flags& f) {
  const auto qa_in = qa_input(c);
  const auto hyp_in = locate(f.hyp, out_path(c, "runs.jsonl"), "answers", "genki answer");
  const auto gold = genki::ingest_qa(qa_in.path);
  const auto hyps = load_hypotheses(hyp_in.path);
  const auto rep = genki::evaluate(gold, hyps, {}, c.pipeline.jobs);
  const auto tsv = genki::report_tsv(rep);
  write_file(out_path(c, "report.tsv"), tsv);
  std::cout << tsv.substr(0, tsv.find('\n') + 1);
  std::cout << tsv.substr(tsv.rfind("\nALL\t") + 1);
  return kOk;
}

int cmd_analyze(const CliConfig& c, const Flags& f) {
  const auto qa_in = qa_input(c);
  const auto corpus = corpus_input(c);
  const auto runs_in = locate(f.runs, out_path(c, "runs.jsonl"), "pipeline runs", "genki answer");
  const std::string field = f.field.empty() ? "raw_retrieved" : f.field;
  const auto gold = genki::ingest_qa(qa_in.path);
  const auto lookup = genki::make_lookup(genki::ingest_passages(corpus.path));

  std::map<std::string, const genki::QaPair*> by_id;
  for (const auto& q : gold) by_id[q.id] = &q;
  std::vector<genki::Point> pts;
  std::ifstream in(runs_in.path);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (genki::detail::blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw genki::FormatError(runs_in.path + ":" + std::to_string(n) + ": malformed JSON");
    }
    auto it = by_id.find(j.value("qid", ""));
    if (it == by_id.end() || !j.contains(field) || !j[field].is_string()) continue;
    std::vector<std::string> texts;
    for (const auto& id : j.value("retrieved_ids", std::vector<std::string>{}))
      if (auto p = lookup.find(id); p != lookup.end()) texts.push_back(p->second);
    double quality = 0;
    for (const auto& a : it->second->answers)
      quality = std::max(quality, genki::retrieval_quality(a, texts));
    pts.push_back({quality, genki::text_recall(it->second->answers, j[field].get<std::string>())});
  }
  if (pts.empty()) throw genki::DataError(runs_in.path + ": no runs match the questions");

  // equal-width quality buckets over [0, 1]
  std::vector<double> sum(c.buckets, 0.0);
  std::vector<std::size_t> count(c.buckets, 0);
  for (const auto& p : pts) {
    const auto b = std::min(c.buckets - 1, static_cast<std::size_t>(p.x * static_cast<double>(c.buckets)));
    sum[b] += p.y;
    ++count[b];
  }
  std::ostringstream csv;
  csv << "bucket,quality,mean_recall,count\n";
  std::vector<genki::Point> bucket_pts;
  for (std::size_t b = 0; b < c.buckets; ++b) {
    if (count[b] == 0) continue;
    const double x = (static_cast<double>(b) + 0.5) / static_cast<double>(c.buckets);
    const double y = sum[b] / static_cast<double>(count[b]);
    bucket_pts.push_back({x, y});
    csv << b << ',' << genki::detail::fmt6(x) << ',' << genki::detail::fmt6(y) << ',' << count[b]
        << '\n';
  }
  write_file(out_path(c, "analysis.csv"), csv.str());

  auto line_json = [](const genki::LineFit& l) {
    return json{{"slope", l.slope}, {"intercept", l.intercept}, {"r2", l.r2}, {"n", l.n}};
  };
  json fit{{"points", pts.size()}, {"buckets", bucket_pts.size()}, {"field", field}};
  for (const auto* src : {&bucket_pts, &pts}) {
    try {
      const auto r = genki::two_segment_fit(*src);
      fit["fit_on"] = src == &pts ? "questions" : "buckets";
      fit["breakpoint"] = r.breakpoint;
      fit["segment1"] = line_json(r.segment1);
      fit["segment2"] = line_json(r.segment2);
      fit["single"] = line_json(r.single);
      break;
    } catch (const genki::InvalidArgument& e) {
      fit["error"] = e.what();
    }
  }
  if (fit.contains("breakpoint")) fit.erase("error");
  else std::cerr << "genki: no two-segment fit: " << fit["error"].get<std::string>() << '\n';
  write_file(out_path(c, "fit.json"), fit.dump(1) + '\n');
  std::cout << pts.size() << " questions in " << bucket_pts.size() << " buckets -> "
            << out_path(c, "analysis.csv").string() << ", " << out_path(c, "fit.json").string()
            << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

CLI::Option* opt(CLI::App* app, Flags& f, const std::string& name, auto& var,
                 const std::string& help) {
  auto* o = app->add_option(name, var, help);
  f.given.emplace(name, o);
  return o;
}

int run(int argc, char** argv) {
  CLI::App app{"genki: retrieval-augmented QA with two knowledge paths and answer selection"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    opt(s, f, "--out", f.out, "Artifact directory (default genki-out)");
  };
  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    common(s);
    return s;
  };

  auto* synth = sub("synth", "Write a seeded synthetic corpus and question sets");
  opt(synth, f, "--facts", f.facts, "Fact passages (one question each)");
  opt(synth, f, "--distractors", f.distractors, "Distractor passages");
  opt(synth, f, "--seed", f.seed, "Generator seed");

  auto* ingest = sub("ingest", "Validate inputs, write passages, questions and corpus statistics");
  opt(ingest, f, "--corpus", f.corpus, "Passage JSONL");
  opt(ingest, f, "--qa", f.qa, "Question JSONL to answer");
  opt(ingest, f, "--train-qa", f.train_qa, "Training question JSONL");

  auto* index = sub("index", "Embed passages and write the dense index");
  opt(index, f, "--corpus", f.corpus, "Passage JSONL");
  opt(index, f, "--index", f.index, "Index file to write");
  opt(index, f, "--embed-dim", f.embed_dim, "Hash embedder dimension");

  auto* retrieve = sub("retrieve", "Top-k passages for a question or a question file");
  opt(retrieve, f, "--index", f.index, "Index file");
  opt(retrieve, f, "--qa", f.qa, "Question JSONL");
  opt(retrieve, f, "--k", f.k, "Passages per question");
  retrieve->add_option("--question", f.question, "Single question text");

  auto* train = sub("train", "Train the full, retrieved and post-processing models and the reward model");
  opt(train, f, "--corpus", f.corpus, "Passage JSONL");
  opt(train, f, "--train-qa", f.train_qa, "Training question JSONL");
  opt(train, f, "--qa", f.qa, "Questions whose retrieved passages join the retrieved set");
  opt(train, f, "--index", f.index, "Index file");
  opt(train, f, "--k", f.k, "Passages per question");
  opt(train, f, "--lambda1", f.lambda1, "Weight of the domain loss");
  opt(train, f, "--lambda2", f.lambda2, "Weight of the instruction loss");
  opt(train, f, "--seed", f.seed, "Model seed");
  opt(train, f, "--steps", f.steps, "Gradient steps per language model");
  opt(train, f, "--max-output-tokens", f.max_output_tokens, "Draft length cap");

  auto* answer = sub("answer", "Answer questions and write runs and the selection audit");
  opt(answer, f, "--corpus", f.corpus, "Passage JSONL");
  opt(answer, f, "--qa", f.qa, "Question JSONL");
  opt(answer, f, "--index", f.index, "Index file");
  opt(answer, f, "--k", f.k, "Passages per question");
  opt(answer, f, "--seed", f.seed, "Pipeline seed");
  opt(answer, f, "--jobs", f.jobs, "Questions answered concurrently");
  opt(answer, f, "--max-output-tokens", f.max_output_tokens, "Draft length cap");
  opt(answer, f, "--backend", f.backend, "Backend for every model role")
      ->check(CLI::IsMember({"toy", "remote"}));

  auto* eval = sub("eval", "Score answers against gold and write report.tsv");
  opt(eval, f, "--qa", f.qa, "Gold question JSONL");
  opt(eval, f, "--hyp", f.hyp, "Answers: runs.jsonl or {qid, answer} JSONL");
  opt(eval, f, "--jobs", f.jobs, "Rows scored concurrently");

  auto* analyze = sub("analyze", "Retrieval quality against recall, with a two-segment fit");
  opt(analyze, f, "--qa", f.qa, "Gold question JSONL");
  opt(analyze, f, "--corpus", f.corpus, "Passage JSONL");
  opt(analyze, f, "--runs", f.runs, "Pipeline runs JSONL");
  opt(analyze, f, "--buckets", f.buckets, "Quality buckets over [0, 1]");
  opt(analyze, f, "--field", f.field, "Run field holding the answer (default raw_retrieved)")
      ->check(CLI::IsMember({"raw_full", "raw_retrieved", "post_full", "post_retrieved",
                              "final_answer"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const auto cfg = load_config(f);
    if (synth->parsed()) return cmd_synth(cfg, f);
    if (ingest->parsed()) return cmd_ingest(cfg);
    if (index->parsed()) return cmd_index(cfg);
    if (retrieve->parsed()) return cmd_retrieve(cfg, f);
    if (train->parsed()) return cmd_train(cfg);
    if (answer->parsed()) return cmd_answer(cfg);
    if (eval->parsed()) return cmd_eval(cfg, f);
    if (analyze->parsed()) return cmd_analyze(cfg, f);
  } catch (const genki::ConfigError& e) {
    std::cerr << "genki: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const genki::InvalidArgument& e) {
    std::cerr << "genki: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const genki::DataError& e) {
    std::cerr << "genki: data error: " << e.what() << '\n';
    return kData;
  } catch (const genki::ModelError& e) {
    std::cerr << "genki: model error: " << e.what() << '\n';
    return kModel;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "genki: data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "genki: " << e.what() << '\n';
    return kUsage;
  }
}
