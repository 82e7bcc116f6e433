#pragma once

// HTTP/JSON clients that let external services stand behind the scorer,
// reward, judge and embedder interfaces.
//
//   POST /score    {context, target}                          -> {logprob}
//   POST /generate {prompt, max_tokens}                       -> {text}
//   POST /judge    {question, answer_1, answer_2, format, prompt?} -> {choice, rationale?}
//   POST /reward   {answer, format, question}                 -> {score}
//   POST /embed    {text, role}                               -> {vector}
//
// An end-of-sequence target is sent as the literal text "</s>".

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "genki/ensemble.hpp"
#include "genki/error.hpp"
#include "genki/lm.hpp"
#include "genki/retriever.hpp"
#include "genki/reward.hpp"
#include "httplib.h"
#include "json.hpp"

namespace genki {

inline constexpr const char* kTokenEnv = "GENKI_API_TOKEN";

struct EndpointConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  int timeout_ms = 10000;
  int retries = 2;
  std::size_t max_in_flight = 4;
  std::optional<std::string> auth_token;

  void validate() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    if (timeout_ms < 1) throw ConfigError("endpoint timeout_ms must be >= 1");
    if (retries < 0) throw ConfigError("endpoint retries must be >= 0");
    if (max_in_flight < 1) throw ConfigError("endpoint max_in_flight must be >= 1");
  }

  /// Fills auth_token from GENKI_API_TOKEN when it is set.
  EndpointConfig& token_from_env() {
    if (const char* t = std::getenv(kTokenEnv); t && *t) auth_token = t;
    return *this;
  }
};

/// Reads base_url/timeout_ms/retries/max_in_flight; a token in the file is
/// refused, it only comes from the environment.
inline EndpointConfig endpoint_from_json(const nlohmann::json& j) {
  if (j.contains("auth_token") || j.contains("token"))
    throw ConfigError("endpoint secrets must come from " + std::string(kTokenEnv) +
                      ", not the config file");
  EndpointConfig c;
  try {
    c.base_url = j.at("base_url").get<std::string>();
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retries = j.value("retries", c.retries);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad endpoint config: ") + e.what());
  }
  c.token_from_env();
  c.validate();
  return c;
}

class ClientError : public ModelError {
 public:
  using ModelError::ModelError;
};

class TransportError : public ClientError {
 public:
  using ClientError::ClientError;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

class HttpStatusError : public ClientError {
 public:
  HttpStatusError(const std::string& what, int status) : ClientError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Well-formed HTTP exchange whose body breaks the wire schema.
class ProtocolError : public ClientError {
 public:
  using ClientError::ClientError;
};

/// POSTs JSON with retries and a cap on concurrent requests. Copies share the
/// cap and the retry counter.
class HttpJsonClient {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit HttpJsonClient(EndpointConfig cfg, Logger log = default_logger())
      : cfg_(std::move(cfg)), log_(std::move(log)) {
    cfg_.validate();
    shared_ = std::make_shared<Shared>(static_cast<std::ptrdiff_t>(cfg_.max_in_flight));
  }

  static Logger default_logger() {
    return [](const std::string& m) { std::clog << "genki: " << m << '\n'; };
  }

  const EndpointConfig& config() const { return cfg_; }

  /// Retries performed over the client's lifetime.
  std::size_t retry_count() const { return shared_->retries.load(); }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    std::string last;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) {
        ++shared_->retries;
        if (log_) log_("retry " + std::to_string(attempt) + "/" + std::to_string(cfg_.retries) +
                       " for " + path + " after: " + last);
      }
      try {
        return post_once(path, body);
      } catch (const TransportError& e) {
        last = e.what();
        if (attempt == cfg_.retries) throw;
      } catch (const HttpStatusError& e) {
        last = e.what();
        if (e.status() < 500 || attempt == cfg_.retries) throw;
      }
    }
    throw TransportError(path + ": no attempt made");
  }

 private:
  struct Shared {
    explicit Shared(std::ptrdiff_t n) : slots(n) {}
    std::counting_semaphore<1024> slots;
    std::atomic<std::size_t> retries{0};
  };

  nlohmann::json post_once(const std::string& path, const nlohmann::json& body) const {
    shared_->slots.acquire();
    struct Release {
      Shared* s;
      ~Release() { s->slots.release(); }
    } release{shared_.get()};

    httplib::Client cli(cfg_.base_url);
    const auto sec = cfg_.timeout_ms / 1000, usec = (cfg_.timeout_ms % 1000) * 1000;
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    httplib::Headers headers;
    if (cfg_.auth_token) headers.emplace("Authorization", "Bearer " + *cfg_.auth_token);

    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const std::string what = cfg_.base_url + path + ": " + httplib::to_string(err);
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
        throw TimeoutError(what + " (timeout " + std::to_string(cfg_.timeout_ms) + " ms)");
      throw TransportError(what);
    }
    if (res->status < 200 || res->status >= 300)
      throw HttpStatusError(cfg_.base_url + path + ": HTTP " + std::to_string(res->status),
                            res->status);
    try {
      auto j = nlohmann::json::parse(res->body);
      if (!j.is_object()) throw ProtocolError(path + ": response is not a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(path + ": malformed JSON response: " + e.what());
    }
  }

  EndpointConfig cfg_;
  Logger log_;
  std::shared_ptr<Shared> shared_;
};

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ProtocolError(path + ": response lacks '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(path + ": response field '" + key + "' has the wrong type");
  }
}

inline std::string seq_text(const TokenSeq& s, const Vocabulary* vocab) {
  if (!s.text.empty() || !vocab) return s.text;
  std::vector<std::string> toks;
  for (auto id : s.tokens) toks.push_back(vocab->word(id));
  return detokenize(toks);
}

}  // namespace detail

/// LmScorer over /score and /generate. With a vocabulary, generated text is
/// also encoded to ids and id-only sequences are sent as text.
class RemoteScorer final : public LmScorer {
 public:
  explicit RemoteScorer(HttpJsonClient client, const Vocabulary* vocab = nullptr)
      : client_(std::move(client)), vocab_(vocab) {}

  double logprob_cond(const TokenSeq& context, const TokenSeq& target) const override {
    const auto j = client_.post("/score", {{"context", detail::seq_text(context, vocab_)},
                                           {"target", detail::seq_text(target, vocab_)}});
    const auto lp = detail::field<double>(j, "logprob", "/score");
    if (!std::isfinite(lp)) throw ProtocolError("/score: non-finite logprob");
    if (lp > 0) throw ProtocolError("/score: positive logprob " + std::to_string(lp));
    return lp;
  }

  TokenSeq generate(const TokenSeq& prompt, std::size_t max_tokens) const override {
    const auto j = client_.post(
        "/generate", {{"prompt", detail::seq_text(prompt, vocab_)}, {"max_tokens", max_tokens}});
    TokenSeq out;
    out.text = detail::field<std::string>(j, "text", "/generate");
    if (vocab_) out.tokens = vocab_->encode(out.text).tokens;
    return out;
  }

  const HttpJsonClient& client() const { return client_; }

 private:
  HttpJsonClient client_;
  const Vocabulary* vocab_;
};

struct JudgeRequest {
  std::string question, answer_1, answer_2, format;
  std::optional<std::string> prompt;
};

struct JudgeResponse {
  int choice = 1;
  std::optional<std::string> rationale;
};

inline nlohmann::json to_json(const JudgeRequest& r) {
  nlohmann::json j{{"question", r.question},
                   {"answer_1", r.answer_1},
                   {"answer_2", r.answer_2},
                   {"format", r.format}};
  if (r.prompt) j["prompt"] = *r.prompt;
  return j;
}

inline JudgeResponse judge_response_from_json(const nlohmann::json& j) {
  JudgeResponse r;
  r.choice = detail::field<int>(j, "choice", "/judge");
  if (r.choice != 1 && r.choice != 2)
    throw ProtocolError("/judge: choice must be 1 or 2, got " + std::to_string(r.choice));
  if (j.contains("rationale") && !j["rationale"].is_null())
    r.rationale = detail::field<std::string>(j, "rationale", "/judge");
  return r;
}

/// ExternalJudge over /judge. A non-empty `prompt_template` is rendered with
/// {question}, {answer_1}, {answer_2} and {format} and sent along.
class RemoteJudge final : public ExternalJudge {
 public:
  explicit RemoteJudge(HttpJsonClient client, std::string prompt_template = {})
      : client_(std::move(client)), template_(std::move(prompt_template)) {}

  JudgeResponse ask(const JudgeRequest& req) const {
    return judge_response_from_json(client_.post("/judge", to_json(req)));
  }

  Choice choose(std::string_view question, std::string_view answer_1, std::string_view answer_2,
                const FormatSpec& format) const override {
    JudgeRequest req{std::string(question), std::string(answer_1), std::string(answer_2),
                     format.description, std::nullopt};
    if (!template_.empty()) req.prompt = render(req);
    return ask(req).choice == 2 ? Choice::Second : Choice::First;
  }

 private:
  std::string render(const JudgeRequest& r) const {
    std::string out;
    const std::pair<std::string, const std::string*> slots[] = {{"{question}", &r.question},
                                                              {"{answer_1}", &r.answer_1},
                                                              {"{answer_2}", &r.answer_2},
                                                              {"{format}", &r.format}};
    for (std::size_t i = 0; i < template_.size();) {
      bool hit = false;
      for (const auto& [slot, value] : slots)
        if (template_.compare(i, slot.size(), slot) == 0) {
          out += *value;
          i += slot.size();
          hit = true;
          break;
        }
      if (!hit) out.push_back(template_[i++]);
    }
    return out;
  }

  HttpJsonClient client_;
  std::string template_;
};

class RemoteRewardModel final : public RewardModel {
 public:
  explicit RemoteRewardModel(HttpJsonClient client) : client_(std::move(client)) {}

  double score(std::string_view answer, const FormatSpec& format,
               std::string_view question = {}) const override {
    const auto j = client_.post("/reward", {{"answer", std::string(answer)},
                                            {"format", format.description},
                                            {"kind", to_string(format.kind)},
                                            {"question", std::string(question)}});
    const auto s = detail::field<double>(j, "score", "/reward");
    if (!std::isfinite(s)) throw ProtocolError("/reward: non-finite score");
    return s;
  }

 private:
  HttpJsonClient client_;
};

class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(HttpJsonClient client, std::size_t dim) : client_(std::move(client)), dim_(dim) {
    if (dim_ < 1) throw InvalidArgument("RemoteEmbedder: dim must be >= 1");
  }

  std::size_t dim() const override { return dim_; }
  Embedding embed_question(std::string_view text) const override { return embed(text, "question"); }
  Embedding embed_passage(std::string_view text) const override { return embed(text, "passage"); }

 private:
  Embedding embed(std::string_view text, const char* role) const {
    const auto j = client_.post("/embed", {{"text", std::string(text)}, {"role", role}});
    Embedding e;
    e.values = detail::field<std::vector<float>>(j, "vector", "/embed");
    if (e.values.size() != dim_)
      throw ProtocolError("/embed: expected " + std::to_string(dim_) + " values, got " +
                          std::to_string(e.values.size()));
    bool any = false;
    for (float v : e.values) {
      if (!std::isfinite(v)) throw ProtocolError("/embed: non-finite value");
      any = any || v != 0.0f;
    }
    e.degenerate = !any;
    return e;
  }

  HttpJsonClient client_;
  std::size_t dim_;
};

}  // namespace genki
