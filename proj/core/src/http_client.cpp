#include "vrloop/http_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>

#include "vrloop/errors.hpp"
#include "vrloop/serialize.hpp"

namespace vrloop {

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    host_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  HttpResponse post_json(const std::string& path, const std::string& body, const std::string& api_key,
                         double timeout_s) override {
    httplib::Client cli(host_);
    const auto secs = static_cast<time_t>(std::ceil(timeout_s));
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    if (!api_key.empty()) cli.set_bearer_token_auth(api_key);
    auto res = cli.Post(prefix_ + path, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }

 private:
  std::string host_;
  std::string prefix_;
};

double jitter() {
  thread_local std::mt19937_64 engine{std::random_device{}()};
  return std::uniform_real_distribution<double>(0.5, 1.0)(engine);
}

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

json messages_json(const Messages& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back(json{{"role", m.role}, {"content", m.content}});
  return arr;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::string upper_trim(std::string_view s) {
  std::string out;
  for (const char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

bool is_prefix_of(const std::string& piece, std::string_view word) {
  return piece.size() >= 2 && word.substr(0, piece.size()) == piece;
}

std::vector<TokenLogprob> alternatives_from(const json& top) {
  std::vector<TokenLogprob> alts;
  if (top.is_array()) {
    for (const auto& t : top) alts.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
  } else if (top.is_object()) {  // legacy completions: {token: logprob}
    for (const auto& [tok, lp] : top.items()) alts.push_back({tok, lp.get<double>()});
  }
  std::sort(alts.begin(), alts.end(), [](const TokenLogprob& a, const TokenLogprob& b) { return a.logprob > b.logprob; });
  return alts;
}

// Teacher distribution at a position whose forced token may be unlisted;
// an unlisted token gets the smaller of the tail and the least listed mass.
TokenDist forced_dist(int position, const std::string& forced, std::vector<TokenLogprob> alts) {
  auto dist = TokenDist::from_logprobs(position, forced, 0.0, std::move(alts));
  const auto it = std::find_if(dist.alternatives.begin(), dist.alternatives.end(),
                               [&](const TokenLogprob& t) { return t.token == forced; });
  if (it != dist.alternatives.end()) {
    dist.chosen_logprob = it->logprob;
  } else {
    double share = dist.tail_mass;
    for (const auto& a : dist.alternatives) share = std::min(share, std::exp(a.logprob));
    dist.chosen_logprob = std::log(std::max(share, 1e-12));
  }
  return dist;
}

}  // namespace

std::shared_ptr<HttpTransport> make_httplib_transport(const std::string& base_url) {
  return std::make_shared<HttplibTransport>(base_url);
}

ChatClient::ChatClient(EndpointConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      slots_(std::clamp(config_.max_in_flight, 1, 4096)) {
  config_.validate();
  if (!transport_) transport_ = make_httplib_transport(config_.base_url);
}

json ChatClient::post(const std::string& path, const json& body) {
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0 && !config_.backoff_ms.empty()) {
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), config_.backoff_ms.size() - 1);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(config_.backoff_ms[idx] * jitter()));
    }
    HttpResponse res;
    slots_.acquire();
    {
      const int now = ++active_;
      int peak = peak_.load();
      while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
      }
      ++sent_;
      try {
        res = transport_->post_json(path, payload, config_.api_key, config_.timeout_s);
      } catch (...) {
        --active_;
        slots_.release();
        throw;
      }
      --active_;
    }
    slots_.release();

    if (res.status >= 200 && res.status < 300) {
      try {
        return json::parse(res.body);
      } catch (const json::exception& e) {
        throw TransportError(path + ": unparseable response body: " + e.what());
      }
    }
    last_error = res.status == 0 ? "connection error: " + res.error
                                 : "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 500);
    if (!retryable(res.status)) throw TransportError(path + ": " + last_error);
  }
  throw TransportError(path + ": retries exhausted (" + std::to_string(config_.max_retries) + "): " + last_error);
}

json ChatClient::chat_body(const Messages& messages, std::optional<std::uint64_t> seed) const {
  json body{{"model", config_.model},
            {"messages", messages_json(messages)},
            {"temperature", config_.temperature},
            {"top_p", config_.top_p},
            {"max_tokens", config_.max_tokens}};
  if (seed) body["seed"] = wire_seed(*seed);
  return body;
}

std::int64_t wire_seed(std::uint64_t seed) { return static_cast<std::int64_t>(seed & 0x7fffffffULL); }

TokenUsage usage_from_response(const json& response, double wall_ms) {
  TokenUsage u;
  u.wall_ms = wall_ms;
  if (const auto it = response.find("usage"); it != response.end() && it->is_object()) {
    u.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
    u.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  return u;
}

std::string first_choice_text(const json& response) {
  try {
    const auto& choice = response.at("choices").at(0);
    if (const auto m = choice.find("message"); m != choice.end()) {
      const auto& c = m->at("content");
      return c.is_null() ? std::string{} : c.get<std::string>();
    }
    return choice.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed completion response: ") + e.what());
  }
}

HttpGenerator::HttpGenerator(std::shared_ptr<ChatClient> client, PromptSet prompts, ExtractOptions extract)
    : client_(std::move(client)), prompts_(std::move(prompts)), extract_(std::move(extract)) {}

std::string HttpGenerator::identity() const { return "http:" + client_->config().model; }

GeneratorReply HttpGenerator::generate_initial(const Problem& problem, const CallContext& ctx) {
  return call(render_prompt(prompts_, TemplateId::GeneratorInitial, {{"statement", problem.statement}}), ctx.round,
              ctx.seed);
}

GeneratorReply HttpGenerator::refine(const Problem& problem, const Attempt& prev, std::string_view feedback,
                                     const CallContext& ctx) {
  SlotMap slots{{"statement", problem.statement}, {"prior_solution", prev.text}};
  if (!feedback.empty()) slots.emplace("feedback", std::string(feedback));
  return call(render_prompt(prompts_, TemplateId::GeneratorRefine, slots), ctx.round, ctx.seed);
}

GeneratorReply HttpGenerator::call(Messages messages, int round, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto response = client_->post("/chat/completions", client_->chat_body(messages, seed));
  GeneratorReply reply;
  reply.attempt.round_index = round;
  reply.attempt.text = first_choice_text(response);
  reply.attempt.extracted_answer = extract_answer(reply.attempt.text, extract_);
  reply.usage = usage_from_response(response, elapsed_ms(start));
  reply.context = std::move(messages);
  return reply;
}

std::string_view to_string(ScoreSource source) {
  return source == ScoreSource::SelfReported ? "self_reported" : "verdict_probability";
}

ScoreSource parse_score_source(std::string_view name) {
  if (name == "self_reported") return ScoreSource::SelfReported;
  if (name == "verdict_probability") return ScoreSource::VerdictProbability;
  throw ConfigError("unknown score source '" + std::string(name) + "'");
}

std::optional<double> verdict_probability(const json& response) try {
  const auto content = response.at("choices").at(0).value("logprobs", json::object()).value("content", json::array());
  for (auto it = content.rbegin(); it != content.rend(); ++it) {
    const auto chosen = upper_trim(it->value("token", std::string{}));
    if (!is_prefix_of(chosen, "CORRECT") && !is_prefix_of(chosen, "INCORRECT")) continue;
    double pc = 0.0;
    double pi = 0.0;
    for (const auto& alt : alternatives_from(it->value("top_logprobs", json::array()))) {
      const auto t = upper_trim(alt.token);
      if (is_prefix_of(t, "INCORRECT")) {
        pi += std::exp(alt.logprob);
      } else if (is_prefix_of(t, "CORRECT")) {
        pc += std::exp(alt.logprob);
      }
    }
    if (pc + pi <= 0.0) return std::nullopt;
    return pc / (pc + pi);
  }
  return std::nullopt;
} catch (const json::exception&) {
  return std::nullopt;
}

HttpVerifier::HttpVerifier(std::shared_ptr<ChatClient> client, PromptSet prompts, ScoreSource score_source)
    : client_(std::move(client)), prompts_(std::move(prompts)), score_source_(score_source) {}

std::string HttpVerifier::identity() const { return "http:" + client_->config().model; }

VerifierReply HttpVerifier::verify(const Problem& problem, const Attempt& attempt, VerifyMode mode,
                                   const CallContext& ctx) {
  SlotMap slots{{"statement", problem.statement}, {"prior_solution", attempt.text}};
  const bool teacher = mode == VerifyMode::ReferenceConditioned;
  if (teacher) {
    if (problem.gold_answer.empty()) throw ConfigError("reference-conditioned verification needs a gold answer");
    slots.emplace("reference_solution", problem.gold_answer);
  }
  auto messages = render_prompt(prompts_, teacher ? TemplateId::VerifierTeacher : TemplateId::VerifierPlain, slots);
  auto body = client_->chat_body(messages, ctx.seed);
  if (score_source_ == ScoreSource::VerdictProbability) {
    body["logprobs"] = true;
    body["top_logprobs"] = client_->config().top_logprobs;
  }
  const auto start = std::chrono::steady_clock::now();
  const auto response = client_->post("/chat/completions", body);
  VerifierReply reply;
  reply.output = parse_verdict(first_choice_text(response));
  if (score_source_ == ScoreSource::VerdictProbability) reply.output.score = verdict_probability(response);
  reply.usage = usage_from_response(response, elapsed_ms(start));
  reply.context = std::move(messages);
  return reply;
}

std::string_view to_string(TeacherScoring mode) {
  return mode == TeacherScoring::Continuation ? "continuation" : "echo";
}

TeacherScoring parse_teacher_scoring(std::string_view name) {
  if (name == "continuation") return TeacherScoring::Continuation;
  if (name == "echo") return TeacherScoring::Echo;
  throw ConfigError("unknown teacher scoring mechanism '" + std::string(name) + "'");
}

std::vector<TokenDist> parse_chat_logprobs(const json& response) {
  const auto& choice = response.at("choices").at(0);
  const auto lp = choice.find("logprobs");
  if (lp == choice.end() || lp->is_null() || !lp->contains("content") || lp->at("content").is_null()) {
    throw CapabilityError("endpoint returned no token logprobs");
  }
  std::vector<TokenDist> out;
  int pos = 0;
  for (const auto& entry : lp->at("content")) {
    auto alts = alternatives_from(entry.value("top_logprobs", json::array()));
    out.push_back(TokenDist::from_logprobs(pos++, entry.at("token").get<std::string>(),
                                           entry.at("logprob").get<double>(), std::move(alts)));
  }
  return out;
}

HttpLogprobBackend::HttpLogprobBackend(std::shared_ptr<ChatClient> client, TeacherScoring scoring)
    : client_(std::move(client)), scoring_(scoring) {}

std::string HttpLogprobBackend::identity() const { return "http:" + client_->config().model; }

Completion HttpLogprobBackend::complete_with_logprobs(const Messages& messages, const SamplingParams& params) {
  json body{{"model", client_->config().model},
            {"messages", messages_json(messages)},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_tokens},
            {"logprobs", true},
            {"top_logprobs", params.top_logprobs},
            {"seed", wire_seed(params.seed)}};
  const auto start = std::chrono::steady_clock::now();
  const auto response = client_->post("/chat/completions", body);
  Completion c;
  c.text = first_choice_text(response);
  try {
    c.tokens = parse_chat_logprobs(response);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed logprobs: ") + e.what());
  }
  c.usage = usage_from_response(response, elapsed_ms(start));
  return c;
}

std::vector<TokenDist> HttpLogprobBackend::score_along(const Messages& messages,
                                                       std::span<const std::string> forced_tokens, int top_k) {
  try {
    return scoring_ == TeacherScoring::Continuation ? score_continuation(messages, forced_tokens, top_k)
                                                    : score_echo(messages, forced_tokens, top_k);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed scoring response: ") + e.what());
  }
}

std::vector<TokenDist> HttpLogprobBackend::score_continuation(const Messages& messages,
                                                              std::span<const std::string> forced, int k) {
  std::vector<TokenDist> out;
  std::string prefix;
  for (std::size_t i = 0; i < forced.size(); ++i) {
    auto msgs = messages_json(messages);
    msgs.push_back(json{{"role", "assistant"}, {"content", prefix}});
    json body{{"model", client_->config().model},
              {"messages", std::move(msgs)},
              {"temperature", 1.0},
              {"max_tokens", 1},
              {"logprobs", true},
              {"top_logprobs", k},
              {"continue_final_message", true},
              {"add_generation_prompt", false}};
    const auto response = client_->post("/chat/completions", body);
    const auto lp = response.at("choices").at(0).value("logprobs", json::object()).value("content", json::array());
    if (lp.empty()) throw CapabilityError("continuation scoring: endpoint returned no logprobs");
    out.push_back(forced_dist(static_cast<int>(i), forced[i], alternatives_from(lp.at(0).value("top_logprobs", json::array()))));
    prefix += forced[i];
  }
  return out;
}

std::vector<TokenDist> HttpLogprobBackend::score_echo(const Messages& messages, std::span<const std::string> forced,
                                                      int k) {
  std::string prompt;
  for (const auto& m : messages) prompt += m.role + ": " + m.content + "\n\n";
  prompt += "assistant: ";
  std::string continuation;
  for (const auto& t : forced) continuation += t;
  json body{{"model", client_->config().model},
            {"prompt", prompt + continuation},
            {"echo", true},
            {"max_tokens", 1},
            {"temperature", 1.0},
            {"logprobs", k}};
  const auto response = client_->post("/completions", body);
  const auto& lp = response.at("choices").at(0).at("logprobs");
  const auto& tokens = lp.at("tokens");
  const auto& tops = lp.at("top_logprobs");
  const auto generated = static_cast<std::size_t>(usage_from_response(response, 0).completion_tokens);
  if (tokens.size() < forced.size() + generated) throw SchemaError("echo scoring: response shorter than forced tokens");
  const std::size_t end = tokens.size() - generated;
  const std::size_t begin = end - forced.size();
  std::string echoed;
  for (std::size_t i = begin; i < end; ++i) echoed += tokens.at(i).get<std::string>();
  if (echoed != continuation) throw SchemaError("echo scoring: endpoint tokenization differs from student tokens");
  std::vector<TokenDist> out;
  for (std::size_t i = 0; i < forced.size(); ++i) {
    const auto& top = tops.at(begin + i);
    out.push_back(forced_dist(static_cast<int>(i), forced[i], alternatives_from(top.is_null() ? json::object() : top)));
  }
  return out;
}

void HttpLogprobBackend::probe() {
  const Messages msgs{{"user", "Reply with the single word: ok"}};
  try {
    if (scoring_ == TeacherScoring::Echo) {
      const std::string forced[] = {" ok"};
      score_echo(msgs, forced, 1);
    }
    SamplingParams p;
    p.max_tokens = 1;
    p.top_logprobs = 1;
    const auto c = complete_with_logprobs(msgs, p);
    if (c.tokens.empty()) throw CapabilityError("endpoint returned an empty logprob list");
  } catch (const CapabilityError&) {
    throw;
  } catch (const Error& e) {
    throw CapabilityError(identity() + " failed the logprob probe: " + e.what());
  } catch (const json::exception& e) {
    throw CapabilityError(identity() + " failed the logprob probe: " + e.what());
  }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

std::string HttpEmbeddingProvider::tag() const { return "http:" + client_->config().model; }

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(std::span<const std::string> texts) {
  json body{{"model", client_->config().model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto response = client_->post("/embeddings", body);
  std::vector<std::vector<double>> out(texts.size());
  try {
    for (const auto& item : response.at("data")) {
      const auto idx = item.value("index", std::size_t{0});
      if (idx >= out.size()) throw TransportError("embedding index out of range");
      out[idx] = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed embeddings response: ") + e.what());
  }
  return out;
}

}  // namespace vrloop
