#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "vrloop/agents.hpp"
#include "vrloop/dataset.hpp"
#include "vrloop/protocol.hpp"

namespace vrloop {

struct HttpResponse {
  int status = 0;  // 0: no response (connection failure, timeout)
  std::string body;
  std::string error;
};

// Seam between the client and the wire; tests substitute their own.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body, const std::string& api_key,
                                 double timeout_s) = 0;
};

// cpp-httplib transport for "http(s)://host[:port][/prefix]" base URLs.
std::shared_ptr<HttpTransport> make_httplib_transport(const std::string& base_url);

// OpenAI-compatible client. Safe for concurrent use; at most
// max_in_flight requests are outstanding at any time.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig config, std::shared_ptr<HttpTransport> transport = nullptr);

  // POSTs with retry on connection errors, 429 and 5xx (exponential
  // backoff with jitter). The identical body, seed included, is re-sent.
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  // Chat-completions body with the configured sampling parameters.
  nlohmann::json chat_body(const Messages& messages, std::optional<std::uint64_t> seed) const;

  const EndpointConfig& config() const { return config_; }
  int peak_in_flight() const { return peak_.load(); }
  long requests_sent() const { return sent_.load(); }

 private:
  EndpointConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  std::counting_semaphore<4096> slots_;
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
  std::atomic<long> sent_{0};
};

// Endpoint seeds are sent as non-negative 31-bit integers.
std::int64_t wire_seed(std::uint64_t seed);
TokenUsage usage_from_response(const nlohmann::json& response, double wall_ms);
std::string first_choice_text(const nlohmann::json& response);

class HttpGenerator final : public GeneratorAgent {
 public:
  HttpGenerator(std::shared_ptr<ChatClient> client, PromptSet prompts, ExtractOptions extract = {});

  GeneratorReply generate_initial(const Problem& problem, const CallContext& ctx) override;
  GeneratorReply refine(const Problem& problem, const Attempt& prev, std::string_view feedback,
                        const CallContext& ctx) override;
  std::string identity() const override;

 private:
  GeneratorReply call(Messages messages, int round, std::uint64_t seed);

  std::shared_ptr<ChatClient> client_;
  PromptSet prompts_;
  ExtractOptions extract_;
};

enum class ScoreSource {
  SelfReported,        // "Score: x" line in the reply
  VerdictProbability,  // P(CORRECT) / (P(CORRECT) + P(INCORRECT)) at the verdict token
};

std::string_view to_string(ScoreSource source);
ScoreSource parse_score_source(std::string_view name);

// Locates the verdict token in a logprob-bearing chat response and returns
// the renormalized accept probability, if the verdict token is listed.
std::optional<double> verdict_probability(const nlohmann::json& response);

class HttpVerifier final : public VerifierAgent {
 public:
  HttpVerifier(std::shared_ptr<ChatClient> client, PromptSet prompts,
               ScoreSource score_source = ScoreSource::SelfReported);

  VerifierReply verify(const Problem& problem, const Attempt& attempt, VerifyMode mode,
                       const CallContext& ctx) override;
  std::string identity() const override;
  bool frozen() const override { return client_->config().frozen; }

 private:
  std::shared_ptr<ChatClient> client_;
  PromptSet prompts_;
  ScoreSource score_source_;
};

enum class TeacherScoring {
  Continuation,  // one max_tokens=1 query per position, prefix as a continued assistant message
  Echo,          // one /completions echo query over a plain-text rendering of the chat
};

std::string_view to_string(TeacherScoring mode);
TeacherScoring parse_teacher_scoring(std::string_view name);

// Parses choices[0].logprobs.content of a chat response into TokenDists.
std::vector<TokenDist> parse_chat_logprobs(const nlohmann::json& response);

class HttpLogprobBackend final : public LogprobBackend {
 public:
  HttpLogprobBackend(std::shared_ptr<ChatClient> client, TeacherScoring scoring = TeacherScoring::Continuation);

  Completion complete_with_logprobs(const Messages& messages, const SamplingParams& params) override;
  std::vector<TokenDist> score_along(const Messages& messages, std::span<const std::string> forced_tokens,
                                     int top_k) override;
  std::string scoring_mechanism() const override { return std::string(to_string(scoring_)); }
  std::string identity() const override;
  void probe() override;

 private:
  std::vector<TokenDist> score_continuation(const Messages& messages, std::span<const std::string> forced, int k);
  std::vector<TokenDist> score_echo(const Messages& messages, std::span<const std::string> forced, int k);

  std::shared_ptr<ChatClient> client_;
  TeacherScoring scoring_;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::shared_ptr<ChatClient> client);
  std::string tag() const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  std::shared_ptr<ChatClient> client_;
};

}  // namespace vrloop
