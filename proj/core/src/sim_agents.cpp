#include "vrloop/sim_agents.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>

#include "vrloop/errors.hpp"
#include "vrloop/seed.hpp"

namespace vrloop {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void check_probability(double p, std::string_view name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::int64_t count_words(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::int64_t count_words(const Messages& messages) {
  std::int64_t n = 0;
  for (const auto& m : messages) n += count_words(m.content);
  return n;
}

// A wrong answer that can never be equivalent to the gold one.
std::string wrong_answer(std::string_view gold, Rng& rng) {
  const auto normalized = normalize_answer(gold);
  long long value = 0;
  const auto* first = normalized.data();
  const auto* last = normalized.data() + normalized.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  const std::uint64_t offset = 1 + rng.below(97);
  if (ec == std::errc() && ptr == last && std::llabs(value) < (1LL << 52)) {
    return std::to_string(value + static_cast<long long>(offset));
  }
  return "alt" + std::to_string(offset * 1009 + rng.below(1000));
}

}  // namespace

std::string_view to_string(RefineDraw draw) {
  return draw == RefineDraw::Fresh ? "fresh" : "persistent";
}

std::string_view to_string(ScoreMode mode) {
  return mode == ScoreMode::Constant ? "constant" : "calibrated";
}

RefineDraw parse_refine_draw(std::string_view name) {
  if (name == "fresh") return RefineDraw::Fresh;
  if (name == "persistent") return RefineDraw::Persistent;
  throw ConfigError("unknown refine_draw '" + std::string(name) + "'");
}

ScoreMode parse_score_mode(std::string_view name) {
  if (name == "constant") return ScoreMode::Constant;
  if (name == "calibrated") return ScoreMode::Calibrated;
  throw ConfigError("unknown score_mode '" + std::string(name) + "'");
}

double SimGeneratorParams::base_probability(const Problem& problem) const {
  if (!problem.bin) return solve_prob_unbinned;
  switch (*problem.bin) {
    case DifficultyBin::Hardest: return solve_prob_hardest;
    case DifficultyBin::Hard: return solve_prob_hard;
    case DifficultyBin::Excluded: return solve_prob_excluded;
  }
  return solve_prob_unbinned;
}

void SimGeneratorParams::validate() const {
  check_probability(solve_prob_hardest, "solve_prob_hardest");
  check_probability(solve_prob_hard, "solve_prob_hard");
  check_probability(solve_prob_excluded, "solve_prob_excluded");
  check_probability(solve_prob_unbinned, "solve_prob_unbinned");
  if (!(uplift_informative >= -1.0 && uplift_informative <= 1.0)) {
    throw ConfigError("uplift_informative must lie in [-1,1]");
  }
  if (!(uplift_generic >= -1.0 && uplift_generic <= 1.0)) throw ConfigError("uplift_generic must lie in [-1,1]");
}

void SimVerifierParams::validate() const {
  check_probability(tpr, "tpr");
  check_probability(fpr, "fpr");
  check_probability(teacher_tpr, "teacher_tpr");
  check_probability(teacher_fpr, "teacher_fpr");
  check_probability(informative_feedback_prob, "informative_feedback_prob");
  check_probability(base_score, "base_score");
  if (!std::isfinite(score_drift)) throw ConfigError("score_drift must be finite");
}

std::optional<SimSolutionState> parse_sim_state(std::string_view solution_text) {
  static const std::regex re(R"(ability=([-+0-9.eE]+) latent=([-+0-9.eE]+))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(solution_text.begin(), solution_text.end(), m, re)) return std::nullopt;
  SimSolutionState state;
  state.ability = std::strtod(m[1].str().c_str(), nullptr);
  state.latent = std::strtod(m[2].str().c_str(), nullptr);
  return state;
}

SimGenerator::SimGenerator(SimGeneratorParams params, PromptSet prompts, ExtractOptions extract)
    : params_(params), prompts_(std::move(prompts)), extract_(std::move(extract)) {
  params_.validate();
}

GeneratorReply SimGenerator::generate_initial(const Problem& problem, const CallContext& ctx) {
  Rng rng(ctx.seed);
  const double latent = rng.uniform();
  auto context = render_prompt(prompts_, TemplateId::GeneratorInitial, {{"statement", problem.statement}});
  return emit(problem, ctx.round, clamp01(params_.base_probability(problem)), latent, std::move(context), ctx.seed);
}

GeneratorReply SimGenerator::refine(const Problem& problem, const Attempt& prev, std::string_view feedback,
                                    const CallContext& ctx) {
  const auto state = parse_sim_state(prev.text);
  const double prior = state ? state->ability : params_.base_probability(problem);
  double uplift = 0.0;
  if (feedback.find(kSimInformativeTag) != std::string_view::npos) {
    uplift = params_.uplift_informative;
  } else if (!feedback.empty()) {
    uplift = params_.uplift_generic;
  }
  Rng rng(ctx.seed);
  double latent = rng.uniform();
  if (params_.refine_draw == RefineDraw::Persistent && state) latent = state->latent;

  SlotMap slots{{"statement", problem.statement}, {"prior_solution", prev.text}};
  if (!feedback.empty()) slots.emplace("feedback", std::string(feedback));
  auto context = render_prompt(prompts_, TemplateId::GeneratorRefine, slots);
  return emit(problem, ctx.round, clamp01(prior + uplift), latent, std::move(context), ctx.seed);
}

GeneratorReply SimGenerator::emit(const Problem& problem, int round, double ability, double latent,
                                  Messages context, std::uint64_t seed) const {
  const bool correct = latent < ability;
  Rng answer_rng(mix64(seed ^ 0x5eed5eed5eed5eedULL));
  const std::string answer = correct ? problem.gold_answer : wrong_answer(problem.gold_answer, answer_rng);

  GeneratorReply reply;
  reply.attempt.round_index = round;
  reply.attempt.text = "Simulated solution for round " + std::to_string(round) + " (ability=" +
                       format_real(ability) + " latent=" + format_real(latent) +
                       ").\nWorking through the problem step by step leads to the result below.\n"
                       "Final answer: \\boxed{" + answer + "}";
  reply.attempt.extracted_answer = extract_answer(reply.attempt.text, extract_);
  reply.usage.prompt_tokens = count_words(context);
  reply.usage.completion_tokens = count_words(reply.attempt.text);
  reply.context = std::move(context);
  return reply;
}

SimVerifier::SimVerifier(SimVerifierParams params, PromptSet prompts, std::string name)
    : params_(params), prompts_(std::move(prompts)), name_(std::move(name)) {
  params_.validate();
}

VerifierReply SimVerifier::verify(const Problem& problem, const Attempt& attempt, VerifyMode mode,
                                  const CallContext& ctx) {
  const bool correct = is_correct(attempt.extracted_answer, problem.gold_answer);
  const bool teacher = mode == VerifyMode::ReferenceConditioned;

  SlotMap slots{{"statement", problem.statement}, {"prior_solution", attempt.text}};
  if (teacher) {
    if (problem.gold_answer.empty()) throw ConfigError("reference-conditioned verification needs a gold answer");
    slots.emplace("reference_solution", problem.gold_answer);
  }
  auto context =
      render_prompt(prompts_, teacher ? TemplateId::VerifierTeacher : TemplateId::VerifierPlain, slots);

  Rng rng(ctx.seed);
  const double accept_draw = rng.uniform();
  const double inform_draw = rng.uniform();
  const double accept_prob = teacher ? (correct ? params_.teacher_tpr : params_.teacher_fpr)
                                     : (correct ? params_.tpr : params_.fpr);
  const bool accept = accept_draw < accept_prob;

  std::string feedback;
  if (correct) {
    feedback = std::string(kSimUninformativeTag) + " I could not find an error in this solution.";
  } else if (inform_draw < params_.informative_feedback_prob) {
    feedback = std::string(kSimInformativeTag) +
               " The argument breaks down at an intermediate step and the final answer does not follow. "
               "Rework that step before concluding.";
  } else {
    feedback = std::string(kSimUninformativeTag) + " Please double-check your work.";
  }

  double score = params_.base_score;
  if (params_.score_mode == ScoreMode::Calibrated) {
    const auto state = parse_sim_state(attempt.text);
    score = state ? state->ability : (correct ? 1.0 : 0.0);
  }
  score = clamp01(score + params_.score_drift * ctx.round);

  const std::string raw = feedback + "\nScore: " + format_real(score) + "\nPredicted verdict: " +
                          (accept ? "CORRECT" : "INCORRECT");
  VerifierReply reply;
  reply.output = parse_verdict(raw);
  reply.usage.prompt_tokens = count_words(context);
  reply.usage.completion_tokens = count_words(raw);
  reply.context = std::move(context);
  return reply;
}

FixtureLogprobBackend::FixtureLogprobBackend(std::vector<TokenDist> completion, std::vector<TokenDist> scores,
                                             std::string name)
    : completion_(std::move(completion)), scores_(std::move(scores)), name_(std::move(name)) {
  for (const auto& d : completion_) d.validate();
  for (const auto& d : scores_) d.validate();
}

Completion FixtureLogprobBackend::complete_with_logprobs(const Messages& messages, const SamplingParams&) {
  Completion out;
  for (const auto& d : completion_) out.text += d.chosen_token;
  out.tokens = completion_;
  out.usage.prompt_tokens = count_words(messages);
  out.usage.completion_tokens = static_cast<std::int64_t>(completion_.size());
  return out;
}

std::vector<TokenDist> FixtureLogprobBackend::score_along(const Messages&, std::span<const std::string> forced_tokens,
                                                          int) {
  if (forced_tokens.size() != scores_.size()) {
    throw Error("fixture backend '" + name_ + "' holds " + std::to_string(scores_.size()) +
                " scored positions, asked for " + std::to_string(forced_tokens.size()));
  }
  std::vector<TokenDist> out = scores_;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].position = static_cast<int>(i);
    if (out[i].chosen_token == forced_tokens[i]) continue;
    out[i].chosen_token = forced_tokens[i];
    const auto it = std::find_if(out[i].alternatives.begin(), out[i].alternatives.end(),
                                 [&](const TokenLogprob& t) { return t.token == forced_tokens[i]; });
    out[i].chosen_logprob =
        it != out[i].alternatives.end() ? it->logprob : std::log(std::max(out[i].tail_mass, 1e-12));
  }
  return out;
}

namespace {

constexpr std::size_t kVerdictLead = 0;
constexpr std::size_t kCorrectTok = 1;
constexpr std::size_t kIncorrectTok = 2;
constexpr std::size_t kFirstFiller = 3;

std::uint64_t hash_messages(const Messages& messages) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& m : messages) {
    h = fnv1a64(m.role, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(m.content, h);
    h = fnv1a64("\x1e", h);
  }
  return h;
}

}  // namespace

SeededLogprobBackend::SeededLogprobBackend(SeededLogprobParams params, std::string name)
    : params_(params), name_(std::move(name)) {
  if (params_.vocab_size < 6) throw ConfigError("seeded backend vocab_size must be >= 6");
  if (params_.response_tokens < 3) throw ConfigError("seeded backend response_tokens must be >= 3");
  vocab_.push_back("\nPredicted verdict:");
  vocab_.push_back(" CORRECT");
  vocab_.push_back(" INCORRECT");
  for (int i = static_cast<int>(kFirstFiller); i < params_.vocab_size; ++i) {
    vocab_.push_back(" step" + std::to_string(i - static_cast<int>(kFirstFiller)));
  }
}

std::vector<double> SeededLogprobBackend::full_distribution(std::uint64_t context_hash, int position) const {
  Rng rng(mix64(context_hash ^ mix64(params_.salt) ^ (static_cast<std::uint64_t>(position) << 32)));
  const std::size_t n = vocab_.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t i = kFirstFiller; i < n; ++i) w[i] = -std::log(1.0 - rng.uniform());
  const double filler_sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= filler_sum;

  const int last = params_.response_tokens - 1;
  std::vector<double> p(n, 0.0);
  if (position < last - 1) {
    p = w;
  } else if (position == last - 1) {
    p[kVerdictLead] = 0.97;
    for (std::size_t i = kFirstFiller; i < n; ++i) p[i] = 0.03 * w[i];
  } else {
    const double split = rng.uniform();
    p[kCorrectTok] = 0.9 * split;
    p[kIncorrectTok] = 0.9 * (1.0 - split);
    for (std::size_t i = kFirstFiller; i < n; ++i) p[i] = 0.1 * w[i];
  }
  return p;
}

TokenDist SeededLogprobBackend::truncate(const std::vector<double>& probs, int position, std::size_t chosen,
                                         int top_k) const {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<TokenLogprob> alts;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(top_k, 1)), order.size());
  for (std::size_t i = 0; i < k; ++i) {
    if (probs[order[i]] <= 0.0) break;
    alts.push_back({vocab_[order[i]], std::log(probs[order[i]])});
  }
  return TokenDist::from_logprobs(position, vocab_[chosen], std::log(std::max(probs[chosen], 1e-300)),
                                  std::move(alts));
}

std::size_t SeededLogprobBackend::token_index(std::string_view token) const {
  const auto it = std::find(vocab_.begin(), vocab_.end(), token);
  if (it == vocab_.end()) throw Error("seeded backend: token '" + std::string(token) + "' not in vocabulary");
  return static_cast<std::size_t>(it - vocab_.begin());
}

Completion SeededLogprobBackend::complete_with_logprobs(const Messages& messages, const SamplingParams& params) {
  Completion out;
  std::uint64_t h = hash_messages(messages);
  Rng sampler(mix64(params.seed ^ h));
  for (int pos = 0; pos < params_.response_tokens; ++pos) {
    const auto probs = full_distribution(h, pos);
    double u = sampler.uniform();
    std::size_t chosen = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (u < probs[i]) {
        chosen = i;
        break;
      }
      u -= probs[i];
    }
    while (probs[chosen] <= 0.0 && chosen > 0) --chosen;
    out.tokens.push_back(truncate(probs, pos, chosen, params.top_logprobs));
    out.text += vocab_[chosen];
    h = fnv1a64(vocab_[chosen], fnv1a64("\x1d", h));
  }
  out.usage.prompt_tokens = count_words(messages);
  out.usage.completion_tokens = params_.response_tokens;
  return out;
}

std::vector<TokenDist> SeededLogprobBackend::score_along(const Messages& messages,
                                                         std::span<const std::string> forced_tokens, int top_k) {
  std::vector<TokenDist> out;
  std::uint64_t h = hash_messages(messages);
  for (std::size_t pos = 0; pos < forced_tokens.size(); ++pos) {
    const auto probs = full_distribution(h, static_cast<int>(pos));
    out.push_back(truncate(probs, static_cast<int>(pos), token_index(forced_tokens[pos]), top_k));
    h = fnv1a64(forced_tokens[pos], fnv1a64("\x1d", h));
  }
  return out;
}

}  // namespace vrloop
