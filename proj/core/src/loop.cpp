#include "vrloop/loop.hpp"

#include <algorithm>

#include "vrloop/errors.hpp"
#include "vrloop/seed.hpp"

namespace vrloop {

namespace {

void grade(Attempt& attempt, const Problem& problem, const AnswerChecker& checker) {
  attempt.correct = is_correct(attempt.extracted_answer, problem.gold_answer, checker);
}

}  // namespace

Verdict oracle_verdict(const Attempt& attempt) {
  return attempt.correct.value_or(false) ? Verdict::Accept : Verdict::Reject;
}

VRTrace run_vr_loop(const Problem& problem, GeneratorAgent& generator, VerifierAgent& verifier,
                    const LoopConfig& config, int loop_id, std::uint64_t seed, const AnswerChecker& checker) {
  config.validate();

  VRTrace trace;
  trace.problem_id = problem.id;
  trace.loop_id = loop_id;
  trace.seed = seed;
  trace.max_rounds = config.max_rounds;
  trace.verdict_mode = config.verdict_mode;
  trace.feedback_mode = config.feedback_mode;

  const auto call_seed = [&](int round, SeedRole role) {
    return derive_seed(seed, problem.id, loop_id, round, role);
  };
  // The verifier is only consulted when its verdict or feedback is used.
  const bool need_verifier =
      config.verdict_mode == VerdictMode::Model || config.feedback_mode == FeedbackMode::Model;

  try {
    auto first = generator.generate_initial(problem, {call_seed(0, SeedRole::Generator), 0});
    first.attempt.round_index = 0;
    grade(first.attempt, problem, checker);
    trace.usage.push_back({"generator", 0, first.usage});
    trace.rounds.push_back({std::move(first.attempt), std::nullopt});

    for (int r = 1; r <= config.max_rounds; ++r) {
      const Attempt& current = trace.rounds.back().attempt;

      VerifierOutput out;
      if (need_verifier) {
        auto reply = verifier.verify(problem, current, VerifyMode::Plain, {call_seed(r, SeedRole::Verifier), r});
        trace.usage.push_back({"verifier", r, reply.usage});
        out = std::move(reply.output);
      }
      if (config.verdict_mode == VerdictMode::GroundTruth) {
        out.verdict = oracle_verdict(current);
        out.mode = VerdictMode::GroundTruth;
      } else {
        out.mode = VerdictMode::Model;
      }
      switch (config.feedback_mode) {
        case FeedbackMode::Model: break;
        case FeedbackMode::Generic: out.feedback = config.generic_feedback_text; break;
        case FeedbackMode::None: out.feedback.clear(); break;
      }

      const bool accepted = out.verdict == Verdict::Accept;
      const std::string feedback = out.feedback;
      trace.rounds.back().verifier_output = std::move(out);
      if (accepted) {
        trace.termination = Termination::Accepted;
        return trace;
      }

      auto next = generator.refine(problem, trace.rounds.back().attempt, feedback,
                                   {call_seed(r, SeedRole::Generator), r});
      next.attempt.round_index = r;
      grade(next.attempt, problem, checker);
      trace.usage.push_back({"generator", r, next.usage});
      trace.rounds.push_back({std::move(next.attempt), std::nullopt});
    }
    trace.termination = Termination::MaxRounds;
  } catch (const TransportError& e) {
    trace.termination = Termination::Error;
    trace.error = e.what();
  }
  return trace;
}

std::vector<bool> round_series(const VRTrace& trace, int max_rounds) {
  std::vector<bool> series(static_cast<std::size_t>(std::max(max_rounds, 0)) + 1, false);
  if (trace.rounds.empty()) return series;
  for (int r = 0; r <= max_rounds; ++r) {
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(r), trace.rounds.size() - 1);
    series[static_cast<std::size_t>(r)] = trace.rounds[idx].attempt.correct.value_or(false);
  }
  return series;
}

}  // namespace vrloop
