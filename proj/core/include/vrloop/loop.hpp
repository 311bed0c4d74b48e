#pragma once

#include <cstdint>
#include <vector>

#include "vrloop/agents.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

// Runs one verification-refinement loop:
//   y_0 ~ G(x); for r = 1..R: (v_r, f_r) ~ V(x, y_{r-1}); stop on accept,
//   else y_r ~ G(x, y_{r-1}, f_r).
// After the R-th rejection y_R is still generated and recorded. Every
// attempt is graded against the gold answer. Transport failures end the
// trace with termination = error and keep the rounds completed so far.
//
// Call seeds derive from (seed, problem id, loop id, round, role).
VRTrace run_vr_loop(const Problem& problem, GeneratorAgent& generator, VerifierAgent& verifier,
                    const LoopConfig& config, int loop_id, std::uint64_t seed,
                    const AnswerChecker& checker = default_answer_checker());

// Correctness of the current solution after r = 0..R verification rounds,
// carrying the last solution forward once the trace ends.
std::vector<bool> round_series(const VRTrace& trace, int max_rounds);

// Oracle verdict used in ground-truth mode.
Verdict oracle_verdict(const Attempt& attempt);

}  // namespace vrloop
