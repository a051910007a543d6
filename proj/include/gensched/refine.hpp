#pragma once

// Inference-time refinement: repeated sampling selected by the adversarial
// reward, with value-guided lookahead inside each trial for stochastic
// paradigms. The auxiliary networks trained alongside the policy are
// repurposed here as evaluators.

#include <stdexcept>
#include <vector>

#include "gensched/rl.hpp"

namespace gensched {

struct RefineConfig {
    int repeat_trials = 3;  // M; M+1 full generations run
    int lookahead_k = 2;    // K
    bool lookahead = false;
};

struct RefineResult {
    State best;
    double best_reward = 0.0;
    std::vector<double> trial_rewards;
};

// Runs M+1 full generations (trial-keyed rng substreams, so nested trial
// sets share a prefix) and returns the sample with the highest adversarial
// reward. M=0 with lookahead off reduces to one plain inference rollout.
inline RefineResult refine_generate(const World& world, const RolloutSpec& base_spec,
                                    const PolicyAgent& agent, const RewardModel& reward_model,
                                    const RefineConfig& config, int class_label,
                                    std::uint64_t seed) {
    if (config.repeat_trials < 0) throw std::invalid_argument("refine: M must be >= 0");
    if (config.lookahead_k < 1) throw std::invalid_argument("refine: K must be >= 1");
    if (config.lookahead && !has_stochastic_transition(base_spec.paradigm))
        throw std::invalid_argument(
            "refine: lookahead requires a stochastic transition; the ODE state transition is "
            "deterministic");
    RolloutSpec spec = base_spec;
    spec.lookahead_k = config.lookahead ? config.lookahead_k : 1;

    RefineResult result;
    for (int trial = 0; trial <= config.repeat_trials; ++trial) {
        const std::uint64_t ts =
            mix_key(seed, stream_tag("trial"), static_cast<std::uint64_t>(trial));
        const Trajectory traj = rollout(world, spec, agent, class_label, ts, nullptr, true);
        if (traj.aborted) throw std::runtime_error("refine: trajectory aborted");
        const double r = adv_reward(reward_model, traj.final_state, world);
        result.trial_rewards.push_back(r);
        if (trial == 0 || r > result.best_reward) {
            result.best = traj.final_state;
            result.best_reward = r;
        }
    }
    return result;
}

}  // namespace gensched
