#pragma once

// Controllable fidelity-diversity trade-off: a second, fidelity-oriented
// policy whose raw action is linearly blended with the frozen original
// policy, trained under the lambda-blended reward. Blending happens in raw
// (pre-smoothing) space; one shared smoother processes the blended sequence.

#include <stdexcept>
#include <vector>

#include "gensched/rl.hpp"

namespace gensched {

inline std::vector<double> blend_action(const std::vector<double>& a,
                                        const std::vector<double>& a_prime, double lambda) {
    if (a.size() != a_prime.size()) throw std::invalid_argument("blend_action: size mismatch");
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("blend_action: lambda outside [0, 1]");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = (1.0 - lambda) * a[i] + lambda * a_prime[i];
    return out;
}

inline double blend_reward(double r, double r_prime, double lambda) {
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("blend_reward: lambda outside [0, 1]");
    return (1.0 - lambda) * r + lambda * r_prime;
}

// Action source for blended generation: the frozen original policy
// contributes its deterministic mean, the fidelity policy contributes a
// stochastic sample (its own mean at inference). PPO bookkeeping always
// follows the fidelity policy, the only trainable part.
inline RawSource blended_source(const PolicyAgent& original, const PolicyAgent& fidelity,
                                const World& world, double lambda, bool inference) {
    return [&original, &fidelity, &world, lambda, inference](const State& state, int t,
                                                             RngStream& rng) {
        RawOut out;
        out.features = featurize(state, world, fidelity.feature_config());
        const std::vector<double> base_mean =
            original.policy_mean(featurize(state, world, original.feature_config()), t);
        std::vector<double> fid_mean;
        fidelity.heads(out.features, t, fid_mean, out.value);
        const SampledAction s = fidelity.sample_action(fid_mean, rng, inference);
        out.own_raw = s.raw;
        out.log_prob = s.log_prob;
        out.exec_raw = blend_action(base_mean, s.raw, lambda);
        return out;
    };
}

struct BlendTrainSpec {
    TrainSpec base;  // reward_kind is ignored; rewards are blended adv/fidelity
};

// One fidelity-training iteration: lambda ~ U[0,1] per trajectory, rollouts
// under the blended policy, blended terminal rewards, PPO on the fidelity
// agent only. The original agent and the reward model stay frozen.
inline IterationRow blend_train_iteration(const World& world, const TrainSpec& spec,
                                          const PolicyAgent& original, PolicyAgent& fidelity,
                                          const RewardModel& disc, const FidelityStats& stats,
                                          OptState& fid_opt, long iteration,
                                          int* aborted_count) {
    const int c = world.class_count();
    const std::uint64_t it = static_cast<std::uint64_t>(iteration);

    std::vector<Trajectory> batch(spec.rollout_batch);
    parallel_for(spec.rollout_batch, spec.threads, [&](int j) {
        RngStream cls_rng =
            derive_stream(spec.seed, stream_tag("class"), it, static_cast<std::uint64_t>(j));
        const int cls = static_cast<int>(cls_rng.uniform_int(c));
        RngStream lam_rng =
            derive_stream(spec.seed, stream_tag("lambda"), it, static_cast<std::uint64_t>(j));
        const double lambda = lam_rng.uniform();
        const std::uint64_t ts =
            mix_key(spec.seed, stream_tag("traj"), it, static_cast<std::uint64_t>(j));
        Trajectory traj =
            rollout_with_source(world, spec.rollout,
                                blended_source(original, fidelity, world, lambda, false),
                                &fidelity, cls, ts, nullptr);
        if (!traj.aborted) {
            const double r = adv_reward(disc, traj.final_state, world);
            const double r_prime =
                fidelity_reward(spec.paradigm, world, traj.final_state, stats);
            traj.reward = blend_reward(r, r_prime, lambda);
        }
        batch[j] = std::move(traj);
    });
    for (const Trajectory& traj : batch)
        if (traj.aborted && aborted_count) ++*aborted_count;

    IterationRow row;
    row.iteration = iteration;
    double acc = 0.0;
    int n = 0;
    for (const Trajectory& traj : batch)
        if (!traj.aborted) {
            acc += traj.reward;
            ++n;
        }
    row.mean_reward = n > 0 ? acc / n : std::nan("");

    for (int u = 0; u < spec.policy_updates; ++u) {
        const PpoResult res =
            ppo_loss(batch, fidelity, spec.clip_eps, spec.value_coef, spec.normalize_adv);
        adam_step(fidelity.net().params(), res.grad, fid_opt);
        row.ppo_loss = res.loss;
    }
    return row;
}

inline TrainResult train_fidelity_policy(const World& world, const TrainSpec& spec,
                                         const PolicyAgent& original, PolicyAgent& fidelity,
                                         const RewardModel& disc, const FidelityStats& stats,
                                         OptState& fid_opt, long start_iteration = 0) {
    TrainResult result;
    for (long iteration = start_iteration; iteration < spec.iterations; ++iteration) {
        IterationRow row = blend_train_iteration(world, spec, original, fidelity, disc, stats,
                                                 fid_opt, iteration,
                                                 &result.aborted_trajectories);
        result.rows.push_back(row);
        result.iterations_run = iteration + 1;
        if (!std::isfinite(row.mean_reward)) {
            result.diverged = true;
            result.note = "mean reward non-finite at iteration " + std::to_string(iteration);
            break;
        }
    }
    return result;
}

}  // namespace gensched
