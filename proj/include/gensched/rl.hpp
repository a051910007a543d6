#pragma once

// Rollout collection and PPO optimization with the alternating
// policy/reward-model loop. All randomness is keyed by
// (seed, purpose, iteration, index) so training is bit-reproducible and
// rollouts parallelize without ordering effects.

#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gensched/agent.hpp"
#include "gensched/metrics.hpp"
#include "gensched/rewards.hpp"
#include "gensched/transforms.hpp"

namespace gensched {

template <typename F>
void parallel_for(int n, int threads, F&& f) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1 || n < 16) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
        });
    for (auto& th : pool) th.join();
}

struct StepRecord {
    std::vector<double> features;
    std::vector<double> own_raw;   // the trained policy's own sample a~_t
    std::vector<double> smoothed;  // post-EMA, post-init-bias raw vector
    Action action;                 // executed action
    double log_prob = 0.0;         // behavior-policy density of own_raw
    double value = 0.0;            // V(s_t) at rollout time
};

struct Trajectory {
    std::vector<StepRecord> steps;
    double reward = 0.0;
    State final_state;
    std::vector<double> final_features;  // featurization of s_T
    double final_value = 0.0;            // V(s_T) at rollout time
    int class_label = 0;
    std::uint64_t traj_seed = 0;
    bool aborted = false;
};

// How one step's raw action is produced. exec_raw feeds the smoother and the
// environment; own_raw/log_prob belong to the policy being optimized (they
// differ from exec_raw only under action blending).
struct RawOut {
    std::vector<double> features;
    std::vector<double> exec_raw;
    std::vector<double> own_raw;
    double log_prob = 0.0;
    double value = 0.0;
};

using RawSource = std::function<RawOut(const State&, int t, RngStream&)>;
using RewardFn = std::function<double(const Trajectory&)>;

struct RolloutSpec {
    Paradigm paradigm = Paradigm::Diffusion;
    int horizon = 1;
    double beta = 0.0;
    bool heuristic_init = false;
    Schedule init_schedule;
    bool clamp_actions = false;
    int lookahead_k = 1;  // >1 enables value-guided branch selection
};

namespace rl_detail {

inline std::uint64_t act_tag() { return stream_tag("act"); }
inline std::uint64_t trans_tag() { return stream_tag("trans"); }
inline std::uint64_t init_tag() { return stream_tag("init"); }

inline ActivationContext make_ctx(const RolloutSpec& spec, const World& world,
                                  const State& state) {
    ActivationContext ctx;
    ctx.t = state.t;
    ctx.horizon = spec.horizon;
    ctx.kappa_current = state.kappa;
    if (world.gmm) ctx.kappa_max = world.gmm->kappa_max();
    if (world.discrete) ctx.vocab = world.discrete->vocab_size();
    return ctx;
}

}  // namespace rl_detail

// Draws K candidate next states from independent substreams of the
// trajectory's rng, evaluates the value head on each, and returns the argmax
// (ties to the lowest candidate index). Candidate 0 uses the stream a plain
// transition would use, so K=1 reproduces the unrefined step bit-exactly.
inline State lookahead_step(const State& state, const Action& action, const World& world,
                            const PolicyAgent& value_agent, int k, std::uint64_t traj_seed,
                            int horizon) {
    if (!has_stochastic_transition(state.paradigm))
        throw std::invalid_argument("lookahead_step: transition is deterministic");
    if (k < 1) throw std::invalid_argument("lookahead_step: K must be >= 1");
    State best;
    double best_value = 0.0;
    for (int cand = 0; cand < k; ++cand) {
        RngStream rng = derive_stream(traj_seed, rl_detail::trans_tag(),
                                      static_cast<std::uint64_t>(state.t),
                                      static_cast<std::uint64_t>(cand));
        State next = transition(state, action, world, rng, horizon);
        const double v = value_agent.value(
            featurize(next, world, value_agent.feature_config()),
            std::min(next.t, horizon - 1));
        if (cand == 0 || v > best_value) {
            best = std::move(next);
            best_value = v;
        }
    }
    return best;
}

// Executes initial_state followed by T transitions, recording per-step data,
// then scores the terminal sample. value_agent (when given) powers lookahead.
inline Trajectory rollout_with_source(const World& world, const RolloutSpec& spec,
                                      const RawSource& source,
                                      const PolicyAgent* value_agent, int class_label,
                                      std::uint64_t traj_seed, const RewardFn& reward_fn) {
    Trajectory traj;
    traj.class_label = class_label;
    traj.traj_seed = traj_seed;
    RngStream init_rng = derive_stream(traj_seed, rl_detail::init_tag());
    State state = initial_state(spec.paradigm, world, class_label, init_rng);
    EmaSmoother smoother(spec.beta);

    try {
        for (int t = 0; t < spec.horizon; ++t) {
            RngStream act_rng =
                derive_stream(traj_seed, rl_detail::act_tag(), static_cast<std::uint64_t>(t));
            RawOut out = source(state, t, act_rng);

            StepRecord rec;
            rec.features = std::move(out.features);
            rec.own_raw = out.own_raw;
            rec.log_prob = out.log_prob;
            rec.value = out.value;

            std::vector<double> smoothed = smoother.step(out.exec_raw);
            if (spec.heuristic_init) {
                const std::vector<double> bias = init_bias(spec.init_schedule, t, spec.horizon);
                for (std::size_t i = 0; i < smoothed.size(); ++i) smoothed[i] += bias[i];
            }
            const ActivationContext ctx = rl_detail::make_ctx(spec, world, state);
            const Action action = spec.clamp_actions
                                      ? clamp_variant(smoothed, spec.paradigm, ctx)
                                      : activate(smoothed, spec.paradigm, ctx);
            rec.smoothed = std::move(smoothed);
            rec.action = action;
            traj.steps.push_back(std::move(rec));

            if (spec.lookahead_k > 1 && has_stochastic_transition(spec.paradigm)) {
                if (!value_agent)
                    throw std::invalid_argument("rollout: lookahead requires a value agent");
                state = lookahead_step(state, action, world, *value_agent, spec.lookahead_k,
                                       traj_seed, spec.horizon);
            } else {
                RngStream trans_rng =
                    derive_stream(traj_seed, rl_detail::trans_tag(),
                                  static_cast<std::uint64_t>(t), std::uint64_t{0});
                state = transition(state, action, world, trans_rng, spec.horizon);
            }
        }
    } catch (const std::exception&) {
        traj.aborted = true;
        traj.final_state = state;
        return traj;
    }
    traj.final_state = std::move(state);
    if (value_agent) {
        // the terminal state enters the value regression (its reward is
        // known), which is what makes final-step lookahead meaningful
        traj.final_features =
            featurize(traj.final_state, world, value_agent->feature_config());
        traj.final_value = value_agent->value(traj.final_features,
                                              std::min(traj.final_state.t, spec.horizon - 1));
    }
    if (reward_fn) traj.reward = reward_fn(traj);
    return traj;
}

inline RawSource agent_source(const PolicyAgent& agent, const World& world, bool inference) {
    return [&agent, &world, inference](const State& state, int t, RngStream& rng) {
        RawOut out;
        out.features = featurize(state, world, agent.feature_config());
        std::vector<double> mean;
        agent.heads(out.features, t, mean, out.value);
        SampledAction s = agent.sample_action(mean, rng, inference);
        out.own_raw = s.raw;
        out.exec_raw = std::move(s.raw);
        out.log_prob = s.log_prob;
        return out;
    };
}

inline Trajectory rollout(const World& world, const RolloutSpec& spec, const PolicyAgent& agent,
                          int class_label, std::uint64_t traj_seed, const RewardFn& reward_fn,
                          bool inference) {
    return rollout_with_source(world, spec, agent_source(agent, world, inference), &agent,
                               class_label, traj_seed, reward_fn);
}

// Terminal-only advantage: A_t = R(s_T) - V(s_t), no discounting.
inline std::vector<double> advantage(const Trajectory& traj) {
    std::vector<double> adv(traj.steps.size());
    for (std::size_t t = 0; t < traj.steps.size(); ++t)
        adv[t] = traj.reward - traj.steps[t].value;
    return adv;
}

struct PpoResult {
    double loss = 0.0;
    GradVector grad;
    int included = 0;
    int excluded = 0;  // samples dropped for non-finite ratios
};

// Clipped-surrogate PPO loss with a value regression term:
//   loss = -E_t[ min(rho A, clip(rho, 1-eps, 1+eps) A) - c (V - R)^2 ]
// Gradients flow through the current policy mean and value head.
inline PpoResult ppo_loss(const std::vector<Trajectory>& batch, const PolicyAgent& agent,
                          double clip_eps, double value_coef, bool normalize_adv = false) {
    if (!(clip_eps > 0.0)) throw std::invalid_argument("ppo_loss: clip epsilon must be > 0");
    if (value_coef < 0.0) throw std::invalid_argument("ppo_loss: value coefficient < 0");
    PpoResult res;
    res.grad.assign(agent.net().param_count(), 0.0);

    std::vector<std::vector<double>> advs(batch.size());
    double adv_mean = 0.0, adv_sq = 0.0;
    std::size_t n_adv = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].aborted) continue;
        advs[i] = advantage(batch[i]);
        for (double a : advs[i]) {
            adv_mean += a;
            adv_sq += a * a;
            ++n_adv;
        }
    }
    if (normalize_adv && n_adv > 1) {
        adv_mean /= n_adv;
        const double sd = std::sqrt(std::max(adv_sq / n_adv - adv_mean * adv_mean, 1e-12));
        for (auto& v : advs)
            for (double& a : v) a = (a - adv_mean) / sd;
    }

    const double sigma2 = agent.sigma() * agent.sigma();
    const int dim = agent.raw_dim();
    double loss_acc = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Trajectory& traj = batch[i];
        if (traj.aborted) continue;
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            const StepRecord& rec = traj.steps[t];
            std::vector<double> mean;
            double value;
            agent.heads(rec.features, static_cast<int>(t), mean, value);
            const double new_lp = agent.log_prob(mean, rec.own_raw);
            const double ratio = std::exp(new_lp - rec.log_prob);
            if (!std::isfinite(ratio)) {
                ++res.excluded;
                continue;
            }
            const double a = advs[i][t];
            const double unclipped = ratio * a;
            const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * a;
            double surrogate, dsurr_dratio;
            if (unclipped <= clipped) {
                surrogate = unclipped;
                dsurr_dratio = a;
            } else {
                surrogate = clipped;
                dsurr_dratio = 0.0;  // clip active only when rho is outside the band
            }
            const double vdiff = value - traj.reward;
            loss_acc += -surrogate + value_coef * vdiff * vdiff;

            std::vector<double> cot(dim + 1, 0.0);
            const double dloss_dratio = -dsurr_dratio;
            for (int d = 0; d < dim; ++d)
                cot[d] = dloss_dratio * ratio * (rec.own_raw[d] - mean[d]) / sigma2;
            cot[dim] = 2.0 * value_coef * vdiff;
            agent.net().backward_accumulate(rec.features, agent.mod_step(static_cast<int>(t)),
                                            cot, res.grad);
            ++res.included;
        }
        // terminal state: value regression only (no action was taken there)
        if (!traj.final_features.empty()) {
            const int step = std::min(traj.final_state.t, static_cast<int>(traj.steps.size())) - 1;
            const double v = agent.value(traj.final_features, std::max(step, 0));
            const double vdiff = v - traj.reward;
            loss_acc += value_coef * vdiff * vdiff;
            std::vector<double> cot(dim + 1, 0.0);
            cot[dim] = 2.0 * value_coef * vdiff;
            agent.net().backward_accumulate(traj.final_features,
                                            agent.mod_step(std::max(step, 0)), cot, res.grad);
            ++res.included;
        }
    }
    if (res.included > 0) {
        const double inv = 1.0 / res.included;
        loss_acc *= inv;
        for (double& g : res.grad) g *= inv;
    }
    res.loss = loss_acc;
    return res;
}

// ---------------------------------------------------------------------------
// Training loop (alternating policy / reward-model optimization)
// ---------------------------------------------------------------------------

struct TrainSpec {
    Paradigm paradigm = Paradigm::Diffusion;
    int horizon = 4;
    int iterations = 200;
    int rollout_batch = 128;
    int disc_batch = 128;
    int policy_updates = 5;
    int disc_updates = 5;
    double clip_eps = 0.2;
    double value_coef = 0.5;
    bool normalize_adv = false;
    double policy_lr = 3e-3;
    double disc_lr = 1e-3;
    double real_label = 1.0;
    RewardKind reward_kind = RewardKind::Adversarial;
    RolloutSpec rollout;
    int eval_every = 10;
    int eval_samples = 64;  // per class
    int threads = 0;
    std::uint64_t seed = 0;
};

struct IterationRow {
    long iteration = 0;
    double mean_reward = 0.0;
    double ppo_loss = 0.0;
    double disc_loss = 0.0;
    double eval_metric = 0.0;
};

struct TrainResult {
    std::vector<IterationRow> rows;
    long iterations_run = 0;
    bool diverged = false;
    std::string note;
    int aborted_trajectories = 0;
};

// Inference-mode terminal samples for evaluation; streams keyed by
// (seed, "eval", iteration, class, index).
inline std::vector<State> eval_samples(const World& world, const RolloutSpec& spec,
                                       const PolicyAgent& agent, int per_class, int threads,
                                       std::uint64_t seed, std::uint64_t salt) {
    const int c = world.class_count();
    std::vector<State> finals(static_cast<std::size_t>(per_class) * c);
    parallel_for(per_class * c, threads, [&](int i) {
        const int cls = i / per_class;
        const std::uint64_t ts =
            mix_key(seed, stream_tag("eval"), salt, static_cast<std::uint64_t>(i));
        finals[i] = rollout(world, spec, agent, cls, ts, nullptr, true).final_state;
    });
    return finals;
}

// Headline training metric: mean per-class Frechet for continuous worlds,
// mean per-class NLL for discrete ones.
inline double eval_metric_value(const World& world, const RolloutSpec& spec,
                                const PolicyAgent& agent, int per_class, int threads,
                                std::uint64_t seed, std::uint64_t salt) {
    const std::vector<State> finals =
        eval_samples(world, spec, agent, per_class, threads, seed, salt);
    const int c = world.class_count();
    double acc = 0.0;
    for (int cls = 0; cls < c; ++cls) {
        if (world.gmm) {
            std::vector<Vec2> pts;
            pts.reserve(per_class);
            for (int i = cls * per_class; i < (cls + 1) * per_class; ++i)
                pts.push_back(finals[i].x);
            GaussianFit ref;
            world.gmm->moments(cls, ref.mean, ref.cov);
            ref.count = 2;
            acc += frechet_from_fits(fit_gaussian(pts), ref);
        } else {
            std::vector<std::vector<int>> grids;
            grids.reserve(per_class);
            for (int i = cls * per_class; i < (cls + 1) * per_class; ++i)
                grids.push_back(finals[i].tokens);
            acc += avg_nll(grids, *world.discrete, cls);
        }
    }
    return acc / c;
}

// One Algorithm-1 iteration: rollout batch -> policy updates -> fresh
// real/fake batches -> reward-model updates.
struct TrainingMembers {
    PolicyAgent* agent = nullptr;
    RewardModel* disc = nullptr;
    OptState* agent_opt = nullptr;
    OptState* disc_opt = nullptr;
    const FidelityStats* fidelity = nullptr;
    const GaussianFit* metric_ref = nullptr;  // pooled reference for metric reward
};

inline IterationRow train_iteration(const World& world, const TrainSpec& spec,
                                    const TrainingMembers& members, long iteration,
                                    int* aborted_count) {
    const int c = world.class_count();
    PolicyAgent& agent = *members.agent;
    const std::uint64_t it = static_cast<std::uint64_t>(iteration);

    std::vector<Trajectory> batch(spec.rollout_batch);
    parallel_for(spec.rollout_batch, spec.threads, [&](int j) {
        RngStream cls_rng =
            derive_stream(spec.seed, stream_tag("class"), it, static_cast<std::uint64_t>(j));
        const int cls = static_cast<int>(cls_rng.uniform_int(c));
        const std::uint64_t ts =
            mix_key(spec.seed, stream_tag("traj"), it, static_cast<std::uint64_t>(j));
        batch[j] = rollout(world, spec.rollout, agent, cls, ts, nullptr, false);
    });
    for (const Trajectory& traj : batch)
        if (traj.aborted && aborted_count) ++*aborted_count;

    // terminal rewards
    switch (spec.reward_kind) {
        case RewardKind::Adversarial:
            for (Trajectory& traj : batch)
                if (!traj.aborted) traj.reward = adv_reward(*members.disc, traj.final_state, world);
            break;
        case RewardKind::FidelityProxy:
            for (Trajectory& traj : batch)
                if (!traj.aborted)
                    traj.reward =
                        fidelity_reward(spec.paradigm, world, traj.final_state, *members.fidelity);
            break;
        case RewardKind::Metric: {
            std::vector<Vec2> pts;
            for (const Trajectory& traj : batch)
                if (!traj.aborted) pts.push_back(traj.final_state.x);
            const double r = metric_reward(pts, *members.metric_ref);
            for (Trajectory& traj : batch) traj.reward = r;
            break;
        }
    }

    IterationRow row;
    row.iteration = iteration;
    double reward_acc = 0.0;
    int reward_n = 0;
    for (const Trajectory& traj : batch)
        if (!traj.aborted) {
            reward_acc += traj.reward;
            ++reward_n;
        }
    row.mean_reward = reward_n > 0 ? reward_acc / reward_n : std::nan("");

    for (int u = 0; u < spec.policy_updates; ++u) {
        const PpoResult res =
            ppo_loss(batch, agent, spec.clip_eps, spec.value_coef, spec.normalize_adv);
        adam_step(agent.net().params(), res.grad, *members.agent_opt);
        row.ppo_loss = res.loss;
    }

    if (spec.reward_kind == RewardKind::Adversarial && spec.disc_updates > 0) {
        std::vector<std::vector<double>> fake(spec.disc_batch), real(spec.disc_batch);
        parallel_for(spec.disc_batch, spec.threads, [&](int j) {
            RngStream cls_rng =
                derive_stream(spec.seed, stream_tag("fcls"), it, static_cast<std::uint64_t>(j));
            const int cls = static_cast<int>(cls_rng.uniform_int(c));
            const std::uint64_t ts =
                mix_key(spec.seed, stream_tag("fake"), it, static_cast<std::uint64_t>(j));
            const Trajectory traj = rollout(world, spec.rollout, agent, cls, ts, nullptr, false);
            fake[j] = state_sample_features(traj.final_state, world);

            RngStream real_rng =
                derive_stream(spec.seed, stream_tag("real"), it, static_cast<std::uint64_t>(j));
            const int rcls = static_cast<int>(real_rng.uniform_int(c));
            if (world.discrete) {
                real[j] = sample_features(spec.paradigm, world,
                                          world.discrete->sample(rcls, real_rng), {}, rcls);
            } else {
                real[j] = sample_features(spec.paradigm, world, {},
                                          world.gmm->sample(rcls, real_rng), rcls);
            }
        });
        for (int u = 0; u < spec.disc_updates; ++u)
            row.disc_loss =
                disc_update(*members.disc, real, fake, *members.disc_opt, spec.real_label);
    }
    return row;
}

// Full training run per Algorithm 1. Stops early (flagged) when the mean
// reward turns non-finite or the eval metric worsens 10x from its start.
inline TrainResult train(const World& world, const TrainSpec& spec,
                         const TrainingMembers& members, long start_iteration = 0) {
    TrainResult result;
    double first_metric = std::nan("");
    double last_metric = std::nan("");
    for (long iteration = start_iteration; iteration < spec.iterations; ++iteration) {
        IterationRow row =
            train_iteration(world, spec, members, iteration, &result.aborted_trajectories);
        if (spec.eval_every > 0 &&
            (iteration % spec.eval_every == 0 || iteration + 1 == spec.iterations)) {
            last_metric = eval_metric_value(world, spec.rollout, *members.agent,
                                            spec.eval_samples, spec.threads, spec.seed,
                                            static_cast<std::uint64_t>(iteration));
            if (std::isnan(first_metric)) first_metric = last_metric;
        }
        row.eval_metric = last_metric;
        result.rows.push_back(row);
        result.iterations_run = iteration + 1;

        if (!std::isfinite(row.mean_reward)) {
            result.diverged = true;
            result.note = "mean reward non-finite at iteration " + std::to_string(iteration);
            break;
        }
        if (std::isfinite(first_metric) && std::isfinite(last_metric) &&
            std::abs(last_metric) > 10.0 * std::abs(first_metric) + 1e-9 &&
            last_metric > first_metric) {
            result.diverged = true;
            result.note = "eval metric worsened 10x at iteration " + std::to_string(iteration);
            break;
        }
    }
    return result;
}

}  // namespace gensched
