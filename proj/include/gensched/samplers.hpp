#pragma once

// MDP environments: one transition function per paradigm, consuming activated
// actions and producing next states. Transitions are pure given
// (state, action, world, rng stream): trajectories parallelize freely.

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "gensched/actions.hpp"
#include "gensched/worlds.hpp"

namespace gensched {

// kappa level at which flow integration stops before snapping to 0; the
// conditional velocity is degenerate at exactly 0.
inline constexpr double kFlowDelta = 1e-3;

struct World {
    std::shared_ptr<const DiscreteWorld> discrete;
    std::shared_ptr<const GmmWorld> gmm;

    int class_count() const {
        if (discrete) return discrete->class_count();
        if (gmm) return gmm->class_count();
        throw std::runtime_error("World: empty");
    }
};

struct State {
    Paradigm paradigm = Paradigm::Diffusion;
    int t = 0;
    int class_label = 0;
    std::vector<int> tokens;  // maskgit: grid with -1 = masked; ar: prefix (size == t)
    Vec2 x;
    double kappa = 0.0;

    int masked_count() const {
        int n = 0;
        for (int tok : tokens) n += tok < 0 ? 1 : 0;
        return n;
    }
};

// Classifier-free guidance: (1+w)*cond - w*uncond, elementwise.
inline std::vector<double> guide(const std::vector<double>& cond,
                                 const std::vector<double>& uncond, double w) {
    if (cond.size() != uncond.size()) throw std::invalid_argument("guide: shape mismatch");
    if (w < 0.0) throw std::invalid_argument("guide: w must be nonnegative");
    std::vector<double> out(cond.size());
    for (std::size_t i = 0; i < cond.size(); ++i)
        out[i] = (1.0 + w) * cond[i] - w * uncond[i];
    return out;
}

inline Vec2 guide(const Vec2& cond, const Vec2& uncond, double w) {
    if (w < 0.0) throw std::invalid_argument("guide: w must be nonnegative");
    return cond * (1.0 + w) - uncond * w;
}

namespace sampler_detail {

// Softmax of guided log-conditionals at temperature tau; tau below 1e-12 is
// treated as greedy argmax.
inline std::vector<double> guided_softmax(const std::vector<double>& cond,
                                          const std::vector<double>& uncond, double tau,
                                          double w) {
    const std::size_t v = cond.size();
    std::vector<double> lc(v), lu(v);
    for (std::size_t i = 0; i < v; ++i) {
        lc[i] = std::log(cond[i]);
        lu[i] = std::log(uncond[i]);
    }
    std::vector<double> logits = guide(lc, lu, w);
    std::vector<double> probs(v, 0.0);
    if (tau < 1e-12) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v; ++i)
            if (logits[i] > logits[best]) best = i;
        probs[best] = 1.0;
        return probs;
    }
    for (double& l : logits) l /= tau;
    const double lse = logsumexp(logits.data(), logits.size());
    for (std::size_t i = 0; i < v; ++i) probs[i] = std::exp(logits[i] - lse);
    return probs;
}

// Top-k then top-p truncation of a probability vector, renormalized.
// The most probable token always survives.
inline void truncate_top_k_p(std::vector<double>& probs, int k, double rho) {
    const int v = static_cast<int>(probs.size());
    if (k < 1) throw std::invalid_argument("truncate_top_k_p: k must be >= 1");
    k = std::min(k, v);
    std::vector<int> order(v);
    for (int i = 0; i < v; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[a] > probs[b]; });
    double topk_mass = 0.0;
    for (int r = 0; r < k; ++r) topk_mass += probs[order[r]];
    if (!(topk_mass > 0.0)) throw std::runtime_error("truncate_top_k_p: empty support");

    double cum_before = 0.0;
    for (int r = 0; r < v; ++r) {
        const int idx = order[r];
        if (r >= k) {
            probs[idx] = 0.0;
            continue;
        }
        const double pr = probs[idx] / topk_mass;
        if (r > 0 && cum_before >= rho - 1e-12) probs[idx] = 0.0;
        cum_before += pr;
    }
    double total = 0.0;
    for (double p : probs) total += p;
    for (double& p : probs) p /= total;
}

}  // namespace sampler_detail

inline State initial_state(Paradigm paradigm, const World& world, int class_label,
                           RngStream& rng) {
    State s;
    s.paradigm = paradigm;
    s.t = 0;
    s.class_label = class_label;
    switch (paradigm) {
        case Paradigm::MaskGit:
            s.tokens.assign(world.discrete->grid_size(), -1);
            break;
        case Paradigm::Autoregressive:
            break;
        case Paradigm::Diffusion:
            s.x = {rng.gaussian(), rng.gaussian()};
            s.kappa = world.gmm->kappa_max();
            break;
        case Paradigm::Flow:
            s.x = {rng.gaussian(), rng.gaussian()};
            s.kappa = 1.0;
            break;
    }
    return s;
}

// Parallel decode of every masked position followed by confidence-ranked
// committing: exactly n_mask(t+1) = min(round(m*G), masked-1) positions stay
// masked (0 at the final step). Confidence is the log-probability of the
// sampled token under its post-guidance, post-temperature distribution,
// perturbed by zeta * Gumbel(0,1).
inline State maskgit_transition(const State& state, const Action& action, const World& world,
                                RngStream& rng, int horizon) {
    const DiscreteWorld& dw = *world.discrete;
    if (state.t >= horizon) throw std::invalid_argument("maskgit_transition: t == T");
    std::vector<int> masked;
    for (int i = 0; i < dw.grid_size(); ++i)
        if (state.tokens[i] < 0) masked.push_back(i);
    if (masked.empty()) throw std::invalid_argument("maskgit_transition: nothing masked");

    const int u = static_cast<int>(masked.size());
    struct Draw {
        int pos;
        int token;
        double perturbed_conf;
    };
    std::vector<Draw> draws(u);
    for (int i = 0; i < u; ++i) {
        const std::vector<double> probs = sampler_detail::guided_softmax(
            dw.token_conditional(state.tokens, state.class_label, masked[i]),
            dw.token_conditional_uncond(state.tokens, masked[i]), action.tau, action.w);
        const int tok = static_cast<int>(rng.categorical(probs));
        double conf = std::log(std::max(probs[tok], 1e-300));
        if (action.zeta > 0.0) conf += action.zeta * rng.gumbel();
        draws[i] = {masked[i], tok, conf};
    }

    // keep at least one masked position per remaining step so every
    // trajectory lasts exactly T transitions (requires G >= T); the progress
    // cap u-1 wins if a state arrives with too few masked positions
    int n_next = static_cast<int>(std::llround(action.m * dw.grid_size()));
    if (state.t + 1 == horizon) n_next = 0;
    else n_next = std::max(n_next, horizon - (state.t + 1));
    n_next = std::min(n_next, u - 1);
    n_next = std::max(n_next, 0);

    std::vector<int> order(u);
    for (int i = 0; i < u; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return draws[a].perturbed_conf > draws[b].perturbed_conf;
    });

    State next = state;
    next.t += 1;
    for (int r = 0; r < u - n_next; ++r)
        next.tokens[draws[order[r]].pos] = draws[order[r]].token;
    return next;
}

// Samples token t+1 from the guided exact conditional after temperature,
// top-k, and nucleus truncation.
inline State ar_transition(const State& state, const Action& action, const World& world,
                           RngStream& rng) {
    const DiscreteWorld& dw = *world.discrete;
    if (state.t >= dw.grid_size()) throw std::invalid_argument("ar_transition: sequence complete");
    if (action.k < 1) throw std::invalid_argument("ar_transition: k < 1");
    std::vector<double> probs = sampler_detail::guided_softmax(
        dw.ar_conditional(state.tokens, state.class_label),
        dw.ar_conditional_uncond(state.tokens), action.tau, action.w);
    sampler_detail::truncate_top_k_p(probs, action.k, action.rho);
    State next = state;
    next.t += 1;
    next.tokens.push_back(static_cast<int>(rng.categorical(probs)));
    return next;
}

// First-order deterministic update (DDIM form): reconstruct x0 from the
// guided exact noise prediction and re-noise to the next alpha-bar level.
inline State diffusion_transition(const State& state, const Action& action, const World& world,
                                  int horizon) {
    const GmmWorld& gw = *world.gmm;
    if (state.t >= horizon) throw std::invalid_argument("diffusion_transition: t == T");
    if (!(action.kappa_next < state.kappa) || action.kappa_next < 0.0)
        throw std::invalid_argument("diffusion_transition: kappa must strictly decrease");
    const double kappa = state.kappa;
    const Vec2 eps = guide(gw.eps_score(state.x, kappa, state.class_label),
                           gw.eps_score(state.x, kappa, -1), action.w);
    const double ab = gw.alpha_bar(kappa);
    const double ab_next = gw.alpha_bar(action.kappa_next);
    const Vec2 x0 = (state.x - eps * std::sqrt(1.0 - ab)) * (1.0 / std::sqrt(ab));
    State next = state;
    next.t += 1;
    next.kappa = action.kappa_next;
    next.x = x0 * std::sqrt(ab_next) + eps * std::sqrt(1.0 - ab_next);
    return next;
}

// Euler step on the guided exact velocity field; the final step integrates to
// kFlowDelta and snaps kappa to 0.
inline State flow_transition(const State& state, const Action& action, const World& world,
                             int horizon) {
    const GmmWorld& gw = *world.gmm;
    if (state.t >= horizon) throw std::invalid_argument("flow_transition: t == T");
    if (!(action.kappa_next < state.kappa) || action.kappa_next < kFlowDelta)
        throw std::invalid_argument("flow_transition: kappa must strictly decrease");
    const Vec2 v = guide(gw.velocity(state.x, state.kappa, state.class_label),
                         gw.velocity(state.x, state.kappa, -1), action.w);
    State next = state;
    next.t += 1;
    next.x = state.x + v * (action.kappa_next - state.kappa);
    next.kappa = (state.t + 1 == horizon) ? 0.0 : action.kappa_next;
    return next;
}

inline State transition(const State& state, const Action& action, const World& world,
                        RngStream& rng, int horizon) {
    switch (state.paradigm) {
        case Paradigm::MaskGit: return maskgit_transition(state, action, world, rng, horizon);
        case Paradigm::Autoregressive: return ar_transition(state, action, world, rng);
        case Paradigm::Diffusion: return diffusion_transition(state, action, world, horizon);
        case Paradigm::Flow: return flow_transition(state, action, world, horizon);
    }
    throw std::logic_error("transition: unreachable");
}

}  // namespace gensched
