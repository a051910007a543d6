#pragma once

// The three reward designs: adversarial reward model (a small class-
// conditional MLP discriminator), an analytic fidelity proxy built on exact
// log-densities, and the batch-statistical metric reward.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gensched/metrics.hpp"
#include "gensched/net.hpp"
#include "gensched/samplers.hpp"

namespace gensched {

enum class RewardKind { Adversarial, FidelityProxy, Metric };

inline RewardKind reward_kind_from_name(const std::string& s) {
    if (s == "adversarial") return RewardKind::Adversarial;
    if (s == "fidelity_proxy") return RewardKind::FidelityProxy;
    if (s == "metric") return RewardKind::Metric;
    throw std::invalid_argument("unknown reward kind: " + s);
}

inline std::string reward_kind_name(RewardKind k) {
    switch (k) {
        case RewardKind::Adversarial: return "adversarial";
        case RewardKind::FidelityProxy: return "fidelity_proxy";
        case RewardKind::Metric: return "metric";
    }
    throw std::logic_error("reward_kind_name: unreachable");
}

// Discriminator input: flattened final sample plus a class one-hot.
// Discrete grids flatten to per-position token one-hots.
inline int sample_feature_length(Paradigm paradigm, const World& world) {
    if (is_discrete(paradigm))
        return world.discrete->grid_size() * world.discrete->vocab_size() +
               world.discrete->class_count();
    return 2 + world.gmm->class_count();
}

inline std::vector<double> sample_features(Paradigm paradigm, const World& world,
                                           const std::vector<int>& tokens, const Vec2& x,
                                           int class_label) {
    std::vector<double> f(sample_feature_length(paradigm, world), 0.0);
    if (is_discrete(paradigm)) {
        const int v = world.discrete->vocab_size();
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] < 0) throw std::invalid_argument("sample_features: masked token");
            f[i * v + tokens[i]] = 1.0;
        }
        f[world.discrete->grid_size() * v + class_label] = 1.0;
    } else {
        f[0] = x.x;
        f[1] = x.y;
        f[2 + class_label] = 1.0;
    }
    return f;
}

inline std::vector<double> state_sample_features(const State& s, const World& world) {
    return sample_features(s.paradigm, world, s.tokens, s.x, s.class_label);
}

class RewardModel {
public:
    RewardModel() = default;

    RewardModel(int input_length, const std::vector<int>& hidden,
                Activation act = Activation::Tanh) {
        std::vector<int> sizes;
        sizes.push_back(input_length);
        for (int h : hidden) sizes.push_back(h);
        sizes.push_back(1);
        net_ = DenseNet(sizes, act);
    }

    void random_init(RngStream& rng) { net_.random_init(rng); }

    DenseNet& net() { return net_; }
    const DenseNet& net() const { return net_; }

    double logit(const std::vector<double>& features) const {
        return std::clamp(net_.forward(features)[0], -30.0, 30.0);
    }

    // Probability of the sample being deemed real, kept inside (0, 1).
    double reward(const std::vector<double>& features) const {
        const double z = logit(features);
        const double r = 1.0 / (1.0 + std::exp(-z));
        return std::clamp(r, 1e-12, 1.0 - 1e-12);
    }

private:
    DenseNet net_;
};

inline double adv_reward(const RewardModel& model, const State& final_state,
                         const World& world) {
    return model.reward(state_sample_features(final_state, world));
}

// One BCE gradient step with labels real_label (1, or 0.9 with one-sided
// smoothing) and fake = 0. Returns the pre-update mean loss over the union
// of both batches; skips the update (returns the loss, flag through the
// optimizer) on a non-finite loss.
inline double disc_update(RewardModel& model, const std::vector<std::vector<double>>& real_batch,
                          const std::vector<std::vector<double>>& fake_batch, OptState& opt,
                          double real_label = 1.0) {
    if (real_batch.empty() || fake_batch.empty())
        throw std::invalid_argument("disc_update: empty batch");
    const std::size_t n = real_batch.size() + fake_batch.size();
    GradVector grad(model.net().param_count(), 0.0);
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(n);
    const auto accumulate = [&](const std::vector<double>& features, double label) {
        const double z = model.logit(features);
        const double r = std::clamp(1.0 / (1.0 + std::exp(-z)), 1e-12, 1.0 - 1e-12);
        loss += -(label * std::log(r) + (1.0 - label) * std::log(1.0 - r)) * scale;
        // d BCE / d logit = r - label
        model.net().backward_accumulate(features, -1, {1.0}, grad, (r - label) * scale);
    };
    for (const auto& f : real_batch) accumulate(f, real_label);
    for (const auto& f : fake_batch) accumulate(f, 0.0);
    if (std::isfinite(loss)) adam_step(model.net().params(), grad, opt);
    return loss;
}

// Monotone squash of the exact conditional log-density, centered so the
// median target sample scores 0.5. Median and scale come from 1e4 seeded
// target draws.
struct FidelityStats {
    double median_logp = 0.0;
    double scale = 1.0;
};

inline FidelityStats compute_fidelity_stats(Paradigm paradigm, const World& world,
                                            std::uint64_t seed, int n_samples = 10000) {
    RngStream rng = derive_stream(seed, stream_tag("fidelity_stats"));
    const int c = world.class_count();
    std::vector<double> logps;
    logps.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const int cls = static_cast<int>(rng.uniform_int(c));
        if (is_discrete(paradigm)) {
            logps.push_back(world.discrete->log_density(world.discrete->sample(cls, rng), cls));
        } else {
            logps.push_back(world.gmm->log_density(world.gmm->sample(cls, rng), cls));
        }
    }
    std::vector<double> sorted(logps);
    std::sort(sorted.begin(), sorted.end());
    FidelityStats stats;
    stats.median_logp = sorted[sorted.size() / 2];
    double var = 0.0, mean = 0.0;
    for (double lp : logps) mean += lp;
    mean /= logps.size();
    for (double lp : logps) var += (lp - mean) * (lp - mean);
    stats.scale = std::max(std::sqrt(var / logps.size()), 1e-6);
    return stats;
}

inline double fidelity_reward(Paradigm paradigm, const World& world, const State& final_state,
                              const FidelityStats& stats) {
    const double lp = is_discrete(paradigm)
                          ? world.discrete->log_density(final_state.tokens,
                                                        final_state.class_label)
                          : world.gmm->log_density(final_state.x, final_state.class_label);
    return 1.0 / (1.0 + std::exp(-(lp - stats.median_logp) / stats.scale));
}

// Batch-statistical reward: negative Frechet distance to the reference
// statistics, attached identically to every trajectory in the batch.
inline double metric_reward(const std::vector<Vec2>& sample_set,
                            const GaussianFit& reference, bool* degenerate_flag = nullptr) {
    if (sample_set.size() < kFrechetMinSamples)
        throw std::invalid_argument("metric_reward: need at least 32 samples");
    GaussianFit fit = fit_gaussian(sample_set);
    if (degenerate_flag) *degenerate_flag = fit.cov.det() <= kFrechetCovReg * kFrechetCovReg;
    return -frechet_from_fits(fit, reference);
}

}  // namespace gensched
