#pragma once

// The adaptive policy: state featurization, deterministic mean head,
// Gaussian exploration wrapper, and the shared-trunk value head.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gensched/net.hpp"
#include "gensched/samplers.hpp"

namespace gensched {

// Feature layout (fixed per config; slots documented for layout tests):
//   [0]                  t / T                     (zeroed when !step_cond)
//   [1 .. T]             step one-hot              (zeroed when !step_cond)
//   [1+T .. 1+T+C)       class one-hot
//   payload (zeroed when !adaptive):
//     ode      [x, y, kappa / kappa_max]
//     maskgit  [mask fraction, value histogram (V, counts/G), mean committed log-prob]
//     ar       [prefix one-hot, G*V slots]
// All entries clamped to [-10, 10].
struct FeatureConfig {
    Paradigm paradigm = Paradigm::Diffusion;
    int horizon = 1;
    int class_count = 1;
    int grid_size = 0;   // discrete paradigms
    int vocab_size = 0;  // discrete paradigms
    bool adaptive = true;
    bool step_cond = true;

    int payload_length() const {
        switch (paradigm) {
            case Paradigm::MaskGit: return 2 + vocab_size;
            case Paradigm::Autoregressive: return grid_size * vocab_size;
            case Paradigm::Diffusion:
            case Paradigm::Flow: return 3;
        }
        return 0;
    }
    int length() const { return 1 + horizon + class_count + payload_length(); }
};

inline std::vector<double> featurize(const State& state, const World& world,
                                     const FeatureConfig& cfg) {
    std::vector<double> f(cfg.length(), 0.0);
    if (cfg.step_cond) {
        f[0] = static_cast<double>(state.t) / cfg.horizon;
        if (state.t < cfg.horizon) f[1 + state.t] = 1.0;
    }
    f[1 + cfg.horizon + state.class_label] = 1.0;

    if (cfg.adaptive) {
        const int base = 1 + cfg.horizon + cfg.class_count;
        switch (cfg.paradigm) {
            case Paradigm::MaskGit: {
                const DiscreteWorld& dw = *world.discrete;
                const int g = dw.grid_size();
                int masked = 0;
                for (int tok : state.tokens) masked += tok < 0 ? 1 : 0;
                f[base] = static_cast<double>(masked) / g;
                double logp_sum = 0.0;
                int committed = 0;
                std::vector<int> loo(state.tokens);
                for (int i = 0; i < g; ++i) {
                    const int tok = state.tokens[i];
                    if (tok < 0) continue;
                    f[base + 1 + tok] += 1.0 / g;
                    loo[i] = -1;
                    logp_sum += std::log(
                        std::max(dw.token_conditional(loo, state.class_label, i)[tok], 1e-300));
                    loo[i] = tok;
                    ++committed;
                }
                f[base + 1 + dw.vocab_size()] = committed > 0 ? logp_sum / committed : 0.0;
                break;
            }
            case Paradigm::Autoregressive: {
                const int v = cfg.vocab_size;
                for (std::size_t i = 0; i < state.tokens.size(); ++i)
                    f[base + static_cast<int>(i) * v + state.tokens[i]] = 1.0;
                break;
            }
            case Paradigm::Diffusion: {
                f[base] = state.x.x;
                f[base + 1] = state.x.y;
                f[base + 2] = state.kappa / world.gmm->kappa_max();
                break;
            }
            case Paradigm::Flow: {
                f[base] = state.x.x;
                f[base + 1] = state.x.y;
                f[base + 2] = state.kappa;
                break;
            }
        }
    }
    for (double& x : f) x = std::clamp(x, -10.0, 10.0);
    return f;
}

struct SampledAction {
    std::vector<double> raw;
    double log_prob = 0.0;
};

// Policy mean, exploration wrapper, and value head over one shared trunk:
// the net's first action_dim outputs are the raw action mean, the last
// output is the value estimate.
class PolicyAgent {
public:
    PolicyAgent() = default;

    PolicyAgent(const FeatureConfig& features, const std::vector<int>& hidden, double sigma,
                Activation act = Activation::Tanh)
        : features_(features), sigma_(sigma) {
        if (!(sigma > 0.0)) throw std::invalid_argument("PolicyAgent: sigma must be positive");
        std::vector<int> sizes;
        sizes.push_back(features.length());
        for (int h : hidden) sizes.push_back(h);
        sizes.push_back(action_dim(features.paradigm) + 1);
        const StepModulationSpec mod{features.step_cond ? features.horizon : 0};
        net_ = DenseNet(sizes, act, mod);
    }

    void random_init(RngStream& rng) { net_.random_init(rng, 0.01); }

    const FeatureConfig& feature_config() const { return features_; }
    DenseNet& net() { return net_; }
    const DenseNet& net() const { return net_; }
    double sigma() const { return sigma_; }
    void set_sigma(double s) { sigma_ = s; }
    int raw_dim() const { return action_dim(features_.paradigm); }

    std::vector<double> policy_mean(const std::vector<double>& features, int t) const {
        const std::vector<double> out = net_.forward(features, mod_step(t));
        return {out.begin(), out.begin() + raw_dim()};
    }

    double value(const std::vector<double>& features, int t) const {
        return net_.forward(features, mod_step(t)).back();
    }

    // One forward for both heads; avoids double work in rollouts/updates.
    void heads(const std::vector<double>& features, int t, std::vector<double>& mean,
               double& value) const {
        const std::vector<double> out = net_.forward(features, mod_step(t));
        mean.assign(out.begin(), out.begin() + raw_dim());
        value = out.back();
    }

    // a~ = mean + sigma z with the diagonal Gaussian log-density at
    // (mean, sigma^2 I); in inference mode the mean is returned directly.
    SampledAction sample_action(const std::vector<double>& mean, RngStream& rng,
                                bool inference = false) const {
        SampledAction s;
        if (inference) {
            s.raw = mean;
            s.log_prob = 0.0;
            return s;
        }
        s.raw.resize(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) s.raw[i] = mean[i] + sigma_ * rng.gaussian();
        s.log_prob = log_prob(mean, s.raw);
        return s;
    }

    double log_prob(const std::vector<double>& mean, const std::vector<double>& raw) const {
        if (mean.size() != raw.size()) throw std::invalid_argument("log_prob: size mismatch");
        double lp = 0.0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double z = (raw[i] - mean[i]) / sigma_;
            lp += -0.918938533204672742 - std::log(sigma_) - 0.5 * z * z;
        }
        return lp;
    }

    int mod_step(int t) const { return features_.step_cond ? t : -1; }

private:
    FeatureConfig features_;
    DenseNet net_;
    double sigma_ = 0.6;
};

}  // namespace gensched
