#pragma once

// Everything between the raw policy output and the executed action:
// hand-crafted baseline schedules, range-mapping output activations (with a
// hard-clamping ablation arm), EMA action smoothing, and the pre-activation
// schedule-derived initialization biases.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gensched/actions.hpp"
#include "gensched/samplers.hpp"

namespace gensched {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double logit(double p) {
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}
inline double softplus_inv(double y) {
    y = std::max(y, 1e-9);
    return y > 30.0 ? y : std::log(std::expm1(y));
}

// ---------------------------------------------------------------------------
// Baseline scheduling rules
// ---------------------------------------------------------------------------

enum class Rule {
    Constant,          // value = C
    MaskCosine,        // m = cos(0.5 pi t/T)
    MaskArccos,        // m = 2 arccos(t/T) / pi
    TauLinear,         // tau = 0.5 + 0.8 (1 - t/T)
    ZetaLinear,        // zeta = C (1 - t/T)
    GuidanceLinear,    // w = C t/T
    GuidancePowerCos,  // w = C (1 - cos(pi u^C')) / 2, u = t/T (kappa/kmax for diffusion)
    KappaUniform,      // diffusion: floor((1-t/T) kmax); flow: 1 - t/T
    KappaQuadratic,    // diffusion: floor((1-t/T)^2 kmax)
};

inline Rule rule_from_name(const std::string& s) {
    if (s == "const") return Rule::Constant;
    if (s == "cosine") return Rule::MaskCosine;
    if (s == "arccos") return Rule::MaskArccos;
    if (s == "tau_linear") return Rule::TauLinear;
    if (s == "zeta_linear") return Rule::ZetaLinear;
    if (s == "w_linear") return Rule::GuidanceLinear;
    if (s == "w_powercos") return Rule::GuidancePowerCos;
    if (s == "kappa_uniform") return Rule::KappaUniform;
    if (s == "kappa_quadratic") return Rule::KappaQuadratic;
    throw std::invalid_argument("unknown schedule rule: " + s);
}

inline std::string rule_name(Rule r) {
    switch (r) {
        case Rule::Constant: return "const";
        case Rule::MaskCosine: return "cosine";
        case Rule::MaskArccos: return "arccos";
        case Rule::TauLinear: return "tau_linear";
        case Rule::ZetaLinear: return "zeta_linear";
        case Rule::GuidanceLinear: return "w_linear";
        case Rule::GuidancePowerCos: return "w_powercos";
        case Rule::KappaUniform: return "kappa_uniform";
        case Rule::KappaQuadratic: return "kappa_quadratic";
    }
    throw std::logic_error("rule_name: unreachable");
}

// A full per-paradigm schedule: one rule (plus constants) per policy
// coordinate. Unused coordinates are ignored by baseline_action.
struct Schedule {
    Paradigm paradigm = Paradigm::Diffusion;
    Rule mask_rule = Rule::MaskCosine;
    Rule tau_rule = Rule::Constant;
    double tau_c = 1.0;
    Rule zeta_rule = Rule::ZetaLinear;
    double zeta_c = 0.0;
    Rule w_rule = Rule::Constant;
    double w_c = 0.0;
    double w_cp = 1.0;  // C' of the power-cosine rule
    Rule kappa_rule = Rule::KappaUniform;
    int k_c = 1;        // AR top-k constant
    double rho_c = 1.0; // AR top-p constant
    int kappa_max = 1000;
};

namespace schedule_detail {

inline double eval_scalar(Rule rule, double u, double c, double cp) {
    switch (rule) {
        case Rule::Constant: return c;
        case Rule::MaskCosine: return std::cos(1.5707963267948966 * u);
        case Rule::MaskArccos: return 2.0 * std::acos(std::clamp(u, 0.0, 1.0)) / 3.14159265358979323846;
        case Rule::TauLinear: return 0.5 + 0.8 * (1.0 - u);
        case Rule::ZetaLinear: return c * (1.0 - u);
        case Rule::GuidanceLinear: return c * u;
        case Rule::GuidancePowerCos:
            return c * (1.0 - std::cos(3.14159265358979323846 * std::pow(u, cp))) / 2.0;
        default: throw std::invalid_argument("schedule rule not valid for this coordinate");
    }
}

inline double eval_kappa(Rule rule, double u, int kappa_max, Paradigm paradigm) {
    const double rest = 1.0 - u;
    switch (rule) {
        case Rule::KappaUniform:
            return paradigm == Paradigm::Flow ? rest : std::floor(rest * kappa_max);
        case Rule::KappaQuadratic:
            if (paradigm == Paradigm::Flow)
                throw std::invalid_argument("kappa_quadratic is a diffusion rule");
            return std::floor(rest * rest * kappa_max);
        default: throw std::invalid_argument("schedule rule not valid for kappa");
    }
}

}  // namespace schedule_detail

// Evaluates the named Table-style rules at literal t in [0, T]. The baseline
// rollout driver calls this with t+1 for the action taken at 0-based step t,
// so final steps land on m=0 / kappa=0 exactly.
inline Action baseline_action(const Schedule& s, int t, int horizon) {
    if (t < 0 || t > horizon) throw std::invalid_argument("baseline_action: t out of [0, T]");
    const double u = static_cast<double>(t) / horizon;
    Action a;
    switch (s.paradigm) {
        case Paradigm::MaskGit: {
            a.m = schedule_detail::eval_scalar(s.mask_rule, u, 0.0, 0.0);
            a.tau = schedule_detail::eval_scalar(s.tau_rule, u, s.tau_c, 0.0);
            a.zeta = schedule_detail::eval_scalar(s.zeta_rule, u, s.zeta_c, 0.0);
            a.w = schedule_detail::eval_scalar(s.w_rule, u, s.w_c, s.w_cp);
            break;
        }
        case Paradigm::Autoregressive: {
            a.tau = schedule_detail::eval_scalar(s.tau_rule, u, s.tau_c, 0.0);
            a.w = schedule_detail::eval_scalar(s.w_rule, u, s.w_c, s.w_cp);
            a.k = s.k_c;
            a.rho = s.rho_c;
            break;
        }
        case Paradigm::Diffusion:
        case Paradigm::Flow: {
            a.kappa_next = schedule_detail::eval_kappa(s.kappa_rule, u, s.kappa_max, s.paradigm);
            const double wu = s.w_rule == Rule::GuidancePowerCos && s.paradigm == Paradigm::Diffusion
                                  ? a.kappa_next / s.kappa_max
                                  : u;
            a.w = schedule_detail::eval_scalar(s.w_rule, wu, s.w_c, s.w_cp);
            break;
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// EMA action smoothing: a_t = beta a_{t-1} + (1 - beta) a~_t, a_0 = a~_0
// ---------------------------------------------------------------------------

class EmaSmoother {
public:
    explicit EmaSmoother(double beta) : beta_(beta) {
        if (beta < 0.0 || beta > 1.0)
            throw std::invalid_argument("EmaSmoother: beta outside [0, 1]");
    }

    std::vector<double> step(const std::vector<double>& raw) {
        if (!primed_) {
            prev_ = raw;
            primed_ = true;
            return raw;
        }
        if (raw.size() != prev_.size()) throw std::invalid_argument("EmaSmoother: size change");
        for (std::size_t i = 0; i < raw.size(); ++i)
            prev_[i] = beta_ * prev_[i] + (1.0 - beta_) * raw[i];
        return prev_;
    }

    double beta() const { return beta_; }

private:
    double beta_;
    std::vector<double> prev_;
    bool primed_ = false;
};

// ---------------------------------------------------------------------------
// Output activations (and the hard-clamp ablation arm)
// ---------------------------------------------------------------------------

struct ActivationContext {
    int t = 0;        // 0-based step taking this action
    int horizon = 1;  // T
    double kappa_current = 0.0;
    int kappa_max = 1000;
    int vocab = 2;
};

namespace activate_detail {

// Feasible kappa window for the action at step t: every remaining step keeps
// a strictly decreasing option, and the final step is forced to the terminal
// level (0 on the diffusion grid, kFlowDelta pre-snap for flow).
inline double kappa_bounds(Paradigm p, const ActivationContext& ctx, double& lo, double& hi) {
    if (p == Paradigm::Diffusion) {
        lo = static_cast<double>(ctx.horizon - (ctx.t + 1));
        hi = ctx.kappa_current - 1.0;
        return 0.0;
    }
    lo = kFlowDelta * (ctx.horizon - ctx.t);
    hi = ctx.kappa_current * (1.0 - 1e-9);
    return kFlowDelta;
}

}  // namespace activate_detail

// Smooth range mapping: sigmoid for m and rho, softplus for tau/zeta/w,
// round(1 + softplus) for k; the ODE timestep is parameerized as a fraction
// of the current level, kappa_next = kappa_current * sigmoid(raw).
inline Action activate(const std::vector<double>& raw, Paradigm paradigm,
                       const ActivationContext& ctx) {
    if (raw.size() != static_cast<std::size_t>(action_dim(paradigm)))
        throw std::invalid_argument("activate: raw action dimension mismatch");
    Action a;
    switch (paradigm) {
        case Paradigm::MaskGit:
            a.m = sigmoid(raw[0]);
            a.tau = softplus(raw[1]);
            a.zeta = softplus(raw[2]);
            a.w = softplus(raw[3]);
            break;
        case Paradigm::Autoregressive:
            a.tau = softplus(raw[0]);
            a.w = softplus(raw[1]);
            a.k = std::clamp(static_cast<int>(std::llround(1.0 + softplus(raw[2]))), 1, ctx.vocab);
            a.rho = sigmoid(raw[3]);
            break;
        case Paradigm::Diffusion: {
            double lo, hi;
            const double terminal = activate_detail::kappa_bounds(paradigm, ctx, lo, hi);
            if (ctx.t + 1 >= ctx.horizon) {
                a.kappa_next = terminal;
            } else {
                const double frac = ctx.kappa_current * sigmoid(raw[0]);
                a.kappa_next = std::clamp(static_cast<double>(std::llround(frac)), lo, hi);
            }
            a.w = softplus(raw[1]);
            break;
        }
        case Paradigm::Flow: {
            double lo, hi;
            const double terminal = activate_detail::kappa_bounds(paradigm, ctx, lo, hi);
            a.kappa_next = ctx.t + 1 >= ctx.horizon
                               ? terminal
                               : std::clamp(ctx.kappa_current * sigmoid(raw[0]), lo, hi);
            a.w = softplus(raw[1]);
            break;
        }
    }
    return a;
}

// Ablation arm: raw values are clipped straight into the valid ranges.
inline Action clamp_variant(const std::vector<double>& raw, Paradigm paradigm,
                            const ActivationContext& ctx) {
    if (raw.size() != static_cast<std::size_t>(action_dim(paradigm)))
        throw std::invalid_argument("clamp_variant: raw action dimension mismatch");
    Action a;
    switch (paradigm) {
        case Paradigm::MaskGit:
            a.m = std::clamp(raw[0], 0.0, 1.0);
            a.tau = std::max(raw[1], 0.0);
            a.zeta = std::max(raw[2], 0.0);
            a.w = std::max(raw[3], 0.0);
            break;
        case Paradigm::Autoregressive:
            a.tau = std::max(raw[0], 0.0);
            a.w = std::max(raw[1], 0.0);
            a.k = std::clamp(static_cast<int>(std::llround(raw[2])), 1, ctx.vocab);
            a.rho = std::clamp(raw[3], 0.0, 1.0);
            break;
        case Paradigm::Diffusion:
        case Paradigm::Flow: {
            double lo, hi;
            const double terminal = activate_detail::kappa_bounds(paradigm, ctx, lo, hi);
            if (ctx.t + 1 >= ctx.horizon) {
                a.kappa_next = terminal;
            } else if (paradigm == Paradigm::Diffusion) {
                a.kappa_next = std::clamp(static_cast<double>(std::llround(raw[0])), lo, hi);
            } else {
                a.kappa_next = std::clamp(raw[0], lo, hi);
            }
            a.w = std::max(raw[1], 0.0);
            break;
        }
    }
    return a;
}

// Pre-activation biases that make a zero raw output reproduce the given
// baseline schedule (the "heuristics as initialization" of the training
// pipeline). Computed against the schedule at paper-step t+1.
inline std::vector<double> init_bias(const Schedule& schedule, int t, int horizon) {
    const Action target = baseline_action(schedule, std::min(t + 1, horizon), horizon);
    switch (schedule.paradigm) {
        case Paradigm::MaskGit:
            return {logit(std::clamp(target.m, 1e-4, 1.0 - 1e-4)), softplus_inv(target.tau),
                    softplus_inv(std::max(target.zeta, 1e-3)),
                    softplus_inv(std::max(target.w, 1e-3))};
        case Paradigm::Autoregressive:
            return {softplus_inv(target.tau), softplus_inv(std::max(target.w, 1e-3)),
                    softplus_inv(std::max(target.k - 1.0, 1e-3)),
                    logit(std::clamp(target.rho, 1e-4, 1.0 - 1e-4))};
        case Paradigm::Diffusion:
        case Paradigm::Flow: {
            const Action prev = baseline_action(schedule, t, horizon);
            const double cur = std::max(prev.kappa_next, 1e-9);
            const double ratio = std::clamp(target.kappa_next / cur, 1e-4, 1.0 - 1e-4);
            return {logit(ratio), softplus_inv(std::max(target.w, 1e-3))};
        }
    }
    throw std::logic_error("init_bias: unreachable");
}

}  // namespace gensched
