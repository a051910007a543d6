#pragma once

// Run configuration: JSON parsing with defaults, strict unknown-key
// rejection, named-field diagnostics, and lossless re-serialization.

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gensched/actions.hpp"
#include "gensched/transforms.hpp"

namespace gensched {

using json = nlohmann::json;

struct WorldConfig {
    int grid_size = 4;
    int vocab_size = 3;
    int class_count = 4;
    int components_max = 3;  // continuous worlds
    int kappa_max = 1000;
    double delta = 1e-4;
    std::uint64_t seed = 0;
};

struct AgentSettings {
    std::vector<int> hidden{64, 64};
    double sigma = 0.6;
    bool adaptive = true;
    bool step_cond = true;
    bool clamp_actions = false;
    bool heuristic_init = true;
    std::string activation = "tanh";
};

struct PpoSettings {
    double clip_eps = 0.2;
    double value_coef = 0.5;
    int rollout_batch = 128;
    int disc_batch = 128;
    int policy_updates = 5;
    int disc_updates = 5;
    int iterations = 200;
    double policy_lr = 3e-3;
    double disc_lr = 1e-3;
    bool normalize_adv = false;
};

struct RewardSettings {
    std::string kind = "adversarial";
    std::vector<int> disc_hidden{128, 128};
    double real_label = 1.0;  // 0.9 = one-sided label smoothing
};

struct ScheduleSettings {
    std::string mask_rule = "cosine";
    std::string tau_rule = "const";
    double tau_c = 1.0;
    std::string zeta_rule = "zeta_linear";
    double zeta_c = 0.5;
    std::string w_rule = "const";
    double w_c = 0.0;
    double w_cp = 1.0;
    std::string kappa_rule = "kappa_uniform";
    int k_c = 0;  // 0 resolves to the vocabulary size
    double rho_c = 1.0;
};

struct RefineSettings {
    int m = 3;
    int k = 2;
    bool lookahead = false;
};

struct EvalSettings {
    int samples = 2048;  // per class
    int every = 10;
    double mode_radius = 3.0;
};

struct RunConfig {
    std::string paradigm = "diffusion";
    int horizon = 4;  // T
    std::uint64_t seed = 0;
    double beta = 0.8;  // action smoothing weight
    std::string out_dir = ".";
    int threads = 0;
    int checkpoint_every = 0;
    WorldConfig world;
    AgentSettings agent;
    PpoSettings ppo;
    RewardSettings reward;
    ScheduleSettings schedule;
    RefineSettings refine;
    EvalSettings eval;

    Paradigm paradigm_enum() const { return paradigm_from_name(paradigm); }
};

namespace config_detail {

inline void expect_keys(const json& j, const std::set<std::string>& known,
                        const std::string& scope) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw std::invalid_argument("config: unknown key \"" +
                                        (scope.empty() ? key : scope + "." + key) + "\"");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void fail(const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: field \"" + field + "\" " + why);
}

}  // namespace config_detail

inline RunConfig parse_run_config(const json& j) {
    using namespace config_detail;
    RunConfig cfg;
    expect_keys(j,
                {"paradigm", "T", "seed", "beta", "out_dir", "threads", "checkpoint_every",
                 "world", "agent", "ppo", "reward", "schedule", "refine", "eval"},
                "");
    read(j, "paradigm", cfg.paradigm);
    read(j, "T", cfg.horizon);
    read(j, "seed", cfg.seed);
    read(j, "beta", cfg.beta);
    read(j, "out_dir", cfg.out_dir);
    read(j, "threads", cfg.threads);
    read(j, "checkpoint_every", cfg.checkpoint_every);

    if (j.contains("world")) {
        const json& w = j.at("world");
        expect_keys(w,
                    {"grid_size", "vocab_size", "class_count", "components_max", "kappa_max",
                     "delta", "seed"},
                    "world");
        read(w, "grid_size", cfg.world.grid_size);
        read(w, "vocab_size", cfg.world.vocab_size);
        read(w, "class_count", cfg.world.class_count);
        read(w, "components_max", cfg.world.components_max);
        read(w, "kappa_max", cfg.world.kappa_max);
        read(w, "delta", cfg.world.delta);
        read(w, "seed", cfg.world.seed);
    }
    if (j.contains("agent")) {
        const json& a = j.at("agent");
        expect_keys(a,
                    {"hidden", "sigma", "adaptive", "step_cond", "clamp_actions",
                     "heuristic_init", "activation"},
                    "agent");
        read(a, "hidden", cfg.agent.hidden);
        read(a, "sigma", cfg.agent.sigma);
        read(a, "adaptive", cfg.agent.adaptive);
        read(a, "step_cond", cfg.agent.step_cond);
        read(a, "clamp_actions", cfg.agent.clamp_actions);
        read(a, "heuristic_init", cfg.agent.heuristic_init);
        read(a, "activation", cfg.agent.activation);
    }
    if (j.contains("ppo")) {
        const json& p = j.at("ppo");
        expect_keys(p,
                    {"clip_eps", "value_coef", "rollout_batch", "disc_batch", "policy_updates",
                     "disc_updates", "iterations", "policy_lr", "disc_lr", "normalize_adv"},
                    "ppo");
        read(p, "clip_eps", cfg.ppo.clip_eps);
        read(p, "value_coef", cfg.ppo.value_coef);
        read(p, "rollout_batch", cfg.ppo.rollout_batch);
        read(p, "disc_batch", cfg.ppo.disc_batch);
        read(p, "policy_updates", cfg.ppo.policy_updates);
        read(p, "disc_updates", cfg.ppo.disc_updates);
        read(p, "iterations", cfg.ppo.iterations);
        read(p, "policy_lr", cfg.ppo.policy_lr);
        read(p, "disc_lr", cfg.ppo.disc_lr);
        read(p, "normalize_adv", cfg.ppo.normalize_adv);
    }
    if (j.contains("reward")) {
        const json& r = j.at("reward");
        expect_keys(r, {"kind", "disc_hidden", "real_label"}, "reward");
        read(r, "kind", cfg.reward.kind);
        read(r, "disc_hidden", cfg.reward.disc_hidden);
        read(r, "real_label", cfg.reward.real_label);
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        expect_keys(s,
                    {"mask_rule", "tau_rule", "tau_c", "zeta_rule", "zeta_c", "w_rule", "w_c",
                     "w_cp", "kappa_rule", "k_c", "rho_c"},
                    "schedule");
        read(s, "mask_rule", cfg.schedule.mask_rule);
        read(s, "tau_rule", cfg.schedule.tau_rule);
        read(s, "tau_c", cfg.schedule.tau_c);
        read(s, "zeta_rule", cfg.schedule.zeta_rule);
        read(s, "zeta_c", cfg.schedule.zeta_c);
        read(s, "w_rule", cfg.schedule.w_rule);
        read(s, "w_c", cfg.schedule.w_c);
        read(s, "w_cp", cfg.schedule.w_cp);
        read(s, "kappa_rule", cfg.schedule.kappa_rule);
        read(s, "k_c", cfg.schedule.k_c);
        read(s, "rho_c", cfg.schedule.rho_c);
    }
    if (j.contains("refine")) {
        const json& r = j.at("refine");
        expect_keys(r, {"m", "k", "lookahead"}, "refine");
        read(r, "m", cfg.refine.m);
        read(r, "k", cfg.refine.k);
        read(r, "lookahead", cfg.refine.lookahead);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        expect_keys(e, {"samples", "every", "mode_radius"}, "eval");
        read(e, "samples", cfg.eval.samples);
        read(e, "every", cfg.eval.every);
        read(e, "mode_radius", cfg.eval.mode_radius);
    }

    // range validation with named fields
    const Paradigm p = cfg.paradigm_enum();
    if (cfg.horizon < 1) fail("T", "must be >= 1");
    if (cfg.beta < 0.0 || cfg.beta > 1.0) fail("beta", "must lie in [0, 1]");
    if (!(cfg.agent.sigma > 0.0)) fail("agent.sigma", "must be positive");
    if (!(cfg.ppo.clip_eps > 0.0)) fail("ppo.clip_eps", "must be positive");
    if (cfg.ppo.value_coef < 0.0) fail("ppo.value_coef", "must be nonnegative");
    if (cfg.ppo.rollout_batch < 1) fail("ppo.rollout_batch", "must be >= 1");
    if (cfg.ppo.iterations < 0) fail("ppo.iterations", "must be >= 0");
    if (cfg.agent.activation != "tanh" && cfg.agent.activation != "relu")
        fail("agent.activation", "must be tanh or relu");
    reward_kind_from_name(cfg.reward.kind);
    if (cfg.world.class_count < 1) fail("world.class_count", "must be >= 1");
    if (is_discrete(p)) {
        if (cfg.world.grid_size < 1) fail("world.grid_size", "must be >= 1");
        if (cfg.world.vocab_size < 2) fail("world.vocab_size", "must be >= 2");
        if (p == Paradigm::Autoregressive && cfg.horizon != cfg.world.grid_size)
            fail("T", "must equal world.grid_size for the ar paradigm");
        if (p == Paradigm::MaskGit && cfg.horizon > cfg.world.grid_size)
            fail("T", "must not exceed world.grid_size for the maskgit paradigm");
        if (cfg.reward.kind == "metric")
            fail("reward.kind", "metric reward is continuous-only (Frechet-based)");
    } else {
        if (p == Paradigm::Diffusion && cfg.horizon > cfg.world.kappa_max)
            fail("T", "must not exceed world.kappa_max for the diffusion paradigm");
        if (!(cfg.world.delta > 0.0 && cfg.world.delta < 0.5))
            fail("world.delta", "must lie in (0, 0.5)");
    }
    // the batch-statistical reward carries no sample-wise signal and is
    // paired with the non-adaptive policy variant
    if (cfg.reward.kind == "metric" && cfg.agent.adaptive)
        fail("reward.kind", "metric reward requires agent.adaptive = false");
    if (cfg.refine.m < 0) fail("refine.m", "must be >= 0");
    if (cfg.refine.k < 1) fail("refine.k", "must be >= 1");
    if (cfg.refine.lookahead && is_ode(p))
        fail("refine.lookahead",
             "requires a stochastic paradigm; the ODE state transition is deterministic");
    return cfg;
}

inline json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["paradigm"] = cfg.paradigm;
    j["T"] = cfg.horizon;
    j["seed"] = cfg.seed;
    j["beta"] = cfg.beta;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["world"] = {{"grid_size", cfg.world.grid_size},
                  {"vocab_size", cfg.world.vocab_size},
                  {"class_count", cfg.world.class_count},
                  {"components_max", cfg.world.components_max},
                  {"kappa_max", cfg.world.kappa_max},
                  {"delta", cfg.world.delta},
                  {"seed", cfg.world.seed}};
    j["agent"] = {{"hidden", cfg.agent.hidden},
                  {"sigma", cfg.agent.sigma},
                  {"adaptive", cfg.agent.adaptive},
                  {"step_cond", cfg.agent.step_cond},
                  {"clamp_actions", cfg.agent.clamp_actions},
                  {"heuristic_init", cfg.agent.heuristic_init},
                  {"activation", cfg.agent.activation}};
    j["ppo"] = {{"clip_eps", cfg.ppo.clip_eps},
                {"value_coef", cfg.ppo.value_coef},
                {"rollout_batch", cfg.ppo.rollout_batch},
                {"disc_batch", cfg.ppo.disc_batch},
                {"policy_updates", cfg.ppo.policy_updates},
                {"disc_updates", cfg.ppo.disc_updates},
                {"iterations", cfg.ppo.iterations},
                {"policy_lr", cfg.ppo.policy_lr},
                {"disc_lr", cfg.ppo.disc_lr},
                {"normalize_adv", cfg.ppo.normalize_adv}};
    j["reward"] = {{"kind", cfg.reward.kind},
                   {"disc_hidden", cfg.reward.disc_hidden},
                   {"real_label", cfg.reward.real_label}};
    j["schedule"] = {{"mask_rule", cfg.schedule.mask_rule},
                     {"tau_rule", cfg.schedule.tau_rule},
                     {"tau_c", cfg.schedule.tau_c},
                     {"zeta_rule", cfg.schedule.zeta_rule},
                     {"zeta_c", cfg.schedule.zeta_c},
                     {"w_rule", cfg.schedule.w_rule},
                     {"w_c", cfg.schedule.w_c},
                     {"w_cp", cfg.schedule.w_cp},
                     {"kappa_rule", cfg.schedule.kappa_rule},
                     {"k_c", cfg.schedule.k_c},
                     {"rho_c", cfg.schedule.rho_c}};
    j["refine"] = {{"m", cfg.refine.m}, {"k", cfg.refine.k}, {"lookahead", cfg.refine.lookahead}};
    j["eval"] = {{"samples", cfg.eval.samples},
                 {"every", cfg.eval.every},
                 {"mode_radius", cfg.eval.mode_radius}};
    return j;
}

inline Schedule make_schedule(const RunConfig& cfg) {
    Schedule s;
    s.paradigm = cfg.paradigm_enum();
    s.mask_rule = rule_from_name(cfg.schedule.mask_rule);
    s.tau_rule = rule_from_name(cfg.schedule.tau_rule);
    s.tau_c = cfg.schedule.tau_c;
    s.zeta_rule = rule_from_name(cfg.schedule.zeta_rule);
    s.zeta_c = cfg.schedule.zeta_c;
    s.w_rule = rule_from_name(cfg.schedule.w_rule);
    s.w_c = cfg.schedule.w_c;
    s.w_cp = cfg.schedule.w_cp;
    s.kappa_rule = rule_from_name(cfg.schedule.kappa_rule);
    s.k_c = cfg.schedule.k_c > 0 ? cfg.schedule.k_c : cfg.world.vocab_size;
    s.rho_c = cfg.schedule.rho_c;
    s.kappa_max = cfg.world.kappa_max;
    return s;
}

}  // namespace gensched
