#pragma once

// Experiment orchestration shared by the CLI and the test suites: world and
// network construction from a RunConfig, the train/eval/baseline/refine/sweep
// commands, report and CSV emission.

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gensched/blend.hpp"
#include "gensched/checkpoint.hpp"
#include "gensched/refine.hpp"
#include "gensched/rl.hpp"

namespace gensched {

struct RunBundle {
    RunConfig cfg;
    World world;
    PolicyAgent agent;
    RewardModel disc;
    OptState agent_opt, disc_opt;
    std::optional<PolicyAgent> fidelity;
    OptState fidelity_opt;
    FidelityStats fidelity_stats;
    GaussianFit metric_ref;  // pooled reference for the metric reward
    long iteration = 0;
};

inline World build_world(const RunConfig& cfg) {
    World world;
    if (is_discrete(cfg.paradigm_enum())) {
        world.discrete = std::make_shared<DiscreteWorld>(
            cfg.world.grid_size, cfg.world.vocab_size, cfg.world.class_count, cfg.world.seed);
    } else {
        world.gmm = std::make_shared<GmmWorld>(
            GmmWorld::random(cfg.world.class_count, cfg.world.components_max, cfg.world.seed,
                             cfg.world.kappa_max, cfg.world.delta));
    }
    return world;
}

inline FeatureConfig make_feature_config(const RunConfig& cfg) {
    FeatureConfig fc;
    fc.paradigm = cfg.paradigm_enum();
    fc.horizon = cfg.horizon;
    fc.class_count = cfg.world.class_count;
    fc.grid_size = cfg.world.grid_size;
    fc.vocab_size = cfg.world.vocab_size;
    fc.adaptive = cfg.agent.adaptive;
    fc.step_cond = cfg.agent.step_cond;
    return fc;
}

inline RolloutSpec make_rollout_spec(const RunConfig& cfg) {
    RolloutSpec spec;
    spec.paradigm = cfg.paradigm_enum();
    spec.horizon = cfg.horizon;
    spec.beta = cfg.beta;
    spec.heuristic_init = cfg.agent.heuristic_init;
    spec.init_schedule = make_schedule(cfg);
    spec.clamp_actions = cfg.agent.clamp_actions;
    return spec;
}

inline TrainSpec make_train_spec(const RunConfig& cfg) {
    TrainSpec spec;
    spec.paradigm = cfg.paradigm_enum();
    spec.horizon = cfg.horizon;
    spec.iterations = cfg.ppo.iterations;
    spec.rollout_batch = cfg.ppo.rollout_batch;
    spec.disc_batch = cfg.ppo.disc_batch;
    spec.policy_updates = cfg.ppo.policy_updates;
    spec.disc_updates = cfg.ppo.disc_updates;
    spec.clip_eps = cfg.ppo.clip_eps;
    spec.value_coef = cfg.ppo.value_coef;
    spec.normalize_adv = cfg.ppo.normalize_adv;
    spec.policy_lr = cfg.ppo.policy_lr;
    spec.disc_lr = cfg.ppo.disc_lr;
    spec.real_label = cfg.reward.real_label;
    spec.reward_kind = reward_kind_from_name(cfg.reward.kind);
    spec.rollout = make_rollout_spec(cfg);
    spec.eval_every = cfg.eval.every;
    spec.eval_samples = std::min(cfg.eval.samples, 128);
    spec.threads = cfg.threads;
    spec.seed = cfg.seed;
    return spec;
}

inline Activation activation_from_name(const std::string& s) {
    return s == "relu" ? Activation::Relu : Activation::Tanh;
}

inline RunBundle build_bundle(const RunConfig& cfg) {
    RunBundle b;
    b.cfg = cfg;
    b.world = build_world(cfg);
    const Activation act = activation_from_name(cfg.agent.activation);
    b.agent = PolicyAgent(make_feature_config(cfg), cfg.agent.hidden, cfg.agent.sigma, act);
    RngStream arng = derive_stream(cfg.seed, stream_tag("agent_init"));
    b.agent.random_init(arng);
    b.agent_opt = OptState(b.agent.net().param_count(), cfg.ppo.policy_lr, 0.9, 0.999);

    b.disc = RewardModel(sample_feature_length(cfg.paradigm_enum(), b.world),
                         cfg.reward.disc_hidden, act);
    RngStream drng = derive_stream(cfg.seed, stream_tag("disc_init"));
    b.disc.random_init(drng);
    b.disc_opt = OptState(b.disc.net().param_count(), cfg.ppo.disc_lr, 0.5, 0.999);

    b.fidelity_stats =
        compute_fidelity_stats(cfg.paradigm_enum(), b.world, cfg.world.seed);
    if (b.world.gmm) {
        b.world.gmm->moments(-1, b.metric_ref.mean, b.metric_ref.cov);
        b.metric_ref.count = 2;
    }
    return b;
}

inline Checkpoint to_checkpoint(const RunBundle& b) {
    Checkpoint ckpt;
    ckpt.config = b.cfg;
    ckpt.iteration = b.iteration;
    ckpt.agent_params = b.agent.net().params();
    ckpt.agent_opt = b.agent_opt;
    ckpt.disc_params = b.disc.net().params();
    ckpt.disc_opt = b.disc_opt;
    if (b.fidelity) {
        ckpt.has_fidelity = true;
        ckpt.fidelity_params = b.fidelity->net().params();
        ckpt.fidelity_opt = b.fidelity_opt;
    }
    return ckpt;
}

inline RunBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
    RunBundle b = build_bundle(ckpt.config);
    if (b.agent.net().params().size() != ckpt.agent_params.size())
        throw std::runtime_error("checkpoint: agent parameter count mismatch");
    b.agent.net().params() = ckpt.agent_params;
    b.agent_opt = ckpt.agent_opt;
    if (b.disc.net().params().size() != ckpt.disc_params.size())
        throw std::runtime_error("checkpoint: reward model parameter count mismatch");
    b.disc.net().params() = ckpt.disc_params;
    b.disc_opt = ckpt.disc_opt;
    b.iteration = ckpt.iteration;
    if (ckpt.has_fidelity) {
        b.fidelity = PolicyAgent(make_feature_config(ckpt.config), ckpt.config.agent.hidden,
                                 ckpt.config.agent.sigma,
                                 activation_from_name(ckpt.config.agent.activation));
        b.fidelity->net().params() = ckpt.fidelity_params;
        b.fidelity_opt = ckpt.fidelity_opt;
    }
    return b;
}

inline TrainingMembers members_of(RunBundle& b) {
    TrainingMembers m;
    m.agent = &b.agent;
    m.disc = &b.disc;
    m.agent_opt = &b.agent_opt;
    m.disc_opt = &b.disc_opt;
    m.fidelity = &b.fidelity_stats;
    m.metric_ref = &b.metric_ref;
    return m;
}

// ---------------------------------------------------------------------------
// Baseline (static schedule) generation
// ---------------------------------------------------------------------------

// Evaluates the Table-style rules at paper-step t+1 for the action taken at
// 0-based step t, then sanitizes kappa into the feasible solver window.
inline Action baseline_step_action(const Schedule& schedule, int t, int horizon,
                                   double kappa_current) {
    Action a = baseline_action(schedule, t + 1, horizon);
    if (schedule.paradigm == Paradigm::Diffusion) {
        const double hi = kappa_current - 1.0;
        a.kappa_next = t + 1 == horizon ? 0.0 : std::clamp(a.kappa_next, 0.0, hi);
    } else if (schedule.paradigm == Paradigm::Flow) {
        const double hi = kappa_current * (1.0 - 1e-9);
        a.kappa_next =
            t + 1 == horizon ? kFlowDelta : std::clamp(a.kappa_next, kFlowDelta, hi);
    }
    return a;
}

inline State baseline_generate(const World& world, const Schedule& schedule, int horizon,
                               int class_label, std::uint64_t traj_seed) {
    RngStream init_rng = derive_stream(traj_seed, stream_tag("init"));
    State state = initial_state(schedule.paradigm, world, class_label, init_rng);
    for (int t = 0; t < horizon; ++t) {
        const Action a = baseline_step_action(schedule, t, horizon, state.kappa);
        RngStream trans_rng = derive_stream(traj_seed, stream_tag("trans"),
                                            static_cast<std::uint64_t>(t), std::uint64_t{0});
        state = transition(state, a, world, trans_rng, horizon);
    }
    return state;
}

// ---------------------------------------------------------------------------
// Exact policy-conditioned final distribution (AR, deterministic policy)
// ---------------------------------------------------------------------------

// Walks the full generation tree of an AR world under the agent's inference
// policy (mean actions), carrying the EMA smoother state down each branch,
// and returns the exact distribution over final grids. Cost is O(V^G) nodes.
// Subtrees below a short prefix own contiguous index ranges, so the walk
// parallelizes over prefix frames.
inline std::vector<double> exact_ar_policy_distribution(const World& world,
                                                        const RolloutSpec& spec,
                                                        const PolicyAgent& agent,
                                                        int class_label, int threads = 0) {
    const DiscreteWorld& dw = *world.discrete;
    const int g = dw.grid_size();
    if (spec.horizon != g)
        throw std::invalid_argument("exact_ar_policy_distribution: T must equal G");
    std::vector<double> dist(dw.config_count(), 0.0);

    struct Frame {
        State state;
        EmaSmoother smoother;
        double prob;
    };
    const auto expand = [&](const Frame& frame, std::vector<Frame>& out) {
        const State& s = frame.state;
        const std::vector<double> features = featurize(s, world, agent.feature_config());
        std::vector<double> raw = agent.policy_mean(features, s.t);
        EmaSmoother smoother = frame.smoother;
        raw = smoother.step(raw);
        if (spec.heuristic_init) {
            const std::vector<double> bias = init_bias(spec.init_schedule, s.t, spec.horizon);
            for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += bias[i];
        }
        ActivationContext ctx;
        ctx.t = s.t;
        ctx.horizon = spec.horizon;
        ctx.vocab = dw.vocab_size();
        const Action action = spec.clamp_actions
                                  ? clamp_variant(raw, Paradigm::Autoregressive, ctx)
                                  : activate(raw, Paradigm::Autoregressive, ctx);

        std::vector<double> probs = sampler_detail::guided_softmax(
            dw.ar_conditional(s.tokens, class_label), dw.ar_conditional_uncond(s.tokens),
            action.tau, action.w);
        sampler_detail::truncate_top_k_p(probs, action.k, action.rho);
        for (int val = 0; val < dw.vocab_size(); ++val) {
            if (probs[val] <= 0.0) continue;
            Frame child{frame.state, smoother, frame.prob * probs[val]};
            child.state.t += 1;
            child.state.tokens.push_back(val);
            out.push_back(std::move(child));
        }
    };

    State root;
    root.paradigm = Paradigm::Autoregressive;
    root.class_label = class_label;
    std::vector<Frame> frontier;
    frontier.push_back({root, EmaSmoother(spec.beta), 1.0});

    const int split_depth = std::min(4, g);
    for (int depth = 0; depth < split_depth; ++depth) {
        std::vector<Frame> next;
        for (const Frame& frame : frontier) expand(frame, next);
        frontier = std::move(next);
    }

    parallel_for(static_cast<int>(frontier.size()), threads, [&](int i) {
        std::vector<Frame> stack{frontier[i]};
        while (!stack.empty()) {
            Frame frame = std::move(stack.back());
            stack.pop_back();
            if (frame.state.t == g) {
                dist[dw.encode(frame.state.tokens)] += frame.prob;
                continue;
            }
            expand(frame, stack);
        }
    });
    return dist;
}

// ---------------------------------------------------------------------------
// Evaluation, reports, commands
// ---------------------------------------------------------------------------

struct ClassMetrics {
    int class_label = 0;
    double frechet = std::nan("");
    double tv = std::nan("");
    double mode_cov = std::nan("");
    double avg_nll = std::nan("");
};

struct EvalReport {
    std::vector<ClassMetrics> per_class;
    double frechet = std::nan("");
    double tv = std::nan("");
    double mode_cov = std::nan("");
    double avg_nll = std::nan("");
    std::vector<std::string> notes;
};

inline double mean_ignoring_nan(const std::vector<ClassMetrics>& rows,
                                double ClassMetrics::*field) {
    double acc = 0.0;
    int n = 0;
    for (const ClassMetrics& r : rows)
        if (!std::isnan(r.*field)) {
            acc += r.*field;
            ++n;
        }
    return n > 0 ? acc / n : std::nan("");
}

// Metrics over per-class sample sets produced by any generator.
inline EvalReport evaluate_samples(const World& world,
                                   const std::vector<std::vector<State>>& per_class_finals,
                                   double mode_radius) {
    EvalReport report;
    const int c = world.class_count();
    for (int cls = 0; cls < c; ++cls) {
        ClassMetrics row;
        row.class_label = cls;
        const std::vector<State>& finals = per_class_finals[cls];
        if (finals.empty()) continue;
        if (world.gmm) {
            std::vector<Vec2> pts;
            pts.reserve(finals.size());
            for (const State& s : finals) pts.push_back(s.x);
            if (pts.size() >= kFrechetMinSamples) {
                GaussianFit ref;
                world.gmm->moments(cls, ref.mean, ref.cov);
                ref.count = 2;
                row.frechet = frechet_from_fits(fit_gaussian(pts), ref);
            } else if (cls == 0) {
                report.notes.push_back("frechet omitted: fewer than 32 samples per class");
            }
            row.mode_cov = mode_coverage(pts, *world.gmm, cls, mode_radius);
            row.avg_nll = avg_nll(pts, *world.gmm, cls);
        } else {
            const DiscreteWorld& dw = *world.discrete;
            std::vector<double> hist(dw.config_count(), 0.0);
            std::vector<std::vector<int>> grids;
            grids.reserve(finals.size());
            for (const State& s : finals) {
                hist[dw.encode(s.tokens)] += 1.0 / finals.size();
                grids.push_back(s.tokens);
            }
            row.tv = tv_distance(hist, dw.table(cls));
            row.avg_nll = avg_nll(grids, dw, cls);
            if (cls == 0)
                report.notes.push_back(
                    "tv is a Monte-Carlo histogram estimate against the exact table");
        }
        report.per_class.push_back(row);
    }
    report.frechet = mean_ignoring_nan(report.per_class, &ClassMetrics::frechet);
    report.tv = mean_ignoring_nan(report.per_class, &ClassMetrics::tv);
    report.mode_cov = mean_ignoring_nan(report.per_class, &ClassMetrics::mode_cov);
    report.avg_nll = mean_ignoring_nan(report.per_class, &ClassMetrics::avg_nll);
    return report;
}

inline json eval_report_to_json(const EvalReport& report) {
    json metrics;
    const auto put = [&](const char* name, double v) {
        if (!std::isnan(v)) metrics[name] = v;
    };
    put("frechet", report.frechet);
    put("tv", report.tv);
    put("mode_cov", report.mode_cov);
    put("avg_nll", report.avg_nll);
    json per_class = json::array();
    for (const ClassMetrics& r : report.per_class) {
        json row;
        row["class"] = r.class_label;
        if (!std::isnan(r.frechet)) row["frechet"] = r.frechet;
        if (!std::isnan(r.tv)) row["tv"] = r.tv;
        if (!std::isnan(r.mode_cov)) row["mode_cov"] = r.mode_cov;
        if (!std::isnan(r.avg_nll)) row["avg_nll"] = r.avg_nll;
        per_class.push_back(row);
    }
    return {{"metrics", metrics}, {"per_class", per_class}, {"notes", report.notes}};
}

inline std::string eval_report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "class,frechet,tv,mode_cov,avg_nll\n";
    const auto cell = [&](double v) -> std::string {
        return std::isnan(v) ? "" : double_to_string(v);
    };
    for (const ClassMetrics& r : report.per_class)
        out << r.class_label << ',' << cell(r.frechet) << ',' << cell(r.tv) << ','
            << cell(r.mode_cov) << ',' << cell(r.avg_nll) << '\n';
    return out.str();
}

inline std::string train_rows_to_csv(const std::vector<IterationRow>& rows) {
    std::ostringstream out;
    out << "iteration,mean_reward,ppo_loss,disc_loss,eval_metric\n";
    for (const IterationRow& r : rows)
        out << r.iteration << ',' << double_to_string(r.mean_reward) << ','
            << double_to_string(r.ppo_loss) << ',' << double_to_string(r.disc_loss) << ','
            << double_to_string(r.eval_metric) << '\n';
    return out.str();
}

// Wraps a report with its resolved config and seed (self-describing).
inline json make_report(const RunConfig& cfg, std::uint64_t seed, const json& body) {
    json j = body;
    j["config"] = run_config_to_json(cfg);
    j["seed"] = seed;
    return j;
}

inline std::vector<std::vector<State>> generate_per_class(const World& world,
                                                          const RolloutSpec& spec,
                                                          const PolicyAgent& agent,
                                                          int per_class, int threads,
                                                          std::uint64_t seed) {
    const int c = world.class_count();
    std::vector<std::vector<State>> finals(c, std::vector<State>(per_class));
    parallel_for(c * per_class, threads, [&](int i) {
        const int cls = i / per_class;
        const std::uint64_t ts =
            mix_key(seed, stream_tag("gen"), static_cast<std::uint64_t>(i));
        finals[cls][i % per_class] =
            rollout(world, spec, agent, cls, ts, nullptr, true).final_state;
    });
    return finals;
}

// --------------------------- commands --------------------------------------

struct CmdPaths {
    std::string checkpoint = "ckpt.json";
    std::string train_log = "train_log.csv";
    std::string report = "report.json";
    std::string eval_csv = "eval.csv";
};

inline CmdPaths make_paths(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CmdPaths p;
    p.checkpoint = out_dir + "/ckpt.json";
    p.train_log = out_dir + "/train_log.csv";
    p.report = out_dir + "/report.json";
    p.eval_csv = out_dir + "/eval.csv";
    return p;
}

inline TrainResult run_training(RunBundle& b, std::optional<int> iterations_override,
                                const CmdPaths& paths) {
    TrainSpec spec = make_train_spec(b.cfg);
    if (iterations_override) spec.iterations = *iterations_override;
    TrainingMembers members = members_of(b);

    TrainResult all;
    const int ckpt_every = b.cfg.checkpoint_every;
    for (long it = b.iteration; it < spec.iterations; ++it) {
        IterationRow row = train_iteration(b.world, spec, members, it,
                                           &all.aborted_trajectories);
        if (spec.eval_every > 0 && (it % spec.eval_every == 0 || it + 1 == spec.iterations))
            row.eval_metric = eval_metric_value(b.world, spec.rollout, b.agent,
                                                spec.eval_samples, spec.threads, spec.seed,
                                                static_cast<std::uint64_t>(it));
        else if (!all.rows.empty())
            row.eval_metric = all.rows.back().eval_metric;
        all.rows.push_back(row);
        all.iterations_run = it + 1;
        b.iteration = it + 1;
        if (!std::isfinite(row.mean_reward)) {
            all.diverged = true;
            all.note = "mean reward non-finite at iteration " + std::to_string(it);
            break;
        }
        if (ckpt_every > 0 && (it + 1) % ckpt_every == 0)
            save_checkpoint(paths.checkpoint, to_checkpoint(b));
    }
    save_checkpoint(paths.checkpoint, to_checkpoint(b));
    return all;
}

inline int cmd_train(const RunConfig& cfg, std::optional<int> iterations_override,
                     const std::optional<std::string>& resume_ckpt,
                     const std::string& out_dir) {
    RunBundle b = resume_ckpt ? bundle_from_checkpoint(load_checkpoint(*resume_ckpt))
                              : build_bundle(cfg);
    const CmdPaths paths = make_paths(out_dir);
    const TrainResult result = run_training(b, iterations_override, paths);
    write_file_atomic(paths.train_log, train_rows_to_csv(result.rows));
    if (result.diverged) {
        std::fprintf(stderr, "training stopped early: %s\n", result.note.c_str());
        return 2;
    }
    return 0;
}

inline int cmd_eval(const std::string& ckpt_path, int samples_per_class, std::uint64_t seed,
                    const std::string& out_dir) {
    RunBundle b = bundle_from_checkpoint(load_checkpoint(ckpt_path));
    const CmdPaths paths = make_paths(out_dir);
    const RolloutSpec spec = make_rollout_spec(b.cfg);
    const auto finals = generate_per_class(b.world, spec, b.agent, samples_per_class,
                                           b.cfg.threads, seed);
    const EvalReport report = evaluate_samples(b.world, finals, b.cfg.eval.mode_radius);
    write_file_atomic(paths.report,
                      make_report(b.cfg, seed, eval_report_to_json(report)).dump(1));
    write_file_atomic(paths.eval_csv, eval_report_to_csv(report));
    return 0;
}

inline int cmd_baseline(const RunConfig& cfg, int samples_per_class, std::uint64_t seed,
                        const std::string& out_dir) {
    const World world = build_world(cfg);
    const Schedule schedule = make_schedule(cfg);
    const CmdPaths paths = make_paths(out_dir);
    const int c = world.class_count();
    std::vector<std::vector<State>> finals(c, std::vector<State>(samples_per_class));
    parallel_for(c * samples_per_class, cfg.threads, [&](int i) {
        const int cls = i / samples_per_class;
        const std::uint64_t ts = mix_key(seed, stream_tag("gen"), static_cast<std::uint64_t>(i));
        finals[cls][i % samples_per_class] =
            baseline_generate(world, schedule, cfg.horizon, cls, ts);
    });
    EvalReport report = evaluate_samples(world, finals, cfg.eval.mode_radius);
    json body = eval_report_to_json(report);
    json actions = json::array();
    if (cfg.horizon <= 64) {
        double kappa = is_ode(schedule.paradigm)
                           ? (schedule.paradigm == Paradigm::Flow ? 1.0 : cfg.world.kappa_max)
                           : 0.0;
        for (int t = 0; t < cfg.horizon; ++t) {
            const Action a = baseline_step_action(schedule, t, cfg.horizon, kappa);
            json row = {{"t", t}};
            switch (schedule.paradigm) {
                case Paradigm::MaskGit:
                    row["m"] = a.m;
                    row["tau"] = a.tau;
                    row["zeta"] = a.zeta;
                    row["w"] = a.w;
                    break;
                case Paradigm::Autoregressive:
                    row["tau"] = a.tau;
                    row["w"] = a.w;
                    row["k"] = a.k;
                    row["rho"] = a.rho;
                    break;
                default:
                    row["kappa_next"] = a.kappa_next;
                    row["w"] = a.w;
                    kappa = a.kappa_next;
            }
            actions.push_back(row);
        }
    }
    body["schedule_actions"] = actions;
    write_file_atomic(paths.report, make_report(cfg, seed, body).dump(1));
    write_file_atomic(paths.eval_csv, eval_report_to_csv(report));
    return 0;
}

inline int cmd_refine(const std::string& ckpt_path, int repeat_trials, int lookahead_k,
                      bool lookahead, int samples_per_class, std::uint64_t seed,
                      const std::string& out_dir) {
    RunBundle b = bundle_from_checkpoint(load_checkpoint(ckpt_path));
    if (lookahead && is_ode(b.cfg.paradigm_enum()))
        throw std::invalid_argument(
            "refine: lookahead unavailable for ODE paradigms; the state transition is "
            "deterministic, only repeated sampling applies");
    const CmdPaths paths = make_paths(out_dir);
    const RolloutSpec spec = make_rollout_spec(b.cfg);
    RefineConfig rc;
    rc.repeat_trials = repeat_trials;
    rc.lookahead_k = lookahead_k;
    rc.lookahead = lookahead;
    const int c = b.world.class_count();
    std::vector<std::vector<State>> finals(c, std::vector<State>(samples_per_class));
    std::vector<double> rewards(static_cast<std::size_t>(c) * samples_per_class);
    parallel_for(c * samples_per_class, b.cfg.threads, [&](int i) {
        const int cls = i / samples_per_class;
        const std::uint64_t ts = mix_key(seed, stream_tag("ref"), static_cast<std::uint64_t>(i));
        const RefineResult r = refine_generate(b.world, spec, b.agent, b.disc, rc, cls, ts);
        finals[cls][i % samples_per_class] = r.best;
        rewards[i] = r.best_reward;
    });
    EvalReport report = evaluate_samples(b.world, finals, b.cfg.eval.mode_radius);
    double mean_reward = 0.0;
    for (double r : rewards) mean_reward += r;
    mean_reward /= rewards.size();
    json body = eval_report_to_json(report);
    body["refine"] = {{"m", repeat_trials}, {"k", lookahead_k}, {"lookahead", lookahead},
                      {"mean_selected_reward", mean_reward}};
    write_file_atomic(paths.report, make_report(b.cfg, seed, body).dump(1));
    write_file_atomic(paths.eval_csv, eval_report_to_csv(report));
    return 0;
}

// One CSV row per lambda: generation under the blended policy.
inline int cmd_sweep(const std::string& ckpt_path, const std::vector<double>& lambdas,
                     int samples_per_class, std::uint64_t seed, const std::string& out_dir) {
    RunBundle b = bundle_from_checkpoint(load_checkpoint(ckpt_path));
    if (!b.fidelity)
        throw std::invalid_argument("sweep: checkpoint has no fidelity policy; train one first");
    const CmdPaths paths = make_paths(out_dir);
    const RolloutSpec spec = make_rollout_spec(b.cfg);
    const int c = b.world.class_count();

    std::ostringstream csv;
    csv << "lambda,frechet,tv,mode_cov,avg_nll,mean_fidelity_reward\n";
    json rows = json::array();
    for (const double lambda : lambdas) {
        if (lambda < 0.0 || lambda > 1.0)
            throw std::invalid_argument("sweep: lambda outside [0, 1]");
        std::vector<std::vector<State>> finals(c, std::vector<State>(samples_per_class));
        parallel_for(c * samples_per_class, b.cfg.threads, [&](int i) {
            const int cls = i / samples_per_class;
            const std::uint64_t ts =
                mix_key(seed, stream_tag("sweep"), static_cast<std::uint64_t>(i));
            finals[cls][i % samples_per_class] =
                rollout_with_source(b.world, spec,
                                    blended_source(b.agent, *b.fidelity, b.world, lambda, true),
                                    &*b.fidelity, cls, ts, nullptr)
                    .final_state;
        });
        const EvalReport report = evaluate_samples(b.world, finals, b.cfg.eval.mode_radius);
        double fid = 0.0;
        int n = 0;
        for (int cls = 0; cls < c; ++cls)
            for (const State& s : finals[cls]) {
                fid += fidelity_reward(b.cfg.paradigm_enum(), b.world, s, b.fidelity_stats);
                ++n;
            }
        fid /= n;
        const auto cell = [&](double v) -> std::string {
            return std::isnan(v) ? "" : double_to_string(v);
        };
        csv << double_to_string(lambda) << ',' << cell(report.frechet) << ',' << cell(report.tv)
            << ',' << cell(report.mode_cov) << ',' << cell(report.avg_nll) << ','
            << double_to_string(fid) << '\n';
        json row = eval_report_to_json(report);
        row["lambda"] = lambda;
        row["mean_fidelity_reward"] = fid;
        rows.push_back(row);
    }
    write_file_atomic(paths.eval_csv, csv.str());
    write_file_atomic(paths.report, make_report(b.cfg, seed, {{"sweep", rows}}).dump(1));
    return 0;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace gensched
