#include <catch2/catch_amalgamated.hpp>

#include "gensched/driver.hpp"
#include "gensched/rl.hpp"

using namespace gensched;

namespace {

RunConfig small_diffusion_config() {
    RunConfig cfg;
    cfg.paradigm = "diffusion";
    cfg.horizon = 3;
    cfg.seed = 17;
    cfg.beta = 0.5;
    cfg.world.class_count = 2;
    cfg.world.seed = 5;
    cfg.agent.hidden = {16, 16};
    cfg.ppo.rollout_batch = 16;
    cfg.ppo.disc_batch = 16;
    cfg.ppo.iterations = 3;
    cfg.eval.samples = 40;
    cfg.eval.every = 2;
    cfg.threads = 1;
    return cfg;
}

RunConfig small_maskgit_config() {
    RunConfig cfg = small_diffusion_config();
    cfg.paradigm = "maskgit";
    cfg.horizon = 2;
    cfg.world.grid_size = 4;
    cfg.world.vocab_size = 3;
    cfg.schedule.w_rule = "w_linear";
    cfg.schedule.w_c = 0.5;
    return cfg;
}

}  // namespace

TEST_CASE("T=1 maskgit rollout runs one transition and commits everything") {
    RunConfig cfg = small_maskgit_config();
    cfg.horizon = 1;
    RunBundle b = build_bundle(cfg);
    const Trajectory traj = rollout(b.world, make_rollout_spec(cfg), b.agent, 0, 99,
                                    [](const Trajectory&) { return 1.0; }, false);
    REQUIRE_FALSE(traj.aborted);
    CHECK(traj.steps.size() == 1);
    CHECK(traj.final_state.masked_count() == 0);
    CHECK(traj.reward == 1.0);
}

TEST_CASE("deterministic ode inference rollouts are bit-identical") {
    const RunConfig cfg = small_diffusion_config();
    RunBundle b = build_bundle(cfg);
    const RolloutSpec spec = make_rollout_spec(cfg);
    const Trajectory a = rollout(b.world, spec, b.agent, 1, 1234, nullptr, true);
    const Trajectory t2 = rollout(b.world, spec, b.agent, 1, 1234, nullptr, true);
    REQUIRE(a.steps.size() == t2.steps.size());
    CHECK(a.final_state.x.x == t2.final_state.x.x);
    CHECK(a.final_state.x.y == t2.final_state.x.y);
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
        CHECK(a.steps[t].own_raw == t2.steps[t].own_raw);
        CHECK(a.steps[t].action.kappa_next == t2.steps[t].action.kappa_next);
    }
    CHECK(a.final_state.kappa == 0.0);
}

TEST_CASE("recorded log-probs replay from stored features and raw actions") {
    const RunConfig cfg = small_diffusion_config();
    RunBundle b = build_bundle(cfg);
    const Trajectory traj =
        rollout(b.world, make_rollout_spec(cfg), b.agent, 0, 555, nullptr, false);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const StepRecord& rec = traj.steps[t];
        const auto mean = b.agent.policy_mean(rec.features, static_cast<int>(t));
        CHECK(std::abs(b.agent.log_prob(mean, rec.own_raw) - rec.log_prob) < 1e-10);
    }
}

TEST_CASE("ode kappa decreases strictly along rollouts and ends at zero") {
    for (const char* paradigm : {"diffusion", "flow"}) {
        RunConfig cfg = small_diffusion_config();
        cfg.paradigm = paradigm;
        RunBundle b = build_bundle(cfg);
        const Trajectory traj =
            rollout(b.world, make_rollout_spec(cfg), b.agent, 0, 7, nullptr, false);
        REQUIRE_FALSE(traj.aborted);
        double prev = std::string(paradigm) == "flow" ? 1.0 : 1000.0;
        for (const StepRecord& rec : traj.steps) {
            CHECK(rec.action.kappa_next < prev);
            prev = rec.action.kappa_next;
        }
        CHECK(traj.final_state.kappa == 0.0);
    }
}

TEST_CASE("advantage is terminal reward minus per-step value") {
    Trajectory traj;
    traj.reward = 0.8;
    for (int t = 0; t < 4; ++t) {
        StepRecord rec;
        rec.value = 0.1 * t;
        traj.steps.push_back(rec);
    }
    const auto adv = advantage(traj);
    for (int t = 0; t < 4; ++t) CHECK(adv[t] == Catch::Approx(0.8 - 0.1 * t));

    Trajectory flat = traj;
    for (auto& rec : flat.steps) rec.value = 0.8;
    for (double a : advantage(flat)) CHECK(a == Catch::Approx(0.0).margin(1e-15));

    Trajectory zerov = traj;
    for (auto& rec : zerov.steps) rec.value = 0.0;
    for (double a : advantage(zerov)) CHECK(a == Catch::Approx(0.8));
}

TEST_CASE("ppo ratios equal one on the first update") {
    const RunConfig cfg = small_diffusion_config();
    RunBundle b = build_bundle(cfg);
    std::vector<Trajectory> batch(4);
    for (int j = 0; j < 4; ++j)
        batch[j] = rollout(b.world, make_rollout_spec(cfg), b.agent, j % 2, 100 + j,
                           [](const Trajectory&) { return 0.3; }, false);
    // agent unchanged since the rollout: new log-prob == stored log-prob
    for (const Trajectory& traj : batch)
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            const auto mean = b.agent.policy_mean(traj.steps[t].features, static_cast<int>(t));
            const double ratio =
                std::exp(b.agent.log_prob(mean, traj.steps[t].own_raw) - traj.steps[t].log_prob);
            CHECK(std::abs(ratio - 1.0) < 1e-10);
        }
}

TEST_CASE("clipped surrogate never exceeds the unclipped surrogate") {
    RngStream rng = derive_stream(1, stream_tag("clip"));
    for (int trial = 0; trial < 2000; ++trial) {
        const double ratio = std::exp(rng.uniform(-2.0, 2.0));
        const double adv = rng.uniform(-2.0, 2.0);
        const double eps = rng.uniform(0.05, 0.4);
        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
        CHECK(std::min(unclipped, clipped) <= unclipped + 1e-15);
    }
}

TEST_CASE("zero advantage with zero value coefficient freezes parameters") {
    const RunConfig cfg = small_diffusion_config();
    RunBundle b = build_bundle(cfg);
    std::vector<Trajectory> batch(4);
    for (int j = 0; j < 4; ++j) {
        batch[j] = rollout(b.world, make_rollout_spec(cfg), b.agent, 0, 300 + j, nullptr, false);
        batch[j].reward = 0.5;
        for (auto& rec : batch[j].steps) rec.value = 0.5;  // A = 0 everywhere
    }
    const auto before = b.agent.net().params();
    for (int u = 0; u < 5; ++u) {
        const PpoResult res = ppo_loss(batch, b.agent, 0.2, 0.0);
        for (double g : res.grad) REQUIRE(g == 0.0);
        adam_step(b.agent.net().params(), res.grad, b.agent_opt);
    }
    CHECK(b.agent.net().params() == before);
}

TEST_CASE("ppo loss gradient matches finite differences through the surrogate") {
    const RunConfig cfg = small_diffusion_config();
    RunBundle b = build_bundle(cfg);
    std::vector<Trajectory> batch(3);
    for (int j = 0; j < 3; ++j)
        batch[j] = rollout(b.world, make_rollout_spec(cfg), b.agent, j % 2, 700 + j,
                           [](const Trajectory&) { return 0.9; }, false);
    // move the agent slightly so ratios leave 1 and both branches appear
    RngStream rng = derive_stream(2, stream_tag("perturb"));
    for (double& p : b.agent.net().params()) p += 0.01 * rng.uniform(-1.0, 1.0);

    const PpoResult res = ppo_loss(batch, b.agent, 0.2, 0.5);
    auto& params = b.agent.net().params();
    RngStream pick = derive_stream(3, stream_tag("pick"));
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t i = pick.uniform_int(params.size());
        const double eps = 1e-6;
        const double saved = params[i];
        params[i] = saved + eps;
        const double up = ppo_loss(batch, b.agent, 0.2, 0.5).loss;
        params[i] = saved - eps;
        const double dn = ppo_loss(batch, b.agent, 0.2, 0.5).loss;
        params[i] = saved;
        const double fd = (up - dn) / (2.0 * eps);
        CHECK(std::abs(res.grad[i] - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    const RunConfig cfg = small_diffusion_config();
    RunBundle a = build_bundle(cfg);
    RunBundle b = build_bundle(cfg);
    const TrainSpec spec = make_train_spec(cfg);
    TrainResult ra = train(a.world, spec, members_of(a));
    TrainResult rb = train(b.world, spec, members_of(b));
    REQUIRE(ra.rows.size() == rb.rows.size());
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
        CHECK(ra.rows[i].mean_reward == rb.rows[i].mean_reward);
        CHECK(ra.rows[i].ppo_loss == rb.rows[i].ppo_loss);
        CHECK(ra.rows[i].disc_loss == rb.rows[i].disc_loss);
    }
    CHECK(a.agent.net().params() == b.agent.net().params());
    CHECK(a.disc.net().params() == b.disc.net().params());
}

TEST_CASE("training with zero iterations returns the initialization") {
    RunConfig cfg = small_diffusion_config();
    cfg.ppo.iterations = 0;
    RunBundle b = build_bundle(cfg);
    const auto before = b.agent.net().params();
    const TrainResult res = train(b.world, make_train_spec(cfg), members_of(b));
    CHECK(res.rows.empty());
    CHECK(b.agent.net().params() == before);
}

TEST_CASE("discrete adversarial training runs and logs finite diagnostics") {
    const RunConfig cfg = small_maskgit_config();
    RunBundle b = build_bundle(cfg);
    const TrainResult res = train(b.world, make_train_spec(cfg), members_of(b));
    REQUIRE(res.rows.size() == 3);
    for (const IterationRow& row : res.rows) {
        CHECK(std::isfinite(row.mean_reward));
        CHECK(std::isfinite(row.ppo_loss));
        CHECK(std::isfinite(row.disc_loss));
    }
    CHECK_FALSE(res.diverged);
    CHECK(res.aborted_trajectories == 0);
}

TEST_CASE("exact AR policy distribution matches sampled rollouts") {
    RunConfig cfg;
    cfg.paradigm = "ar";
    cfg.horizon = 4;
    cfg.seed = 2;
    cfg.beta = 0.6;
    cfg.world.grid_size = 4;
    cfg.world.vocab_size = 3;
    cfg.world.class_count = 2;
    cfg.world.seed = 11;
    cfg.agent.hidden = {16, 16};
    cfg.agent.heuristic_init = false;
    cfg.threads = 1;
    RunBundle b = build_bundle(cfg);
    RngStream arng = derive_stream(9, stream_tag("ai"));
    b.agent.random_init(arng);
    for (double& p : b.agent.net().params()) p *= 20.0;  // push actions off neutral

    const RolloutSpec spec = make_rollout_spec(cfg);
    const auto exact = exact_ar_policy_distribution(b.world, spec, b.agent, 1, 2);
    double total = 0.0;
    for (double p : exact) total += p;
    CHECK(total == Catch::Approx(1.0).epsilon(1e-9));

    const int n = 200000;
    std::vector<double> hist(exact.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const Trajectory traj = rollout(b.world, spec, b.agent, 1,
                                        mix_key(5, stream_tag("x"), i), nullptr, true);
        hist[b.world.discrete->encode(traj.final_state.tokens)] += 1.0 / n;
    }
    CHECK(tv_distance(hist, exact) < 0.01);
}

TEST_CASE("rollout batches are independent of thread count") {
    RunConfig cfg = small_diffusion_config();
    RunBundle b1 = build_bundle(cfg);
    RunBundle b2 = build_bundle(cfg);
    TrainSpec s1 = make_train_spec(cfg);
    TrainSpec s2 = make_train_spec(cfg);
    s1.threads = 1;
    s2.threads = 4;
    const TrainResult r1 = train(b1.world, s1, members_of(b1));
    const TrainResult r2 = train(b2.world, s2, members_of(b2));
    REQUIRE(r1.rows.size() == r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i)
        CHECK(r1.rows[i].mean_reward == r2.rows[i].mean_reward);
    CHECK(b1.agent.net().params() == b2.agent.net().params());
}
