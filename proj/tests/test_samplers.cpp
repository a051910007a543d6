#include <catch2/catch_amalgamated.hpp>

#include "gensched/metrics.hpp"
#include "gensched/samplers.hpp"

using namespace gensched;

namespace {

World discrete_world(int g, int v, int c, std::uint64_t seed) {
    World w;
    w.discrete = std::make_shared<DiscreteWorld>(g, v, c, seed);
    return w;
}

World single_gaussian_world(const Vec2& mean, const Mat2& cov) {
    std::vector<std::vector<GmmComponent>> classes(1);
    classes[0].push_back({1.0, mean, cov});
    World w;
    w.gmm = std::make_shared<GmmWorld>(GmmWorld(std::move(classes)));
    return w;
}

}  // namespace

TEST_CASE("guide identities and arithmetic") {
    const std::vector<double> cond{1.0, 0.0};
    const std::vector<double> uncond{0.0, 1.0};
    CHECK(guide(cond, uncond, 0.0) == cond);
    CHECK(guide(cond, cond, 2.5) == cond);
    const auto g = guide(cond, uncond, 2.0);
    CHECK(g[0] == Catch::Approx(3.0));
    CHECK(g[1] == Catch::Approx(-2.0));
    CHECK_THROWS_AS(guide(cond, {1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(guide(cond, uncond, -0.1), std::invalid_argument);
}

TEST_CASE("initial states per paradigm") {
    const World dw = discrete_world(4, 3, 2, 1);
    World gw = single_gaussian_world({0, 0}, Mat2::identity());
    RngStream rng = derive_stream(0, stream_tag("init"));

    const State mg = initial_state(Paradigm::MaskGit, dw, 1, rng);
    CHECK(mg.masked_count() == 4);
    CHECK(mg.t == 0);

    const State ar = initial_state(Paradigm::Autoregressive, dw, 0, rng);
    CHECK(ar.tokens.empty());

    const State diff = initial_state(Paradigm::Diffusion, gw, 0, rng);
    CHECK(diff.kappa == 1000.0);

    const State flow = initial_state(Paradigm::Flow, gw, 0, rng);
    CHECK(flow.kappa == 1.0);

    RngStream rng_a = derive_stream(1, stream_tag("init"));
    RngStream rng_b = derive_stream(2, stream_tag("init"));
    const State a = initial_state(Paradigm::Diffusion, gw, 0, rng_a);
    const State b = initial_state(Paradigm::Diffusion, gw, 0, rng_b);
    CHECK((a.x - b.x).norm() > 0.0);
}

TEST_CASE("maskgit commits everything when m = 0") {
    const World w = discrete_world(4, 3, 2, 5);
    RngStream rng = derive_stream(3, stream_tag("mg"));
    Action a;
    a.m = 0.0;
    a.tau = 1.0;

    SECTION("T = 1: one transition, all tokens committed") {
        State s = initial_state(Paradigm::MaskGit, w, 0, rng);
        const State next = maskgit_transition(s, a, w, rng, 1);
        CHECK(next.masked_count() == 0);
        CHECK(next.t == 1);
    }
    SECTION("mid-trajectory the remaining-step floor holds back one per step") {
        State s = initial_state(Paradigm::MaskGit, w, 0, rng);
        const State next = maskgit_transition(s, a, w, rng, 4);
        CHECK(next.masked_count() == 3);
    }
}

TEST_CASE("maskgit greedy single position commits the argmax") {
    const World w = discrete_world(4, 3, 1, 11);
    State s;
    s.paradigm = Paradigm::MaskGit;
    s.class_label = 0;
    s.t = 0;
    s.tokens = {0, 2, -1, 1};
    Action a;
    a.m = 0.0;
    a.tau = 0.0;
    a.zeta = 0.0;
    RngStream rng = derive_stream(4, stream_tag("mg"));
    const auto cond = w.discrete->token_conditional(s.tokens, 0, 2);
    int best = 0;
    for (int v = 1; v < 3; ++v)
        if (cond[v] > cond[best]) best = v;
    const State next = maskgit_transition(s, a, w, rng, 4);
    CHECK(next.tokens[2] == best);
}

TEST_CASE("maskgit committed tokens never change and counts reach zero") {
    const World w = discrete_world(9, 2, 2, 21);
    RngStream action_rng = derive_stream(5, stream_tag("acts"));
    for (int trial = 0; trial < 20; ++trial) {
        RngStream rng = derive_stream(trial, stream_tag("mgp"));
        const int horizon = 3;
        State s = initial_state(Paradigm::MaskGit, w, trial % 2, rng);
        int prev_masked = s.masked_count();
        std::vector<int> committed(s.tokens);
        for (int t = 0; t < horizon; ++t) {
            Action a;
            a.m = action_rng.uniform();  // arbitrary, clipping must still terminate
            a.tau = action_rng.uniform(0.0, 2.0);
            a.zeta = action_rng.uniform(0.0, 1.0);
            a.w = action_rng.uniform(0.0, 1.0);
            s = maskgit_transition(s, a, w, rng, horizon);
            CHECK(s.masked_count() < prev_masked);
            for (int i = 0; i < 9; ++i)
                if (committed[i] >= 0) CHECK(s.tokens[i] == committed[i]);
            committed = s.tokens;
            prev_masked = s.masked_count();
        }
        CHECK(s.masked_count() == 0);
    }
}

TEST_CASE("maskgit with zeta=0 matches the enumeration oracle") {
    const World w = discrete_world(4, 3, 2, 33);
    std::vector<Action> actions(2);
    actions[0].m = 0.5;
    actions[0].tau = 0.9;
    actions[0].zeta = 0.0;
    actions[0].w = 0.4;
    actions[1].m = 0.0;
    actions[1].tau = 1.2;
    actions[1].zeta = 0.0;
    actions[1].w = 0.0;
    const auto exact = w.discrete->enumerate_final_distribution(Paradigm::MaskGit, actions, 1);

    const int n = 300000;
    std::vector<double> hist(w.discrete->config_count(), 0.0);
    for (int i = 0; i < n; ++i) {
        RngStream rng = derive_stream(i, stream_tag("mgs"));
        State s = initial_state(Paradigm::MaskGit, w, 1, rng);
        s = maskgit_transition(s, actions[0], w, rng, 2);
        s = maskgit_transition(s, actions[1], w, rng, 2);
        hist[w.discrete->encode(s.tokens)] += 1.0 / n;
    }
    CHECK(tv_distance(hist, exact) < 0.01);
}

TEST_CASE("maskgit rejects t at the horizon and empty masks") {
    const World w = discrete_world(4, 3, 1, 2);
    RngStream rng = derive_stream(6, stream_tag("mg"));
    State s = initial_state(Paradigm::MaskGit, w, 0, rng);
    s.t = 2;
    Action a;
    CHECK_THROWS_AS(maskgit_transition(s, a, w, rng, 2), std::invalid_argument);
    s.t = 0;
    s.tokens = {0, 1, 2, 0};
    CHECK_THROWS_AS(maskgit_transition(s, a, w, rng, 2), std::invalid_argument);
}

TEST_CASE("nucleus truncation hand trace") {
    std::vector<double> probs{0.6, 0.3, 0.1};
    sampler_detail::truncate_top_k_p(probs, 3, 0.5);
    CHECK(probs[0] == Catch::Approx(1.0));
    CHECK(probs[1] == 0.0);
    CHECK(probs[2] == 0.0);

    probs = {0.6, 0.3, 0.1};
    sampler_detail::truncate_top_k_p(probs, 3, 0.9);  // {1st, 2nd} is the smallest >= 0.9 set
    CHECK(probs[0] == Catch::Approx(0.6 / 0.9));
    CHECK(probs[1] == Catch::Approx(0.3 / 0.9));
    CHECK(probs[2] == 0.0);

    probs = {0.6, 0.3, 0.1};
    sampler_detail::truncate_top_k_p(probs, 3, 0.95);  // needs all three to reach 0.95
    CHECK(probs[0] == Catch::Approx(0.6));
    CHECK(probs[2] == Catch::Approx(0.1));

    probs = {0.6, 0.3, 0.1};
    sampler_detail::truncate_top_k_p(probs, 2, 1.0);
    CHECK(probs[0] == Catch::Approx(0.6 / 0.9));
    CHECK(probs[2] == 0.0);
}

TEST_CASE("ar with neutral actions reproduces the exact conditional chain") {
    const World w = discrete_world(4, 3, 2, 71);
    Action neutral;
    neutral.tau = 1.0;
    neutral.w = 0.0;
    neutral.k = 3;
    neutral.rho = 1.0;
    const int n = 300000;
    std::vector<double> hist(w.discrete->config_count(), 0.0);
    for (int i = 0; i < n; ++i) {
        RngStream rng = derive_stream(i, stream_tag("ars"));
        State s = initial_state(Paradigm::Autoregressive, w, 0, rng);
        for (int t = 0; t < 4; ++t) {
            s = ar_transition(s, neutral, w, rng);
            CHECK(static_cast<int>(s.tokens.size()) == s.t);
        }
        hist[w.discrete->encode(s.tokens)] += 1.0 / n;
    }
    CHECK(tv_distance(hist, w.discrete->table(0)) < 0.01);
}

TEST_CASE("ar k=1 is deterministic argmax decoding") {
    const World w = discrete_world(4, 3, 1, 3);
    Action a;
    a.tau = 1.0;
    a.k = 1;
    a.rho = 1.0;
    RngStream r1 = derive_stream(1, stream_tag("a"));
    RngStream r2 = derive_stream(2, stream_tag("b"));
    State s1 = initial_state(Paradigm::Autoregressive, w, 0, r1);
    State s2 = initial_state(Paradigm::Autoregressive, w, 0, r2);
    for (int t = 0; t < 4; ++t) {
        s1 = ar_transition(s1, a, w, r1);
        s2 = ar_transition(s2, a, w, r2);
    }
    CHECK(s1.tokens == s2.tokens);
}

TEST_CASE("ar rejects bad k and completed sequences") {
    const World w = discrete_world(4, 3, 1, 3);
    RngStream rng = derive_stream(9, stream_tag("ar"));
    State s = initial_state(Paradigm::Autoregressive, w, 0, rng);
    Action a;
    a.k = 0;
    CHECK_THROWS_AS(ar_transition(s, a, w, rng), std::invalid_argument);
    s.tokens = {0, 1, 2, 0};
    s.t = 4;
    a.k = 3;
    CHECK_THROWS_AS(ar_transition(s, a, w, rng), std::invalid_argument);
}

TEST_CASE("diffusion single-gaussian one-step closed form") {
    // mu = 0, cov = I: eps*(x) = sqrt(1-ab) x, so
    // x' = (sqrt(ab ab') + sqrt((1-ab)(1-ab'))) x
    World w = single_gaussian_world({0, 0}, Mat2::identity());
    State s;
    s.paradigm = Paradigm::Diffusion;
    s.t = 0;
    s.class_label = 0;
    s.x = {1.3, -0.4};
    s.kappa = 700.0;
    Action a;
    a.kappa_next = 300.0;
    a.w = 0.0;
    const double ab = w.gmm->alpha_bar(700.0);
    const double abn = w.gmm->alpha_bar(300.0);
    const double coef = std::sqrt(ab * abn) + std::sqrt((1.0 - ab) * (1.0 - abn));
    const State next = diffusion_transition(s, a, w, 4);
    CHECK(next.x.x == Catch::Approx(coef * s.x.x).epsilon(1e-12));
    CHECK(next.x.y == Catch::Approx(coef * s.x.y).epsilon(1e-12));
    CHECK(next.kappa == 300.0);
}

TEST_CASE("diffusion enforces kappa monotonicity") {
    World w = single_gaussian_world({0, 0}, Mat2::identity());
    State s;
    s.paradigm = Paradigm::Diffusion;
    s.x = {0.1, 0.1};
    s.kappa = 500.0;
    Action a;
    a.kappa_next = 500.0;
    CHECK_THROWS_AS(diffusion_transition(s, a, w, 4), std::invalid_argument);
    a.kappa_next = 600.0;
    CHECK_THROWS_AS(diffusion_transition(s, a, w, 4), std::invalid_argument);
}

TEST_CASE("diffusion transitions are deterministic") {
    World w = single_gaussian_world({1.0, -0.5}, Mat2{0.5, 0.1, 0.7});
    State s;
    s.paradigm = Paradigm::Diffusion;
    s.x = {0.9, 0.2};
    s.kappa = 800.0;
    Action a;
    a.kappa_next = 350.0;
    a.w = 0.7;
    const State n1 = diffusion_transition(s, a, w, 4);
    const State n2 = diffusion_transition(s, a, w, 4);
    CHECK(n1.x.x == n2.x.x);
    CHECK(n1.x.y == n2.x.y);
}

TEST_CASE("exact-score DDIM recovers a shifted gaussian at T=50") {
    const Vec2 mu{1.0, -0.5};
    const Mat2 cov{0.6, 0.15, 0.4};
    World w = single_gaussian_world(mu, cov);
    const int horizon = 50;
    const int n = 10000;
    std::vector<Vec2> outs(n);
    bool terminal_ok = true;
    for (int i = 0; i < n; ++i) {
        RngStream rng = derive_stream(i, stream_tag("ddim"));
        State s = initial_state(Paradigm::Diffusion, w, 0, rng);
        for (int t = 0; t < horizon; ++t) {
            Action a;
            a.kappa_next = std::floor((1.0 - static_cast<double>(t + 1) / horizon) * 1000.0);
            a.w = 0.0;
            s = diffusion_transition(s, a, w, horizon);
        }
        terminal_ok = terminal_ok && s.kappa == 0.0;
        outs[i] = s.x;
    }
    CHECK(terminal_ok);
    GaussianFit target{mu, cov, 2};
    CHECK(frechet_from_fits(fit_gaussian(outs), target) < 0.01);
}

TEST_CASE("flow zero velocity leaves the point in place") {
    World w = single_gaussian_world({0, 0}, Mat2::identity());
    State s;
    s.paradigm = Paradigm::Flow;
    s.x = {0.0, 0.0};  // symmetric point: v = 0
    s.kappa = 0.6;
    Action a;
    a.kappa_next = 0.3;
    const State next = flow_transition(s, a, w, 4);
    CHECK(next.x.x == 0.0);
    CHECK(next.x.y == 0.0);
}

TEST_CASE("flow enforces monotonicity and the delta floor") {
    World w = single_gaussian_world({0, 0}, Mat2::identity());
    State s;
    s.paradigm = Paradigm::Flow;
    s.x = {0.5, 0.5};
    s.kappa = 0.5;
    Action a;
    a.kappa_next = 0.5;
    CHECK_THROWS_AS(flow_transition(s, a, w, 4), std::invalid_argument);
    a.kappa_next = 1e-9;
    CHECK_THROWS_AS(flow_transition(s, a, w, 4), std::invalid_argument);
}

TEST_CASE("exact-velocity Euler recovers the target at T=100") {
    const Vec2 mu{-0.8, 1.2};
    const Mat2 cov{0.5, -0.1, 0.8};
    World w = single_gaussian_world(mu, cov);
    const int horizon = 100;
    const int n = 10000;
    std::vector<Vec2> outs(n);
    bool terminal_ok = true;
    for (int i = 0; i < n; ++i) {
        RngStream rng = derive_stream(i, stream_tag("flow"));
        State s = initial_state(Paradigm::Flow, w, 0, rng);
        for (int t = 0; t < horizon; ++t) {
            Action a;
            a.kappa_next = std::max(1.0 - static_cast<double>(t + 1) / horizon, kFlowDelta);
            a.w = 0.0;
            s = flow_transition(s, a, w, horizon);
        }
        terminal_ok = terminal_ok && s.kappa == 0.0;
        outs[i] = s.x;
    }
    CHECK(terminal_ok);
    GaussianFit target{mu, cov, 2};
    CHECK(frechet_from_fits(fit_gaussian(outs), target) < 0.02);
}
