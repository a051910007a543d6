#include <catch2/catch_amalgamated.hpp>

#include "gensched/rewards.hpp"

using namespace gensched;

namespace {

World gmm_world(std::uint64_t seed, int classes = 2) {
    World w;
    w.gmm = std::make_shared<GmmWorld>(GmmWorld::random(classes, 2, seed));
    return w;
}

std::vector<std::vector<double>> cluster(const Vec2& center, int n, std::uint64_t seed,
                                         int class_count = 1, int cls = 0) {
    RngStream rng = derive_stream(seed, stream_tag("cl"));
    std::vector<std::vector<double>> out(n);
    for (auto& f : out) {
        f.assign(2 + class_count, 0.0);
        f[0] = center.x + 0.3 * rng.gaussian();
        f[1] = center.y + 0.3 * rng.gaussian();
        f[2 + cls] = 1.0;
    }
    return out;
}

}  // namespace

TEST_CASE("zero-parameter reward model outputs one half") {
    RewardModel model(4, {8, 8});
    CHECK(model.reward({0.1, 0.2, 0.3, 0.4}) == Catch::Approx(0.5));
}

TEST_CASE("reward is deterministic and stays inside (0,1)") {
    RewardModel model(3, {16});
    RngStream rng = derive_stream(1, stream_tag("rm"));
    model.random_init(rng);
    const std::vector<double> f{0.5, -0.5, 1.0};
    CHECK(model.reward(f) == model.reward(f));
    // saturate the logit on purpose
    for (double& p : model.net().params()) p = 50.0;
    const double r = model.reward({10.0, 10.0, 10.0});
    CHECK(r > 0.0);
    CHECK(r < 1.0);
}

TEST_CASE("adv_reward reads the terminal state features") {
    const World w = gmm_world(2);
    RewardModel model(sample_feature_length(Paradigm::Diffusion, w), {8});
    RngStream rng = derive_stream(2, stream_tag("rm"));
    model.random_init(rng);
    State s;
    s.paradigm = Paradigm::Diffusion;
    s.class_label = 1;
    s.x = {0.2, -0.7};
    CHECK(adv_reward(model, s, w) ==
          Catch::Approx(model.reward(state_sample_features(s, w))));
}

TEST_CASE("discrete sample features are one-hot grids") {
    World w;
    w.discrete = std::make_shared<DiscreteWorld>(4, 3, 2, 7);
    const auto f = sample_features(Paradigm::MaskGit, w, {0, 2, 1, 0}, {}, 1);
    REQUIRE(f.size() == 4u * 3u + 2u);
    CHECK(f[0] == 1.0);
    CHECK(f[3 + 2] == 1.0);
    CHECK(f[12 + 1] == 1.0);
    CHECK_THROWS_AS(sample_features(Paradigm::MaskGit, w, {0, -1, 1, 0}, {}, 1),
                    std::invalid_argument);
}

TEST_CASE("disc_update with zero learning rate leaves the model unchanged") {
    RewardModel model(3, {8});
    RngStream rng = derive_stream(3, stream_tag("d"));
    model.random_init(rng);
    const auto before = model.net().params();
    OptState opt(model.net().param_count(), 0.0);
    disc_update(model, cluster({1, 1}, 8, 1), cluster({-1, -1}, 8, 2), opt);
    CHECK(model.net().params() == before);
}

TEST_CASE("identical balanced batches bound the loss and pull outputs to 0.5") {
    RewardModel model(3, {8});
    RngStream rng = derive_stream(4, stream_tag("d"));
    model.random_init(rng);
    for (double& p : model.net().params()) p *= 3.0;  // push outputs off 0.5
    const auto batch = cluster({0.5, 0.5}, 16, 3);
    OptState opt(model.net().param_count(), 1e-2);
    double first = 0.0;
    for (int u = 0; u < 300; ++u) {
        const double loss = disc_update(model, batch, batch, opt);
        if (u == 0) first = loss;
        // per-sample BCE mean over the union; the per-pair bound 2 log 2
        // divides down to log 2
        CHECK(loss >= std::log(2.0) - 1e-12);
    }
    double drift = 0.0;
    for (const auto& f : batch) drift += std::abs(model.reward(f) - 0.5);
    CHECK(drift / batch.size() < 0.05);
    CHECK(disc_update(model, batch, batch, opt) <= first);
}

TEST_CASE("separable clusters are classified after 200 updates") {
    RewardModel model(3, {16, 16});
    RngStream rng = derive_stream(5, stream_tag("d"));
    model.random_init(rng);
    OptState opt(model.net().param_count(), 3e-3);
    const auto real = cluster({2.0, 2.0}, 64, 10);
    const auto fake = cluster({-2.0, -2.0}, 64, 11);
    for (int u = 0; u < 200; ++u) disc_update(model, real, fake, opt);
    const auto real_held = cluster({2.0, 2.0}, 200, 12);
    const auto fake_held = cluster({-2.0, -2.0}, 200, 13);
    int correct = 0;
    for (const auto& f : real_held) correct += model.reward(f) > 0.5;
    for (const auto& f : fake_held) correct += model.reward(f) < 0.5;
    CHECK(static_cast<double>(correct) / 400.0 > 0.95);
    double mean_real = 0.0, mean_fake = 0.0;
    for (const auto& f : real_held) mean_real += model.reward(f);
    for (const auto& f : fake_held) mean_fake += model.reward(f);
    CHECK(mean_real / 200.0 > mean_fake / 200.0);
}

TEST_CASE("disc_update decreases the same-batch loss in at least 90 of 100 steps") {
    RewardModel model(3, {16});
    RngStream rng = derive_stream(6, stream_tag("d"));
    model.random_init(rng);
    OptState opt(model.net().param_count(), 1e-3);
    const auto real = cluster({1.0, 0.0}, 32, 20);
    const auto fake = cluster({-1.0, 0.0}, 32, 21);
    int decreased = 0;
    for (int u = 0; u < 100; ++u) {
        const double before = disc_update(model, real, fake, opt);
        // re-evaluate on the same batch without stepping
        OptState frozen(model.net().param_count(), 0.0);
        const double after = disc_update(model, real, fake, frozen);
        decreased += after < before;
    }
    CHECK(decreased >= 90);
}

TEST_CASE("one-sided label smoothing targets 0.9 for real samples") {
    RewardModel model(3, {16});
    RngStream rng = derive_stream(7, stream_tag("d"));
    model.random_init(rng);
    OptState opt(model.net().param_count(), 1e-2);
    const auto real = cluster({2.0, 2.0}, 32, 30);
    const auto fake = cluster({-2.0, -2.0}, 32, 31);
    for (int u = 0; u < 500; ++u) disc_update(model, real, fake, opt, 0.9);
    double mean_real = 0.0;
    for (const auto& f : real) mean_real += model.reward(f);
    CHECK(mean_real / real.size() == Catch::Approx(0.9).margin(0.05));
}

TEST_CASE("fidelity reward centering and saturation") {
    const World w = gmm_world(8, 2);
    const FidelityStats stats = compute_fidelity_stats(Paradigm::Diffusion, w, 4);

    SECTION("median-density sample scores one half") {
        // construct a state whose log-density equals the median by probing
        RngStream rng = derive_stream(9, stream_tag("f"));
        State s;
        s.paradigm = Paradigm::Diffusion;
        s.class_label = 0;
        // bisect along a ray from the class mean until logp ~ median
        Vec2 mean;
        Mat2 cov;
        w.gmm->moments(0, mean, cov);
        double lo = 0.0, hi = 20.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            s.x = mean + Vec2{mid, 0.0};
            if (w.gmm->log_density(s.x, 0) > stats.median_logp) lo = mid;
            else hi = mid;
        }
        const double r = fidelity_reward(Paradigm::Diffusion, w, s, stats);
        CHECK(r == Catch::Approx(0.5).margin(0.01));
    }
    SECTION("samples at a mode score above one half") {
        State s;
        s.paradigm = Paradigm::Diffusion;
        s.class_label = 0;
        s.x = w.gmm->components(0)[0].mean;
        CHECK(fidelity_reward(Paradigm::Diffusion, w, s, stats) > 0.5);
    }
    SECTION("far-tail samples saturate below 0.01") {
        State s;
        s.paradigm = Paradigm::Diffusion;
        s.class_label = 0;
        s.x = {500.0, 500.0};
        CHECK(fidelity_reward(Paradigm::Diffusion, w, s, stats) < 0.01);
    }
    SECTION("monotone in log-density") {
        RngStream rng = derive_stream(10, stream_tag("f"));
        for (int trial = 0; trial < 100; ++trial) {
            State a, b;
            a.paradigm = b.paradigm = Paradigm::Diffusion;
            a.class_label = b.class_label = 1;
            a.x = w.gmm->sample(1, rng);
            b.x = w.gmm->sample(1, rng);
            const double la = w.gmm->log_density(a.x, 1);
            const double lb = w.gmm->log_density(b.x, 1);
            const double ra = fidelity_reward(Paradigm::Diffusion, w, a, stats);
            const double rb = fidelity_reward(Paradigm::Diffusion, w, b, stats);
            if (la > lb) CHECK(ra > rb);
            if (lb > la) CHECK(rb > ra);
        }
    }
}

TEST_CASE("metric reward self-distance and collapse") {
    const World w = gmm_world(12, 1);
    GaussianFit ref;
    w.gmm->moments(0, ref.mean, ref.cov);
    ref.count = 2;

    SECTION("reference-drawn samples score near zero") {
        RngStream rng = derive_stream(11, stream_tag("m"));
        std::vector<Vec2> pts(10000);
        for (Vec2& p : pts) p = w.gmm->sample(0, rng);
        CHECK(std::abs(metric_reward(pts, ref)) < 0.05);
    }
    SECTION("a collapsed sample set is strongly penalized and flagged") {
        const std::vector<Vec2> pts(64, Vec2{0.0, 0.0});
        bool degenerate = false;
        const double r = metric_reward(pts, ref, &degenerate);
        CHECK(degenerate);
        CHECK(r < -0.5);
    }
    SECTION("small sample sets are rejected") {
        const std::vector<Vec2> pts(8, Vec2{0.0, 0.0});
        CHECK_THROWS_AS(metric_reward(pts, ref), std::invalid_argument);
    }
}
