// gensched: learn and evaluate adaptive generation policies for iterative
// samplers against analytically exact toy targets.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gensched/driver.hpp"

namespace {

std::optional<std::uint64_t> opt_seed;
std::optional<int> opt_iterations;

gensched::RunConfig load_config_with_overrides(const std::string& path) {
    gensched::RunConfig cfg = gensched::load_run_config(path);
    if (opt_seed) cfg.seed = *opt_seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive generation-policy learning on exact toy samplers"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out_dir = ".";
    std::uint64_t seed_flag = 0;
    int samples = 2048;
    int refine_m = 3, refine_k = 2;
    bool lookahead = false;
    std::vector<double> lambdas;
    int iterations_flag = -1;
    std::string resume_path;

    auto* train = app.add_subcommand("train", "train a policy per the run config");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--seed", seed_flag, "override the config seed");
    train->add_option("--iterations", iterations_flag, "override iteration count");
    train->add_option("--ckpt", resume_path, "resume from this checkpoint");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt_path, "checkpoint JSON")->required();
    eval->add_option("--out", out_dir, "output directory");
    eval->add_option("--samples", samples, "samples per class");
    eval->add_option("--seed", seed_flag, "evaluation seed");

    auto* baseline = app.add_subcommand("baseline", "evaluate a static schedule");
    baseline->add_option("--config", config_path, "run config JSON")->required();
    baseline->add_option("--out", out_dir, "output directory");
    baseline->add_option("--samples", samples, "samples per class");
    baseline->add_option("--seed", seed_flag, "evaluation seed");

    auto* refine = app.add_subcommand("refine", "inference-time refinement");
    refine->add_option("--ckpt", ckpt_path, "checkpoint JSON")->required();
    refine->add_option("--out", out_dir, "output directory");
    refine->add_option("--samples", samples, "samples per class");
    refine->add_option("--seed", seed_flag, "evaluation seed");
    refine->add_option("--refine-m", refine_m, "repeated sampling trials M");
    refine->add_option("--refine-k", refine_k, "lookahead branches K");
    refine->add_flag("--lookahead", lookahead, "enable value-guided lookahead");

    auto* sweep = app.add_subcommand("sweep", "fidelity-diversity lambda sweep");
    sweep->add_option("--ckpt", ckpt_path, "checkpoint JSON")->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--samples", samples, "samples per class");
    sweep->add_option("--seed", seed_flag, "evaluation seed");
    sweep->add_option("--lambda", lambdas, "lambda values")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            if (train->count("--seed")) opt_seed = seed_flag;
            if (train->count("--iterations")) opt_iterations = iterations_flag;
            const gensched::RunConfig cfg = load_config_with_overrides(config_path);
            const std::optional<std::string> resume =
                resume_path.empty() ? std::nullopt : std::optional<std::string>(resume_path);
            return gensched::cmd_train(cfg, opt_iterations, resume, out_dir);
        }
        if (eval->parsed()) return gensched::cmd_eval(ckpt_path, samples, seed_flag, out_dir);
        if (baseline->parsed()) {
            if (baseline->count("--seed")) opt_seed = seed_flag;
            const gensched::RunConfig cfg = load_config_with_overrides(config_path);
            return gensched::cmd_baseline(cfg, samples, seed_flag, out_dir);
        }
        if (refine->parsed())
            return gensched::cmd_refine(ckpt_path, refine_m, refine_k, lookahead, samples,
                                        seed_flag, out_dir);
        if (sweep->parsed()) {
            if (lambdas.empty()) lambdas = {0.0, 0.25, 0.5, 0.75, 1.0};
            return gensched::cmd_sweep(ckpt_path, lambdas, samples, seed_flag, out_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
