// Command-line driver: run experiments, re-summarize outputs, generate environments.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "teachirl/teachirl.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void print_thresholds(const std::vector<teachirl::ThresholdRow>& rows) {
    std::printf("%-8s %8s %12s %10s %10s\n", "variant", "eps", "mean_iters", "stderr", "censored");
    for (const auto& r : rows)
        std::printf("%-8s %8g %12.2f %10.2f %6zu/%zu\n", teachirl::variant_name(r.variant).data(), r.eps,
                    r.mean_iters, r.stderr_, r.n_censored, r.n_sessions);
}

struct RunArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::size_t seeds = 0;
    std::string variants;
    bool quick = false;
    bool verbose = false;
};

int cmd_run(const RunArgs& args) {
    teachirl::ExperimentConfig config;
    if (args.quick) config.apply_quick_profile();
    if (!args.config_path.empty()) config = teachirl::load_config(args.config_path, config);
    if (args.seeds > 0) {
        config.n_seeds = args.seeds;
        config.provenance["n_seeds"] = "override";
    }
    if (!args.variants.empty()) {
        config.variants = teachirl::parse_variants(split_list(args.variants));
        config.provenance["variants"] = "override";
    }
    config.validate();

    const auto start = std::chrono::steady_clock::now();
    std::size_t done = 0;
    const std::size_t total = config.n_seeds * config.variants.size();
    auto progress = [&](const teachirl::SessionRecord& r) {
        ++done;
        if (!args.verbose && !r.failed) return;
        std::fprintf(stderr, "[%zu/%zu] %s seed %zu: %s\n", done, total, teachirl::variant_name(r.variant).data(),
                     r.seed_index, r.failed ? ("FAILED: " + r.error).c_str() : "done");
    };
    const auto result = teachirl::run_experiments(config, progress);
    teachirl::emit_outputs(result, config, args.out_dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    print_thresholds(result.summary.thresholds);
    std::printf("%zu sessions (%zu failed) in %.1f s; outputs in %s\n", result.records.size(),
                result.summary.n_failed, secs, args.out_dir.c_str());
    return 0;
}

int cmd_summarize(const std::string& in_dir) {
    const std::filesystem::path dir(in_dir);
    // a run directory that is missing or incomplete is a runtime failure, not a bad config
    for (const char* f : {"config.json", "losses.csv"})
        if (!std::filesystem::is_regular_file(dir / f))
            throw std::runtime_error("not a run output directory (missing " + std::string(f) + "): " + in_dir);
    const auto config = teachirl::load_config((dir / "config.json").string());
    const auto records = teachirl::read_losses_csv(dir / "losses.csv");
    print_thresholds(teachirl::summarize_thresholds(records, config.eps, config.max_iters));
    return 0;
}

int cmd_gen_env(std::uint64_t seed, std::size_t roads_per_type, const std::string& out) {
    const auto env = teachirl::car::build_env(seed, roads_per_type);
    teachirl::car::save_env(env, out);
    std::printf("wrote %zu roads (%zu states) to %s\n", env.roads.size(), env.mdp.n_states(), out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive teaching of an IRL-modelled learner on the car-driving benchmark"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run every teacher variant over several seeds");
    run->add_option("--config", run_args.config_path, "JSON config file (all keys optional)")->check(CLI::ExistingFile);
    run->add_option("--out", run_args.out_dir, "Output directory")->capture_default_str();
    run->add_option("--seeds", run_args.seeds, "Number of seeds (overrides config)")->check(CLI::PositiveNumber);
    run->add_option("--variants", run_args.variants, "Comma-separated subset of Agn,Rnd,NoE,Var,Cur");
    run->add_flag("--quick", run_args.quick, "CI-scale profile: 8 roads, 500 weight samples, 4 seeds, 60 iterations");
    run->add_flag("-v,--verbose", run_args.verbose, "Report each finished session");

    std::string in_dir;
    auto* summarize = app.add_subcommand("summarize", "Recompute the threshold table from a run directory");
    summarize->add_option("--in", in_dir, "Directory written by `run`")->required();

    std::uint64_t env_seed = 0;
    std::size_t roads_per_type = 5;
    std::string env_out;
    auto* gen = app.add_subcommand("gen-env", "Generate a car environment and save it as JSON");
    gen->add_option("--seed", env_seed, "Environment seed")->required();
    gen->add_option("--roads-per-type", roads_per_type, "Roads per road type")->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--out", env_out, "Output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) return cmd_run(run_args);
        if (*summarize) return cmd_summarize(in_dir);
        if (*gen) return cmd_gen_env(env_seed, roads_per_type, env_out);
    } catch (const teachirl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
