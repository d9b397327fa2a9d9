#include <cmath>
#include <iostream>

#include <CLI11.hpp>

#include "flowguide/bench.hpp"

namespace {

using flowguide::bench::ExperimentConfig;
using flowguide::bench::ResultTable;

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int trials = 0;
    int parallel = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)");
    cmd->add_option("--out", args.out_path, "output directory");
    cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--trials", args.trials, "trials per cell");
    cmd->add_option("--parallel", args.parallel, "worker threads");
}

ExperimentConfig resolve(const CommonArgs& args) {
    ExperimentConfig cfg =
        args.config_path.empty() ? ExperimentConfig() : ExperimentConfig::load(args.config_path);
    if (!args.out_path.empty()) cfg.out_dir = args.out_path;
    if (args.seed_set) cfg.master_seed = args.seed;
    if (args.trials > 0) cfg.trials = args.trials;
    if (args.parallel > 0) cfg.parallel = args.parallel;
    return cfg;
}

void print_table(const ResultTable& table) {
    std::cout << "cell                trials  success          safety           clearance  chunks\n";
    for (const auto& r : table.rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-18s %6d  %5.3f [%.3f,%.3f] %5.3f [%.3f,%.3f] %9.4f %7.2f",
                      r.cell.c_str(), r.trials, r.success_rate, r.success_ci.lo, r.success_ci.hi,
                      r.safety_rate, r.safety_ci.lo, r.safety_ci.hi, r.mean_min_clearance,
                      r.mean_chunks);
        std::cout << line;
        if (std::isfinite(r.mean_demo_deviation)) {
            std::snprintf(line, sizeof(line), "  demo_dev %.4f", r.mean_demo_deviation);
            std::cout << line;
        }
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guided flow-matching trajectory sampling benchmarks"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* sweep = app.add_subcommand("sweep-lambda", "guidance-strength sweep (init guidance off)");
    auto* ablation = app.add_subcommand("ablation", "none / init-only / denoise-only / both arms");
    auto* synergy = app.add_subcommand("synergy", "semantic x collision field composition arms");
    auto* posthoc = app.add_subcommand("posthoc", "post-hoc trajectory-optimizer baseline comparison");
    auto* latency = app.add_subcommand("latency", "guided vs unguided wall-clock breakdown");
    auto* demo = app.add_subcommand("demo-follow", "demonstration-following arms");
    auto* train = app.add_subcommand("train-policy", "fit the small velocity network");
    auto* grid = app.add_subcommand("build-grid", "build and export an SDF grid from a cloud/scene");
    for (auto* cmd : {sweep, ablation, synergy, posthoc, latency, demo, train, grid})
        add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const ExperimentConfig cfg = resolve(args);
        if (sweep->parsed()) {
            print_table(flowguide::bench::cmd_sweep_lambda(cfg));
        } else if (ablation->parsed()) {
            print_table(flowguide::bench::cmd_ablation(cfg));
        } else if (synergy->parsed()) {
            print_table(flowguide::bench::cmd_synergy(cfg));
        } else if (posthoc->parsed()) {
            print_table(flowguide::bench::cmd_posthoc(cfg));
        } else if (latency->parsed()) {
            const auto report = flowguide::bench::cmd_latency(cfg);
            std::cout << "chunks: " << report.chunks << "\n"
                      << "unguided per chunk: " << report.unguided_chunk_ms << " ms\n"
                      << "guided per chunk:   " << report.guided_chunk_ms << " ms\n"
                      << "ratio:              " << report.ratio << "x\n"
                      << "  velocity eval:    " << report.velocity_ms_per_chunk << " ms\n"
                      << "  chain gradient:   " << report.guidance_ms_per_chunk << " ms\n"
                      << "  sdf queries:      " << report.sdf_query_ms_per_chunk << " ms\n"
                      << "grid rebuild 64^3:  " << report.grid_rebuild_ms << " ms\n";
        } else if (demo->parsed()) {
            print_table(flowguide::bench::cmd_demo_follow(cfg));
        } else if (train->parsed()) {
            flowguide::bench::cmd_train_policy(cfg);
            std::cout << "policy written to " << cfg.out_dir << "/policy.json\n";
        } else if (grid->parsed()) {
            flowguide::bench::cmd_build_grid(cfg);
            std::cout << "grid written to " << cfg.out_dir << "\n";
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
