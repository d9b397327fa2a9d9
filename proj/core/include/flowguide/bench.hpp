#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowguide/scenes.hpp"
#include "flowguide/sim.hpp"

namespace flowguide::bench {

/// Parsed experiment configuration (single JSON document; see README).
struct ExperimentConfig {
    std::string family = "corridor";
    std::vector<std::string> scene_files;  // overrides family when non-empty

    std::string policy_type = "family";  // family | file | standard_normal
    std::string policy_file;
    double action_sigma = 0.3;

    std::string robot_file;  // default free gripper when empty

    FieldSetup fields;
    SamplerConfig sampler;
    ExecutionConfig execution;
    TweedieJacobian jacobian = TweedieJacobian::Scaled;

    int trials = 50;
    uint64_t master_seed = 12345;
    std::string out_dir;
    int parallel = 2;

    // sweep-lambda grid: `points` log-spaced values spanning `decades`
    // decades centered on `center` (plus a lambda = 0 column)
    int sweep_points = 8;
    double sweep_decades = 4.0;
    double sweep_center = 0.02;

    int latency_chunks = 100;

    // post-hoc optimizer baseline
    double posthoc_w_align = 100.0;
    double posthoc_w_coll = 1e7;
    double posthoc_w_bound = 0.1;
    double posthoc_w_goal = 1.0;
    int posthoc_iters = 100;
    double posthoc_lr = 1e-7;

    // train-policy inputs
    std::string dataset_file;
    std::vector<int> hidden_sizes = {128, 128};
    int train_epochs = 300;
    double train_lr = 1e-3;
    int dataset_episodes = 200;

    // build-grid inputs
    std::string cloud_file;
    std::string filter_label;
    double filter_percentile = 95.0;

    static ExperimentConfig load(const std::string& path);
    std::string canonical_json() const;
    uint64_t config_hash() const;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Wilson score interval for a binomial rate (95% by default).
Interval wilson_interval(int successes, int n, double z = 1.96);

struct ResultRow {
    std::string cell;
    int trials = 0;
    double success_rate = 0.0;
    Interval success_ci;
    double safety_rate = 0.0;
    Interval safety_ci;
    double mean_min_clearance = 0.0;
    double mean_chunks = 0.0;
    double mean_chunk_ms = 0.0;
    double mean_demo_deviation = std::numeric_limits<double>::quiet_NaN();
};

struct ResultTable {
    std::vector<ResultRow> rows;
    std::string ci_method = "wilson95";

    const ResultRow& row(const std::string& cell) const;
    void write_csv(const std::string& path) const;
};

struct EpisodeRecord {
    std::string cell;
    int episode = 0;
    uint64_t seed = 0;
    bool success = false;
    bool safe = true;
    int collisions = 0;
    double min_clearance = 0.0;
    double final_distance = 0.0;
    int chunks = 0;
    double mean_chunk_ms = 0.0;
    double demo_deviation = std::numeric_limits<double>::quiet_NaN();
    std::string failure_reason;
    std::string notes;

    std::string to_json_line() const;
    static EpisodeRecord from_json_line(const std::string& line);
};

/// One benchmark cell: a named arm with its own episode setup and scenes.
struct CellSpec {
    std::string name;
    EpisodeSetup setup;
    std::function<Scene(uint64_t trial_seed)> make_scene;
};

/// Run all cells (resuming from an existing episodes.jsonl in out_dir when
/// present), append new records, and aggregate the table. Episode seeds are
/// pure functions of (master seed, cell name, episode index).
ResultTable run_cells(const std::vector<CellSpec>& cells, const ExperimentConfig& cfg,
                      const std::string& command_name);

uint64_t episode_seed(uint64_t master_seed, const std::string& cell, int episode);

// The benchmark commands. Each returns the aggregated table and, when
// cfg.out_dir is set, writes episodes.jsonl / summary.csv / meta.json.
ResultTable cmd_sweep_lambda(const ExperimentConfig& cfg);
ResultTable cmd_ablation(const ExperimentConfig& cfg);
ResultTable cmd_synergy(const ExperimentConfig& cfg);
ResultTable cmd_posthoc(const ExperimentConfig& cfg);
ResultTable cmd_demo_follow(const ExperimentConfig& cfg);

struct LatencyReport {
    int chunks = 0;
    double unguided_chunk_ms = 0.0;
    double guided_chunk_ms = 0.0;
    double ratio = 0.0;
    double velocity_ms_per_chunk = 0.0;    // guided arm, policy evaluations
    double guidance_ms_per_chunk = 0.0;    // guided arm, chain gradients
    double sdf_query_ms_per_chunk = 0.0;   // portion of guidance spent in SDF queries
    double grid_rebuild_ms = 0.0;          // 64^3 occupancy + EDT build
    double unguided_step_ms = 0.0;
    double guided_step_ms = 0.0;

    void write_json(const std::string& path) const;
};

LatencyReport cmd_latency(const ExperimentConfig& cfg);

/// Fit the small velocity network on scripted (or file) data; writes the
/// policy JSON and a per-epoch loss CSV into out_dir.
void cmd_train_policy(const ExperimentConfig& cfg);

/// Build an SDF grid from a point-cloud file or a scene family, applying the
/// self/task-relevance filters, and export distances + metadata.
void cmd_build_grid(const ExperimentConfig& cfg);

/// Gradient-descent post-hoc smoothing of a sampled chunk against the scene
/// SDF (alignment + collision hinge + action bound + goal terms).
ActionChunk posthoc_optimize(const ActionChunk& chunk, const Scene& scene, const RobotModel& model,
                             const RobotState& state, const ExperimentConfig& cfg,
                             bool* diverged = nullptr);

}  // namespace flowguide::bench
