#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "flowguide/chunk.hpp"
#include "flowguide/kinematics.hpp"

namespace flowguide {

struct PointCloud {
    Eigen::Matrix3Xd points;          // meters, world frame
    std::vector<double> scores;       // optional per-point relevance, empty if absent
    std::vector<std::string> labels;  // optional per-point label, empty if absent

    int size() const { return static_cast<int>(points.cols()); }
    bool has_scores() const { return !scores.empty(); }
    bool has_labels() const { return !labels.empty(); }
};

struct GridBounds {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    void validate() const {
        if (!(min.array() < max.array()).all())
            throw std::invalid_argument("GridBounds: min must be strictly below max per axis");
    }
};

struct OccupancyGrid {
    Eigen::Vector3i dims;   // nx, ny, nz
    double voxel_size = 0.0;
    Vec3 origin = Vec3::Zero();  // corner of voxel (0,0,0)
    std::vector<uint8_t> occupied;
    int dropped_points = 0;  // out-of-bounds inputs

    size_t index(int i, int j, int k) const {
        return (static_cast<size_t>(k) * dims.y() + j) * dims.x() + i;
    }
    bool at(int i, int j, int k) const { return occupied[index(i, j, k)] != 0; }
    Vec3 voxel_center(int i, int j, int k) const {
        return origin + voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
    }
    size_t voxel_count() const { return occupied.size(); }
};

/// Unsigned exterior distance field on voxel centers: 0 on occupied voxels,
/// Euclidean distance to the nearest occupied voxel center elsewhere.
/// With no occupied voxels all distances are +inf ("no obstacle").
struct SdfGrid {
    Eigen::Vector3i dims;
    double voxel_size = 0.0;
    Vec3 origin = Vec3::Zero();
    std::vector<double> distance;         // meters
    std::vector<int64_t> squared_voxels;  // exact squared distance in voxel units (-1 = inf)
    double barrier_d = 0.15;
    bool has_obstacles = false;

    size_t index(int i, int j, int k) const {
        return (static_cast<size_t>(k) * dims.y() + j) * dims.x() + i;
    }
    double node(int i, int j, int k) const { return distance[index(i, j, k)]; }
    Vec3 node_position(int i, int j, int k) const {
        return origin + voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
    }
};

/// Quantize a point cloud; a voxel is occupied iff at least one in-bounds
/// point falls in it. Out-of-bounds points are dropped and counted.
OccupancyGrid build_occupancy(const PointCloud& cloud, double voxel_size, const GridBounds& bounds);

/// Exact Euclidean distance transform (separable lower-envelope parabolas).
SdfGrid compute_sdf(const OccupancyGrid& grid, double barrier_d = 0.15);

/// Trilinear interpolation of node distances; queries outside the node
/// lattice clamp to the boundary and add the Euclidean offset to the clamp.
double query_sdf(const SdfGrid& sdf, const Vec3& x);

/// Forward-difference node gradients, trilinearly interpolated to x.
Vec3 query_sdf_gradient(const SdfGrid& sdf, const Vec3& x);

/// Per-point relevance score; must be finite. Failures are treated as 0.
using RelevanceScorer = std::function<double(const Vec3& point, const std::string& label)>;

RelevanceScorer label_match_scorer(const std::string& target_label);
/// Reads the cloud's own score column (0 when absent).
double file_score(const PointCloud& cloud, int index);

/// Remove points whose score strictly exceeds the nearest-rank percentile of
/// the score distribution. With all scores equal nothing is removed.
PointCloud filter_task_relevant(const PointCloud& cloud, const RelevanceScorer& scorer,
                                double percentile);
PointCloud filter_task_relevant_by_file_scores(const PointCloud& cloud, double percentile);

/// Remove points within `margin` of any robot probe point at the given state.
PointCloud robot_self_filter(const PointCloud& cloud, const RobotModel& model,
                             const RobotState& state, double margin);

struct NormalizationBound {
    double z_estimate = 0.0;      // Monte-Carlo integral of SDF over the risk shell
    double z_std_error = 0.0;
    double upper_bound = 0.0;     // d * V(shell), estimated from the same samples
    double shell_volume = 0.0;
    double shell_volume_std_error = 0.0;
};

/// Monte-Carlo estimate of Z = integral of SDF over {0 < SDF <= d} within the
/// grid bounds, together with the analytic bound d*V.
NormalizationBound normalization_bound(const SdfGrid& sdf, int num_samples, uint64_t seed);

/// ASCII PLY ingestion: x,y,z with optional score and label properties.
PointCloud load_ply(const std::string& path);
/// CSV with header: x,y,z[,score][,label].
PointCloud load_cloud_csv(const std::string& path);
void save_cloud_csv(const PointCloud& cloud, const std::string& path);

/// Debug export: flat little-endian float64 distances plus a JSON sidecar
/// (dims, voxel size, origin, barrier).
void export_sdf(const SdfGrid& sdf, const std::string& binary_path, const std::string& meta_path);

}  // namespace flowguide
