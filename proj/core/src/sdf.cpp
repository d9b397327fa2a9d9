#include "flowguide/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowguide/rng.hpp"

namespace flowguide {

namespace {
constexpr int64_t kInfSq = -1;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

OccupancyGrid build_occupancy(const PointCloud& cloud, double voxel_size, const GridBounds& bounds) {
    bounds.validate();
    if (voxel_size <= 0.0) throw std::invalid_argument("build_occupancy: voxel_size must be positive");
    if (!cloud.points.allFinite()) throw std::invalid_argument("build_occupancy: non-finite points");

    OccupancyGrid grid;
    grid.voxel_size = voxel_size;
    grid.origin = bounds.min;
    for (int a = 0; a < 3; ++a)
        grid.dims(a) = std::max(1, static_cast<int>(std::ceil((bounds.max(a) - bounds.min(a)) / voxel_size)));
    grid.occupied.assign(static_cast<size_t>(grid.dims.x()) * grid.dims.y() * grid.dims.z(), 0);

    for (int m = 0; m < cloud.size(); ++m) {
        const Vec3 rel = (cloud.points.col(m) - grid.origin) / voxel_size;
        const int i = static_cast<int>(std::floor(rel.x()));
        const int j = static_cast<int>(std::floor(rel.y()));
        const int k = static_cast<int>(std::floor(rel.z()));
        if (i < 0 || j < 0 || k < 0 || i >= grid.dims.x() || j >= grid.dims.y() || k >= grid.dims.z()) {
            ++grid.dropped_points;
            continue;
        }
        grid.occupied[grid.index(i, j, k)] = 1;
    }
    return grid;
}

namespace {

/// 1D squared-distance transform (Felzenszwalb-Huttenlocher lower envelope).
/// f holds squared distances (kInfSq for +inf); exact for integer inputs.
void edt_1d(const std::vector<int64_t>& f, std::vector<int64_t>& out, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    out.assign(n, kInfSq);
    v.assign(n, 0);
    z.assign(n + 1, 0.0);

    int k = 0;
    bool any = false;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInfSq) continue;
        if (!any) {
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            any = true;
            k = 0;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = (static_cast<double>(f[q] - f[p]) + static_cast<double>(q) * q -
                 static_cast<double>(p) * p) /
                (2.0 * (q - p));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (!any) return;

    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const int64_t dq = q - v[k];
        out[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

SdfGrid compute_sdf(const OccupancyGrid& grid, double barrier_d) {
    if (grid.voxel_count() == 0) throw std::invalid_argument("compute_sdf: degenerate grid");
    SdfGrid sdf;
    sdf.dims = grid.dims;
    sdf.voxel_size = grid.voxel_size;
    sdf.origin = grid.origin;
    sdf.barrier_d = barrier_d;

    const int nx = grid.dims.x(), ny = grid.dims.y(), nz = grid.dims.z();
    std::vector<int64_t> sq(grid.voxel_count());
    for (size_t i = 0; i < sq.size(); ++i) {
        sq[i] = grid.occupied[i] ? 0 : kInfSq;
        if (grid.occupied[i]) sdf.has_obstacles = true;
    }

    if (sdf.has_obstacles) {
        const int nmax = std::max({nx, ny, nz});
        std::vector<int64_t> line(nmax), transformed(nmax);
        std::vector<int> v(nmax);
        std::vector<double> z(nmax + 1);

        // pass 1: along x
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j) {
                line.resize(nx);
                for (int i = 0; i < nx; ++i) line[i] = sq[sdf.index(i, j, k)];
                edt_1d(line, transformed, v, z);
                for (int i = 0; i < nx; ++i) sq[sdf.index(i, j, k)] = transformed[i];
            }
        // pass 2: along y
        for (int k = 0; k < nz; ++k)
            for (int i = 0; i < nx; ++i) {
                line.resize(ny);
                for (int j = 0; j < ny; ++j) line[j] = sq[sdf.index(i, j, k)];
                edt_1d(line, transformed, v, z);
                for (int j = 0; j < ny; ++j) sq[sdf.index(i, j, k)] = transformed[j];
            }
        // pass 3: along z
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                line.resize(nz);
                for (int k = 0; k < nz; ++k) line[k] = sq[sdf.index(i, j, k)];
                edt_1d(line, transformed, v, z);
                for (int k = 0; k < nz; ++k) sq[sdf.index(i, j, k)] = transformed[k];
            }
    }

    sdf.squared_voxels = std::move(sq);
    sdf.distance.resize(sdf.squared_voxels.size());
    for (size_t i = 0; i < sdf.distance.size(); ++i)
        sdf.distance[i] = sdf.squared_voxels[i] == kInfSq
                              ? kInf
                              : grid.voxel_size * std::sqrt(static_cast<double>(sdf.squared_voxels[i]));
    return sdf;
}

namespace {

struct CellLookup {
    int i0[3];          // lower node index per axis
    double frac[3];     // interpolation weight toward the upper node
    Vec3 clamp_offset;  // x - clamped(x), zero for interior queries
    bool clamped[3];
};

/// Node-lattice coordinates: node (i,j,k) sits at voxel center.
CellLookup locate(const SdfGrid& sdf, const Vec3& x) {
    CellLookup c;
    c.clamp_offset = Vec3::Zero();
    for (int a = 0; a < 3; ++a) {
        const double u = (x(a) - sdf.origin(a)) / sdf.voxel_size - 0.5;
        const double hi = static_cast<double>(sdf.dims(a) - 1);
        double uc = u;
        c.clamped[a] = false;
        if (u < 0.0) {
            uc = 0.0;
            c.clamped[a] = true;
        } else if (u > hi) {
            uc = hi;
            c.clamped[a] = true;
        }
        c.clamp_offset(a) = (u - uc) * sdf.voxel_size;
        int i = static_cast<int>(std::floor(uc));
        i = std::min(i, sdf.dims(a) - 2);
        i = std::max(i, 0);
        c.i0[a] = i;
        c.frac[a] = sdf.dims(a) == 1 ? 0.0 : uc - i;
    }
    return c;
}

double trilinear(const SdfGrid& sdf, const CellLookup& c,
                 const std::function<double(int, int, int)>& node) {
    double out = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? c.frac[0] : 1.0 - c.frac[0]) * (dy ? c.frac[1] : 1.0 - c.frac[1]) *
                                 (dz ? c.frac[2] : 1.0 - c.frac[2]);
                if (w == 0.0) continue;
                const int i = std::min(c.i0[0] + dx, sdf.dims.x() - 1);
                const int j = std::min(c.i0[1] + dy, sdf.dims.y() - 1);
                const int k = std::min(c.i0[2] + dz, sdf.dims.z() - 1);
                out += w * node(i, j, k);
            }
    return out;
}

/// Forward-difference node gradient (backward at the top boundary).
double node_gradient(const SdfGrid& sdf, int i, int j, int k, int axis) {
    int idx[3] = {i, j, k};
    if (sdf.dims(axis) == 1) return 0.0;
    int lo[3] = {i, j, k}, hi[3] = {i, j, k};
    if (idx[axis] + 1 < sdf.dims(axis))
        hi[axis] += 1;
    else
        lo[axis] -= 1;
    const double a = sdf.node(lo[0], lo[1], lo[2]);
    const double b = sdf.node(hi[0], hi[1], hi[2]);
    if (!std::isfinite(a) || !std::isfinite(b)) return 0.0;
    return (b - a) / sdf.voxel_size;
}

}  // namespace

double query_sdf(const SdfGrid& sdf, const Vec3& x) {
    if (!sdf.has_obstacles) return kInf;
    const CellLookup c = locate(sdf, x);
    const double interior =
        trilinear(sdf, c, [&](int i, int j, int k) { return sdf.node(i, j, k); });
    return interior + c.clamp_offset.norm();
}

Vec3 query_sdf_gradient(const SdfGrid& sdf, const Vec3& x) {
    if (!sdf.has_obstacles) return Vec3::Zero();
    const CellLookup c = locate(sdf, x);
    Vec3 g;
    for (int a = 0; a < 3; ++a)
        g(a) = trilinear(sdf, c, [&](int i, int j, int k) { return node_gradient(sdf, i, j, k, a); });
    const double off = c.clamp_offset.norm();
    if (off > 0.0) {
        // Outside the lattice the interpolated value moves only along the
        // unclamped axes; the offset term owns the clamped directions.
        for (int a = 0; a < 3; ++a)
            if (c.clamped[a]) g(a) = c.clamp_offset(a) / off;
    }
    return g;
}

RelevanceScorer label_match_scorer(const std::string& target_label) {
    return [target_label](const Vec3&, const std::string& label) {
        return label == target_label ? 1.0 : 0.0;
    };
}

double file_score(const PointCloud& cloud, int index) {
    return cloud.has_scores() ? cloud.scores[static_cast<size_t>(index)] : 0.0;
}

namespace {

PointCloud select_points(const PointCloud& cloud, const std::vector<int>& keep) {
    PointCloud out;
    out.points.resize(3, static_cast<Eigen::Index>(keep.size()));
    if (cloud.has_scores()) out.scores.reserve(keep.size());
    if (cloud.has_labels()) out.labels.reserve(keep.size());
    for (size_t n = 0; n < keep.size(); ++n) {
        out.points.col(static_cast<Eigen::Index>(n)) = cloud.points.col(keep[n]);
        if (cloud.has_scores()) out.scores.push_back(cloud.scores[static_cast<size_t>(keep[n])]);
        if (cloud.has_labels()) out.labels.push_back(cloud.labels[static_cast<size_t>(keep[n])]);
    }
    return out;
}

/// Nearest-rank percentile of a copy of the scores.
double nearest_rank_percentile(std::vector<double> scores, double percentile) {
    std::sort(scores.begin(), scores.end());
    const size_t n = scores.size();
    const size_t rank = static_cast<size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n)));
    return scores[std::min(n - 1, std::max<size_t>(rank, 1) - 1)];
}

PointCloud filter_by_scores(const PointCloud& cloud, const std::vector<double>& scores,
                            double percentile) {
    // Threshold is the nearest-rank percentile; only strictly greater scores
    // are removed, so an all-equal distribution passes through unchanged.
    const double threshold = nearest_rank_percentile(scores, percentile);
    std::vector<int> keep;
    keep.reserve(scores.size());
    for (size_t m = 0; m < scores.size(); ++m)
        if (!(scores[m] > threshold)) keep.push_back(static_cast<int>(m));
    return select_points(cloud, keep);
}

}  // namespace

PointCloud filter_task_relevant(const PointCloud& cloud, const RelevanceScorer& scorer,
                                double percentile) {
    if (percentile <= 0.0 || percentile >= 100.0)
        throw std::invalid_argument("filter_task_relevant: percentile must be in (0,100)");
    if (cloud.size() == 0) return cloud;
    std::vector<double> scores(static_cast<size_t>(cloud.size()));
    int failures = 0;
    for (int m = 0; m < cloud.size(); ++m) {
        double s = 0.0;
        try {
            s = scorer(cloud.points.col(m), cloud.has_labels() ? cloud.labels[static_cast<size_t>(m)]
                                                               : std::string());
            if (!std::isfinite(s)) {
                s = 0.0;
                ++failures;
            }
        } catch (const std::exception&) {
            s = 0.0;
            ++failures;
        }
        scores[static_cast<size_t>(m)] = s;
    }
    if (failures > 0)
        std::cerr << "filter_task_relevant: scorer failed on " << failures << " points (scored 0)\n";
    return filter_by_scores(cloud, scores, percentile);
}

PointCloud filter_task_relevant_by_file_scores(const PointCloud& cloud, double percentile) {
    if (percentile <= 0.0 || percentile >= 100.0)
        throw std::invalid_argument("filter_task_relevant: percentile must be in (0,100)");
    if (cloud.size() == 0) return cloud;
    std::vector<double> scores(static_cast<size_t>(cloud.size()));
    for (int m = 0; m < cloud.size(); ++m) scores[static_cast<size_t>(m)] = file_score(cloud, m);
    return filter_by_scores(cloud, scores, percentile);
}

PointCloud robot_self_filter(const PointCloud& cloud, const RobotModel& model,
                             const RobotState& state, double margin) {
    if (margin < 0.0) throw std::invalid_argument("robot_self_filter: margin must be >= 0");
    Eigen::Matrix3Xd probes(3, model.probe_count());
    if (model.variant == RobotVariant::PlanarArm) {
        probes = forward_kinematics(model, state.joint_angles);
    } else {
        for (int j = 0; j < model.probe_count(); ++j)
            probes.col(j) = state.position + state.rotation * model.probes[j].local;
    }
    std::vector<int> keep;
    keep.reserve(static_cast<size_t>(cloud.size()));
    for (int m = 0; m < cloud.size(); ++m) {
        bool near = false;
        for (int j = 0; j < probes.cols() && !near; ++j)
            near = (cloud.points.col(m) - probes.col(j)).norm() <= margin;
        if (!near) keep.push_back(m);
    }
    return select_points(cloud, keep);
}

NormalizationBound normalization_bound(const SdfGrid& sdf, int num_samples, uint64_t seed) {
    NormalizationBound out;
    if (!sdf.has_obstacles) return out;  // empty shell, Z = 0
    if (num_samples < 1) throw std::invalid_argument("normalization_bound: num_samples must be >= 1");

    const Vec3 lo = sdf.origin;
    const Vec3 hi = sdf.origin + sdf.voxel_size * sdf.dims.cast<double>();
    const double box_volume = (hi - lo).prod();

    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0, hits = 0.0;
    for (int n = 0; n < num_samples; ++n) {
        const Vec3 x(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                     rng.uniform(lo.z(), hi.z()));
        const double s = query_sdf(sdf, x);
        const double v = (s > 0.0 && s <= sdf.barrier_d) ? s : 0.0;
        sum += v;
        sum_sq += v * v;
        if (v > 0.0) hits += 1.0;
    }
    const double n = static_cast<double>(num_samples);
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    out.z_estimate = box_volume * mean;
    out.z_std_error = box_volume * std::sqrt(var / n);
    const double frac = hits / n;
    out.shell_volume = box_volume * frac;
    out.shell_volume_std_error = box_volume * std::sqrt(std::max(0.0, frac * (1.0 - frac)) / n);
    out.upper_bound = sdf.barrier_d * out.shell_volume;
    return out;
}

// ---------------------------------------------------------------------------
// File formats

PointCloud load_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ply: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
        throw std::runtime_error("load_ply: missing ply magic");

    int vertex_count = -1;
    std::vector<std::string> props;
    bool ascii = false;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            ascii = fmt == "ascii";
        } else if (tok == "element") {
            std::string name;
            ss >> name >> vertex_count;
            if (name != "vertex") throw std::runtime_error("load_ply: only vertex elements supported");
        } else if (tok == "property") {
            std::string type, name;
            ss >> type >> name;
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!ascii) throw std::runtime_error("load_ply: only ASCII PLY supported");
    if (vertex_count < 0) throw std::runtime_error("load_ply: missing vertex element");

    int ix = -1, iy = -1, iz = -1, iscore = -1, ilabel = -1;
    for (size_t p = 0; p < props.size(); ++p) {
        if (props[p] == "x") ix = static_cast<int>(p);
        if (props[p] == "y") iy = static_cast<int>(p);
        if (props[p] == "z") iz = static_cast<int>(p);
        if (props[p] == "score") iscore = static_cast<int>(p);
        if (props[p] == "label") ilabel = static_cast<int>(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error("load_ply: x/y/z properties required");

    PointCloud cloud;
    cloud.points.resize(3, vertex_count);
    if (iscore >= 0) cloud.scores.resize(static_cast<size_t>(vertex_count));
    if (ilabel >= 0) cloud.labels.resize(static_cast<size_t>(vertex_count));
    for (int m = 0; m < vertex_count; ++m) {
        if (!std::getline(in, line)) throw std::runtime_error("load_ply: truncated vertex data");
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (ss >> cell) cells.push_back(cell);
        if (cells.size() < props.size()) throw std::runtime_error("load_ply: short vertex row");
        cloud.points(0, m) = std::stod(cells[static_cast<size_t>(ix)]);
        cloud.points(1, m) = std::stod(cells[static_cast<size_t>(iy)]);
        cloud.points(2, m) = std::stod(cells[static_cast<size_t>(iz)]);
        if (iscore >= 0) cloud.scores[static_cast<size_t>(m)] = std::stod(cells[static_cast<size_t>(iscore)]);
        if (ilabel >= 0) cloud.labels[static_cast<size_t>(m)] = cells[static_cast<size_t>(ilabel)];
    }
    return cloud;
}

PointCloud load_cloud_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_cloud_csv: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("load_cloud_csv: empty file");
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
    }
    int ix = -1, iy = -1, iz = -1, iscore = -1, ilabel = -1;
    for (size_t p = 0; p < cols.size(); ++p) {
        if (cols[p] == "x") ix = static_cast<int>(p);
        if (cols[p] == "y") iy = static_cast<int>(p);
        if (cols[p] == "z") iz = static_cast<int>(p);
        if (cols[p] == "score") iscore = static_cast<int>(p);
        if (cols[p] == "label") ilabel = static_cast<int>(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error("load_cloud_csv: x,y,z columns required");

    std::vector<std::array<double, 3>> pts;
    std::vector<double> scores;
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        pts.push_back({std::stod(cells[static_cast<size_t>(ix)]), std::stod(cells[static_cast<size_t>(iy)]),
                       std::stod(cells[static_cast<size_t>(iz)])});
        if (iscore >= 0) scores.push_back(std::stod(cells[static_cast<size_t>(iscore)]));
        if (ilabel >= 0) labels.push_back(cells[static_cast<size_t>(ilabel)]);
    }
    PointCloud cloud;
    cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
    for (size_t m = 0; m < pts.size(); ++m)
        cloud.points.col(static_cast<Eigen::Index>(m)) = Vec3(pts[m][0], pts[m][1], pts[m][2]);
    cloud.scores = std::move(scores);
    cloud.labels = std::move(labels);
    return cloud;
}

void save_cloud_csv(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_cloud_csv: cannot open " + path);
    out << "x,y,z";
    if (cloud.has_scores()) out << ",score";
    if (cloud.has_labels()) out << ",label";
    out << "\n";
    out.precision(17);
    for (int m = 0; m < cloud.size(); ++m) {
        out << cloud.points(0, m) << "," << cloud.points(1, m) << "," << cloud.points(2, m);
        if (cloud.has_scores()) out << "," << cloud.scores[static_cast<size_t>(m)];
        if (cloud.has_labels()) out << "," << cloud.labels[static_cast<size_t>(m)];
        out << "\n";
    }
}

void export_sdf(const SdfGrid& sdf, const std::string& binary_path, const std::string& meta_path) {
    std::ofstream bin(binary_path, std::ios::binary);
    if (!bin) throw std::runtime_error("export_sdf: cannot open " + binary_path);
    bin.write(reinterpret_cast<const char*>(sdf.distance.data()),
              static_cast<std::streamsize>(sdf.distance.size() * sizeof(double)));

    nlohmann::json meta;
    meta["dims"] = {sdf.dims.x(), sdf.dims.y(), sdf.dims.z()};
    meta["voxel_size"] = sdf.voxel_size;
    meta["origin"] = {sdf.origin.x(), sdf.origin.y(), sdf.origin.z()};
    meta["barrier_d"] = sdf.barrier_d;
    meta["has_obstacles"] = sdf.has_obstacles;
    meta["layout"] = "x-fastest float64";
    std::ofstream out(meta_path);
    if (!out) throw std::runtime_error("export_sdf: cannot open " + meta_path);
    out << meta.dump(2) << "\n";
}

}  // namespace flowguide
