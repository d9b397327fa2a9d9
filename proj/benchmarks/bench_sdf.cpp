#include <benchmark/benchmark.h>

#include "flowguide/rng.hpp"
#include "flowguide/sdf.hpp"

using namespace flowguide;

namespace {

PointCloud random_cloud(int n, double extent, uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(3, n);
    for (int m = 0; m < n; ++m)
        cloud.points.col(m) =
            Vec3(rng.uniform(0.0, extent), rng.uniform(0.0, extent), rng.uniform(0.0, extent));
    return cloud;
}

}  // namespace

static void BM_GridBuild64(benchmark::State& state) {
    const PointCloud cloud = random_cloud(20000, 0.64, 7);
    GridBounds bounds;
    bounds.min = Vec3::Zero();
    bounds.max = Vec3(0.64, 0.64, 0.64);
    for (auto _ : state) {
        const OccupancyGrid occ = build_occupancy(cloud, 0.01, bounds);
        const SdfGrid sdf = compute_sdf(occ);
        benchmark::DoNotOptimize(sdf.distance.data());
    }
}
BENCHMARK(BM_GridBuild64)->Unit(benchmark::kMillisecond);

static void BM_SdfQuery(benchmark::State& state) {
    const PointCloud cloud = random_cloud(5000, 0.64, 11);
    GridBounds bounds;
    bounds.min = Vec3::Zero();
    bounds.max = Vec3(0.64, 0.64, 0.64);
    const SdfGrid sdf = compute_sdf(build_occupancy(cloud, 0.01, bounds));
    Rng rng(3);
    for (auto _ : state) {
        const Vec3 x(rng.uniform(0.0, 0.64), rng.uniform(0.0, 0.64), rng.uniform(0.0, 0.64));
        benchmark::DoNotOptimize(query_sdf(sdf, x));
        benchmark::DoNotOptimize(query_sdf_gradient(sdf, x));
    }
}
BENCHMARK(BM_SdfQuery);

BENCHMARK_MAIN();
