#include <benchmark/benchmark.h>

#include "flowguide/flow.hpp"
#include "flowguide/scenes.hpp"

using namespace flowguide;

namespace {

struct BenchRig {
    RobotModel model = RobotModel::default_free_gripper();
    scenes::ScenePrior policy = scenes::family_prior("corridor", model, 15);
    Scene scene = scenes::make_scene("corridor", 0);
    FieldSetup setup = [] {
        FieldSetup f;
        f.collision.enabled = true;
        return f;
    }();
    std::vector<WeightedField> fields = instantiate_fields(setup, scene);
    GuidanceChain chain{LatentDecoder(), &model, scene.start_state, TweedieJacobian::Scaled};
    Observation obs = scenes::observation_at(scene.start_state.position, scene.obs_id);
};

}  // namespace

static void BM_UnguidedChunk(benchmark::State& state) {
    BenchRig rig;
    SamplerConfig cfg;
    uint64_t seed = 0;
    for (auto _ : state) {
        cfg.seed = seed++;
        benchmark::DoNotOptimize(sample_unguided(rig.policy, rig.obs, cfg).values.data());
    }
}
BENCHMARK(BM_UnguidedChunk)->Unit(benchmark::kMicrosecond);

static void BM_GuidedChunk(benchmark::State& state) {
    BenchRig rig;
    SamplerConfig cfg;
    uint64_t seed = 0;
    for (auto _ : state) {
        cfg.seed = seed++;
        benchmark::DoNotOptimize(
            sample_guided(rig.policy, rig.obs, rig.fields, rig.chain, cfg).chunk.values.data());
    }
}
BENCHMARK(BM_GuidedChunk)->Unit(benchmark::kMicrosecond);

static void BM_CompositeGradient(benchmark::State& state) {
    BenchRig rig;
    ActionChunk a(15, rig.model.action_dim());
    Rng rng(5);
    for (int i = 0; i < a.horizon(); ++i)
        for (int j = 0; j < a.dim(); ++j) a.values(i, j) = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            composite_gradient(rig.chain, rig.policy, rig.obs, rig.fields, a, 0.5).gradient.data());
    }
}
BENCHMARK(BM_CompositeGradient)->Unit(benchmark::kMicrosecond);
