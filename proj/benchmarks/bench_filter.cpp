// Filtering and prediction hot paths at congestion-scenario scale.

#include <benchmark/benchmark.h>

#include "vigil/scenarios.hpp"
#include "vigil/trainer.hpp"

using namespace vigil;

namespace {

const ModelBundle& congestion_bundle() {
    static const ModelBundle bundle = [] {
        BundleOptions opts;
        opts.prune = true;
        return make_bundle(build_congestion_scenario({}), opts);
    }();
    return bundle;
}

void BM_FilterStep(benchmark::State& state) {
    const ModelBundle& b = congestion_bundle();
    Rng rng(7);
    FilterState f = filter_init(b.product, b.product.num_queries - 1, 3);
    int q = 0;
    for (auto _ : state) {
        // Cycle queries; the null observation is always possible.
        f = filter_step(f, b.ops, b.product.num_queries - 1, 3);
        benchmark::DoNotOptimize(f.posterior.data());
        q = (q + 1) % b.product.num_queries;
    }
}
BENCHMARK(BM_FilterStep);

void BM_SafetyPrediction(benchmark::State& state) {
    const ModelBundle& b = congestion_bundle();
    const FilterState f = filter_init(b.product, b.product.num_queries - 1, 3);
    for (auto _ : state) {
        const double p = safety_probability(f, b.predictor);
        benchmark::DoNotOptimize(p);
    }
}
BENCHMARK(BM_SafetyPrediction);

void BM_BuildSafetyPredictor(benchmark::State& state) {
    const ModelBundle& b = congestion_bundle();
    for (auto _ : state) {
        const SafetyPredictor sp = build_safety_predictor(b.product, state.range(0));
        benchmark::DoNotOptimize(sp.safe_row.data());
    }
}
BENCHMARK(BM_BuildSafetyPredictor)->Arg(1)->Arg(5)->Arg(15);

void BM_SampleTrajectory(benchmark::State& state) {
    const ModelBundle& b = congestion_bundle();
    PolicyConfig cfg;
    cfg.variant = PolicyVariant::uniform;
    cfg.num_obs = b.product.num_obs;
    cfg.num_queries = b.product.num_queries;
    const PolicyParams uniform = PolicyParams::init(cfg);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const EpisodeSample ep = sample_trajectory(b, uniform, seed++, false);
        benchmark::DoNotOptimize(ep.record.p_safe.data());
    }
}
BENCHMARK(BM_SampleTrajectory);

}  // namespace
