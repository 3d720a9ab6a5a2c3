// Recurrent-policy forward and backward costs at training shapes.

#include <benchmark/benchmark.h>

#include "vigil/policy.hpp"

using namespace vigil;

namespace {

PolicyParams bench_policy(int hidden) {
    PolicyConfig cfg;
    cfg.variant = PolicyVariant::recurrent;
    cfg.num_obs = 4;
    cfg.num_queries = 11;
    cfg.hidden = hidden;
    cfg.seed = 11;
    return PolicyParams::init(cfg);
}

void BM_PolicyAdvance(benchmark::State& state) {
    const PolicyParams p = bench_policy(static_cast<int>(state.range(0)));
    EncoderState enc = reset_encoder(p);
    int t = 0;
    for (auto _ : state) {
        enc = advance(p, enc, t % 4, t % 11);
        benchmark::DoNotOptimize(enc.hidden.data());
        ++t;
    }
}
BENCHMARK(BM_PolicyAdvance)->Arg(32)->Arg(64);

void BM_EpisodeWeightedScore(benchmark::State& state) {
    const PolicyParams p = bench_policy(32);
    const int steps = static_cast<int>(state.range(0));
    GradientBuffer tape(p);
    EncoderState enc = reset_encoder(p);
    for (int t = 0; t <= steps; ++t) {
        tape.record_choice(enc, t % 11);
        if (t < steps) enc = tape.advance(enc, t % 4, t % 11);
    }
    std::vector<double> w(static_cast<std::size_t>(steps) + 1, 0.5);
    for (auto _ : state) {
        const Eigen::VectorXd g = tape.weighted_score(w);
        benchmark::DoNotOptimize(g.data());
    }
}
BENCHMARK(BM_EpisodeWeightedScore)->Arg(30);

void BM_PerStepScores(benchmark::State& state) {
    const PolicyParams p = bench_policy(32);
    const int steps = static_cast<int>(state.range(0));
    GradientBuffer tape(p);
    EncoderState enc = reset_encoder(p);
    for (int t = 0; t <= steps; ++t) {
        tape.record_choice(enc, t % 11);
        if (t < steps) enc = tape.advance(enc, t % 4, t % 11);
    }
    for (auto _ : state) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(p.dim());
        for (int t = 0; t <= steps; ++t) acc += tape.step_score(t);
        benchmark::DoNotOptimize(acc.data());
    }
}
BENCHMARK(BM_PerStepScores)->Arg(30);

}  // namespace
