#include <benchmark/benchmark.h>

#include "bssr/bilevel.hpp"
#include "bssr/data.hpp"

using namespace bssr;

static void BM_Matmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    SeededRng rng(1);
    const Matrix a = gauss_sample(rng, n, n, 0.0, 1.0);
    const Matrix b = gauss_sample(rng, n, n, 0.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

namespace {

struct TrainFixture {
    Splits splits;
    RegressionNet net;
    UncertaintyLearner ul;
    SeededRng rng{3};

    TrainFixture() {
        SeededRng dsrng(7);
        const Dataset ds = synth_generate(dsrng, 2000, "sine-hetero");
        SplitConfig sc;
        sc.label_ratio = 0.1;
        splits = split(ds, sc);
        SeededRng init_rng(5);
        net = init_regression_net(init_rng, 1, {32, 32}, 16);
        ul = init_uncertainty_learner(init_rng, 16, 6.0);
    }
};

}  // namespace

static void BM_ForwardBackward(benchmark::State& state) {
    TrainFixture fx;
    const Matrix x = gauss_sample(fx.rng, 32, 1, 0.0, 1.0);
    std::vector<double> y(32);
    for (auto& v : y) v = fx.rng.next_gauss();
    for (auto _ : state) {
        const auto fwd = forward_regression(fx.net, x);
        std::vector<double> g(32);
        for (std::size_t i = 0; i < 32; ++i) g[i] = 2.0 * (fwd.predictions[i] - y[i]);
        benchmark::DoNotOptimize(backward_regression(fx.net, fwd, g));
    }
}
BENCHMARK(BM_ForwardBackward);

static void BM_BilevelIteration(benchmark::State& state) {
    TrainFixture fx;
    for (auto _ : state) {
        TriBatch tb = get_tri_batch(fx.rng, fx.splits, 32, 32, AugmentConfig{}, fx.net);
        auto [updated, rec] = inner_step(fx.net, fx.ul, tb, 1.0, 1e-3);
        const Hypergradient hg = hypergradient_phi(rec, updated, fx.ul, tb, 1.0);
        benchmark::DoNotOptimize(outer_step(fx.ul, hg, 1e-3));
        fx.net = std::move(updated);
    }
}
BENCHMARK(BM_BilevelIteration);
