#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "saf/model.hpp"
#include "saf/panel.hpp"
#include "saf/rng.hpp"
#include "saf/saf.hpp"
#include "saf/synthetic.hpp"
#include "saf/tensor.hpp"

namespace {

saf::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    saf::CounterRng rng(seed);
    saf::Tensor t = saf::Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = rng.normal();
    return t;
}

struct Fixture {
    saf::SafConfig config;
    saf::ModelBundle bundle;
    std::vector<saf::WindowSample> samples;

    Fixture() {
        config.window = 30;
        config.mask = 15;
        config.horizon = 5;
        config.adapt_rate = 1e-4;
        config.train_rate = 1e-3;

        saf::ArProcessSpec ar;
        ar.variant = saf::ArVariant::AR3;
        ar.duration = 400;
        ar.seed = 17;
        saf::PanelDataset panel = saf::ar_panel(ar);
        saf::PanelSplits splits = saf::split_ranges(panel.common_length(), {100, 100});
        saf::NormalizationStats stats =
            saf::fit_normalization(panel, splits.train, saf::NormalizationMode::Global);
        saf::PanelDataset normed = saf::apply_normalization(panel, stats);
        samples = saf::make_windows(normed, splits.train, config.window, config.horizon, false)
                      .samples;

        saf::ModelDims dims;
        dims.covariates = 1;
        dims.statics = 0;
        dims.hidden = 16;
        dims.window = config.window;
        dims.horizon = config.horizon;
        dims.error_channel = true;
        bundle = saf::init_params(dims, saf::MergeMode::Additive, 3);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    saf::Tensor a = random_matrix(n, n, 1);
    saf::Tensor b = random_matrix(n, n, 2);
    for (auto _ : state) {
        saf::Tape tape;
        saf::Tensor c = tape.matmul(a, b);
        benchmark::DoNotOptimize(c.at(0, 0));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_generate_ar(benchmark::State& state) {
    saf::ArProcessSpec spec;
    spec.variant = saf::ArVariant::AR3;
    spec.duration = static_cast<std::size_t>(state.range(0));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        spec.seed = seed++;
        benchmark::DoNotOptimize(saf::generate_ar(spec));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_generate_ar)->Arg(1000)->Arg(10000);

void BM_infer(benchmark::State& state) {
    Fixture& f = fixture();
    const saf::WindowSample& sample = f.samples.front();
    for (auto _ : state) {
        std::vector<double> forecast =
            saf::infer(f.bundle, f.config, sample.window, sample.statics);
        benchmark::DoNotOptimize(forecast);
    }
}
BENCHMARK(BM_infer);

void BM_baseline_infer(benchmark::State& state) {
    Fixture& f = fixture();
    saf::ModelDims dims = f.bundle.dims;
    dims.error_channel = false;
    saf::ModelBundle baseline = saf::init_params(dims, saf::MergeMode::Additive, 3);
    const saf::WindowSample& sample = f.samples.front();
    for (auto _ : state) {
        std::vector<double> forecast =
            saf::baseline_infer(baseline, f.config, sample.window, sample.statics);
        benchmark::DoNotOptimize(forecast);
    }
}
BENCHMARK(BM_baseline_infer);

void BM_train_step(benchmark::State& state) {
    Fixture& f = fixture();
    const auto batch_size = static_cast<std::size_t>(state.range(0));
    std::vector<saf::WindowSample> batch(f.samples.begin(), f.samples.begin() + batch_size);
    saf::ModelBundle bundle = f.bundle.clone();
    for (auto _ : state) {
        double loss = saf::train_step(bundle, f.config, batch);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_train_step)->Arg(1)->Arg(8)->Arg(64);

} // namespace

BENCHMARK_MAIN();
