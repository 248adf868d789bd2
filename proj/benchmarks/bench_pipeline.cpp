// Hot-path benchmarks: curve interpolation, FastICA fitting, and exact
// Shapley attribution.

#include <benchmark/benchmark.h>

#include "cslearn/curves.hpp"
#include "cslearn/explain.hpp"
#include "cslearn/ica.hpp"

namespace {

using namespace cslearn;

void BM_pchip_interpolate(benchmark::State& state) {
    const long long span = state.range(0);
    std::vector<std::pair<long long, double>> obs;
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (long long d = 0; d <= span; d += 14) obs.emplace_back(d, u(rng));
    curves::DaySpan grid{0, span};
    for (auto _ : state) {
        auto c = curves::interpolate_measurement(obs, grid);
        benchmark::DoNotOptimize(c.values.data());
    }
    state.SetItemsProcessed(state.iterations() * (span + 1));
}
BENCHMARK(BM_pchip_interpolate)->Arg(365)->Arg(3650);

void BM_rash_intensity(benchmark::State& state) {
    const long long span = 3650;
    std::vector<long long> days;
    Rng rng(11);
    std::uniform_int_distribution<long long> d(0, span);
    for (int i = 0; i < 200; ++i) days.push_back(d(rng));
    curves::RashParams params;
    params.seed = 13;
    curves::DaySpan grid{0, span};
    for (auto _ : state) {
        auto c = curves::code_intensity(days, grid, params);
        benchmark::DoNotOptimize(c.values.data());
    }
}
BENCHMARK(BM_rash_intensity);

void BM_fastica(benchmark::State& state) {
    const int p = 40, k = static_cast<int>(state.range(0)), n = 2000;
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd s(k, n), a(p, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) s(i, j) = u(rng) * u(rng);  // non-Gaussian
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = u(rng);
    const Eigen::MatrixXd x = a * s;
    for (auto _ : state) {
        auto white = ica::whiten(x, k);
        Rng fit_rng(17);
        auto result = ica::fastica(white.data, ica::Contrast::logcosh, 1e-4, 200, fit_rng);
        benchmark::DoNotOptimize(result.rotation.data());
    }
}
BENCHMARK(BM_fastica)->Arg(8)->Arg(16);

void BM_shap_exact_trees(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0)), n = 400;
    Rng rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    explain::LabeledCohort cohort;
    cohort.features.resize(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) cohort.features(i, j) = g(rng);
    for (int j = 0; j < n; ++j)
        cohort.labels.push_back(cohort.features(0, j) + 0.5 * cohort.features(1, j) > 0 ? 1 : 0);
    cohort.provenance.resize(n);
    explain::Hyperparams hp;
    hp.rounds = 50;
    auto model = explain::train_model(cohort, hp);
    const Eigen::MatrixXd background = cohort.features.leftCols(64);
    for (auto _ : state) {
        auto ex = explain::shap_exact(model, cohort.features.col(0), background);
        benchmark::DoNotOptimize(ex.phi.data());
    }
}
BENCHMARK(BM_shap_exact_trees)->Arg(8)->Arg(12);

}  // namespace

BENCHMARK_MAIN();
