#include <benchmark/benchmark.h>

#include "qdsim/electrostatics.hpp"
#include "qdsim/fermi.hpp"
#include "qdsim/transport.hpp"

using namespace qdsim;

namespace {

const LayerStack& stack() {
    static const LayerStack s = load_stack(QDSIM_BENCH_DATA_DIR "/device_fig1a.json");
    return s;
}

void BM_FermiHalf(benchmark::State& st) {
    double eta = -30.0, acc = 0.0;
    for (auto _ : st) {
        acc += fermi_half(eta);
        eta = eta > 30.0 ? -30.0 : eta + 0.01;
    }
    benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_FermiHalf);

void BM_PoissonEquilibrium(benchmark::State& st) {
    const Mesh1D m = build_mesh(stack());
    for (auto _ : st) benchmark::DoNotOptimize(solve_equilibrium(stack(), m));
    st.counters["nodes"] = static_cast<double>(m.size());
}
BENCHMARK(BM_PoissonEquilibrium)->Unit(benchmark::kMillisecond);

void BM_PoissonRefined(benchmark::State& st) {
    const Mesh1D m = refine_mesh(build_mesh(stack()));
    for (auto _ : st) benchmark::DoNotOptimize(solve_equilibrium(stack(), m));
    st.counters["nodes"] = static_cast<double>(m.size());
}
BENCHMARK(BM_PoissonRefined)->Unit(benchmark::kMillisecond);

void BM_DriftDiffusion(benchmark::State& st) {
    const Mesh1D m = build_mesh(stack());
    const double V = static_cast<double>(st.range(0)) / 10.0;
    for (auto _ : st) benchmark::DoNotOptimize(solve_drift_diffusion(stack(), m, V));
}
BENCHMARK(BM_DriftDiffusion)->Arg(-5)->Arg(5)->Arg(15)->Unit(benchmark::kMillisecond);

}  // namespace
