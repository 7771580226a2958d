#include <benchmark/benchmark.h>

#include "qdsim/constants.hpp"
#include "qdsim/spectro_fit.hpp"
#include "qdsim/synthetic.hpp"

using namespace qdsim;

namespace {

void BM_FitG2(benchmark::State& st) {
    G2TraceSpec g;
    g.irf_sigma = calibrate_irf_for_raw_minimum(g.g0, g.tau_c, g.bin_width, 0.18);
    g.plateau = 1e4;
    const G2Trace t = synth_g2_trace(g, 1);
    for (auto _ : st) benchmark::DoNotOptimize(fit_g2(t));
}
BENCHMARK(BM_FitG2)->Unit(benchmark::kMillisecond);

void BM_ExtractFss(benchmark::State& st) {
    FssSeriesSpec s;
    for (int k = 0; k < 12; ++k) s.angles_deg.push_back(30.0 * k);
    s.mean_energy_eV = constants::energy_eV_from_wavelength_nm(1529.0);
    s.delta_ueV = 16.0;
    s.wavelengths = uniform_grid(1528.5, 1529.5, 401);
    const auto series = synth_fss_series(s, 2);
    for (auto _ : st) benchmark::DoNotOptimize(extract_fss(series));
}
BENCHMARK(BM_ExtractFss)->Unit(benchmark::kMillisecond);

void BM_FitLifetime(benchmark::State& st) {
    std::vector<double> t;
    for (int k = 0; k <= 600; ++k) t.push_back(0.05 * k);
    const DecayTrace d = synth_decay(t, 3000.0, 0.4, 7000.0, 2.2, 0.0, 3);
    for (auto _ : st) benchmark::DoNotOptimize(fit_lifetime(d));
}
BENCHMARK(BM_FitLifetime)->Unit(benchmark::kMillisecond);

}  // namespace
