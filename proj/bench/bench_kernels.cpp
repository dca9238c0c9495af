#include <benchmark/benchmark.h>

#include <vector>

#include "rdmrecon/basis.hpp"
#include "rdmrecon/datalab.hpp"
#include "rdmrecon/integrals.hpp"
#include "rdmrecon/operators.hpp"

// Serial/parallel timing for the kernels that carry both implementations.
// The unit tests pin the two variants to bitwise-identical results; this
// target shows what the OpenMP path buys at a realistic problem size.

using namespace rdmrecon;

namespace {

struct Workload {
  BasisSet basis;
  CellImages images;
  std::vector<ScatteringVector> reflections;
  std::vector<ComptonPoint> compton;
  std::vector<Vec3> grid;
};

const Workload& workload() {
  static const Workload w = [] {
    Workload s{BasisSet::load(RDMRECON_SOURCE_DIR "/fixtures/water/geometry.txt",
                              RDMRECON_SOURCE_DIR "/fixtures/water/basis.rich.json"),
               {},
               {},
               {},
               {}};
    s.images.rotations = {Mat3::Identity()};
    s.images.translations = {Vec3::Zero()};
    Mat3 cell = Vec3(10.0, 11.0, 9.5).asDiagonal();
    s.reflections = hkl_grid(cell, 1.0);
    for (const Vec3& u : standard_directions())
      for (double q : momentum_grid(6.0, 0.05)) s.compton.push_back({u, q});
    for (int ix = 0; ix < 40; ++ix)
      for (int iy = 0; iy < 40; ++iy)
        for (int iz = 0; iz < 40; ++iz)
          s.grid.push_back(Vec3(-4.0 + 0.2 * ix, -4.0 + 0.2 * iy, -4.0 + 0.2 * iz));
    return s;
  }();
  return w;
}

void bm_sf_batch(benchmark::State& state, Exec exec) {
  const Workload& w = workload();
  for (auto _ : state)
    benchmark::DoNotOptimize(sf_operator_batch(w.basis, w.images, w.reflections, nullptr, exec));
}

void bm_dcp_batch(benchmark::State& state, Exec exec) {
  const Workload& w = workload();
  for (auto _ : state)
    benchmark::DoNotOptimize(dcp_operator_batch(w.basis, w.compton, exec));
}

void bm_eri_tensor(benchmark::State& state, Exec exec) {
  const Workload& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(eri_tensor(w.basis, exec));
}

void bm_grid_evaluate(benchmark::State& state, Exec exec) {
  const Workload& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(w.basis.evaluate(w.grid, exec));
}

BENCHMARK_CAPTURE(bm_sf_batch, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_sf_batch, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_dcp_batch, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_dcp_batch, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_eri_tensor, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_eri_tensor, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_grid_evaluate, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_grid_evaluate, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
