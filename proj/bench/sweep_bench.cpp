// Serial reference vs OpenMP kernels on the sweeps that dominate experiment runtime.
#include "dvi/dct.hpp"
#include "dvi/diagnostics.hpp"
#include "dvi/genfun.hpp"
#include "dvi/optctrl.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dvi;

const CatalogSystem& double_well() {
  static const CatalogSystem sys = make_system("double-well");
  return sys;
}

const std::vector<PhaseState>& probes() {
  static const auto p = sample_probes(double_well().initial, 0.5, 256, 7);
  return p;
}

StepMap midpoint_map() {
  StepperConfig cfg;
  cfg.tau = 0.1;
  return make_step_map(Scheme::Midpoint, double_well(), cfg);
}

void BM_DefectSerial(benchmark::State& st) {
  const StepMap step = midpoint_map();
  for (auto _ : st) benchmark::DoNotOptimize(symplectic_defect_serial(step, probes()));
}
void BM_DefectParallel(benchmark::State& st) {
  const StepMap step = midpoint_map();
  for (auto _ : st) benchmark::DoNotOptimize(symplectic_defect(step, probes()));
}

const std::vector<StateTransitionMatrix>& earth_stms() {
  static const auto prop = [] {
    const CatalogSystem sys = make_system("earth-j2j3");
    return propagate_stm(sys.hamiltonian, sys.initial, Scheme::Midpoint, 0.01, 3142);
  }();
  return prop.stms;
}

void BM_ExactnessSerial(benchmark::State& st) {
  const auto& stms = earth_stms();
  for (auto _ : st) benchmark::DoNotOptimize(exactness_series_serial(stms));
}
void BM_ExactnessParallel(benchmark::State& st) {
  const auto& stms = earth_stms();
  for (auto _ : st) benchmark::DoNotOptimize(exactness_series(stms));
}

void BM_CertifySerial(benchmark::State& st) {
  const CanonicalMap map = rotation_map();
  for (auto _ : st) benchmark::DoNotOptimize(certify_canonical_serial(map, 0, 100000));
}
void BM_CertifyParallel(benchmark::State& st) {
  const CanonicalMap map = rotation_map();
  for (auto _ : st) benchmark::DoNotOptimize(certify_canonical(map, 0, 100000));
}

struct Heisenberg {
  OptimalControlProblem ocp = make_heisenberg_problem();
  DiscreteSolution sol = shoot(ocp, Geometry::Midpoint, ocp.default_p0_guess).solution;
};

const Heisenberg& heisenberg() {
  static const Heisenberg h;
  return h;
}

void BM_PerturbationSerial(benchmark::State& st) {
  const auto& h = heisenberg();
  for (auto _ : st) benchmark::DoNotOptimize(perturbation_oracle_serial(h.ocp, h.sol, 32, 0.05, 1));
}
void BM_PerturbationParallel(benchmark::State& st) {
  const auto& h = heisenberg();
  for (auto _ : st) benchmark::DoNotOptimize(perturbation_oracle(h.ocp, h.sol, 32, 0.05, 1));
}

}  // namespace

BENCHMARK(BM_DefectSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DefectParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExactnessSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExactnessParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CertifySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CertifyParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerturbationSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerturbationParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
