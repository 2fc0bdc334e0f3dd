// Serial reference vs OpenMP kernels. Both paths produce identical results;
// this only measures time.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "eflash/cell_array.hpp"
#include "eflash/nmcu.hpp"
#include "eflash/program_verify.hpp"

namespace {

using namespace eflash;

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_MvmKernel(benchmark::State& state) {
  LayerDescriptor d;
  d.in_dim = 1024;
  d.out_dim = static_cast<std::size_t>(state.range(1));
  d.bias.assign(d.out_dim, 0);
  d.requant_scale.assign(d.out_dim, 0.01);
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> w4(-8, 7), i8(-128, 127);
  std::vector<std::int8_t> w(d.weight_count()), x(d.chunks() * kPeLanes), out(d.out_dim);
  for (auto& v : w) v = static_cast<std::int8_t>(w4(gen));
  for (auto& v : x) v = static_cast<std::int8_t>(i8(gen));
  const Exec exec = exec_of(state);
  for (auto _ : state) {
    mvm_kernel(w, d, x, out, exec);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.weight_count()));
}
BENCHMARK(BM_MvmKernel)->ArgsProduct({{0, 1}, {64, 256, 1024}})->ArgNames({"parallel", "out"});

MacroConfig full_macro() {
  MacroConfig cfg;
  cfg.geometry.banks = 16;
  cfg.geometry.rows_per_bank = 256;  // 1M cells
  return cfg;
}

void BM_EraseAll(benchmark::State& state) {
  EflashMacro m(full_macro());
  const Exec exec = exec_of(state);
  for (auto _ : state) m.erase_all(exec);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.geometry().total_cells()));
}
BENCHMARK(BM_EraseAll)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

void BM_Bake(benchmark::State& state) {
  EflashMacro m(full_macro());
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> w4(-8, 7);
  std::vector<std::int8_t> w(64 * kCellsPerRow);
  for (auto& v : w) v = static_cast<std::int8_t>(w4(gen));
  program_pattern(m, w);
  DriftParams p;
  p.loss_fraction = 0.01;
  p.sigma_mv = 15.0;
  const Exec exec = exec_of(state);
  for (auto _ : state) {
    state.PauseTiming();
    EflashMacro copy = m;
    state.ResumeTiming();
    benchmark::DoNotOptimize(copy.apply_bake(p, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.geometry().total_cells()));
}
BENCHMARK(BM_Bake)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
