#include <benchmark/benchmark.h>

#include <filesystem>

#include "cellscreen/analysis.hpp"
#include "cellscreen/ingest.hpp"
#include "cellscreen/protocol.hpp"

using namespace cellscreen;

namespace {

cell_group_params fresh_params() {
  cell_group_params p;
  p.capacity_ah = 5.0;
  p.r_s_ohm = 0.030;
  p.r_1_ohm = 0.010;
  p.c_1_f = 5000.0;
  return p;
}

time_series_log interrupt_log() {
  auto pack = make_uniform_pack(fresh_params(), 0.0, 0.05);
  run_options opt;
  opt.pack_id = "B";
  return run_protocol(pack, build_standard_sequence(sequence_kind::ts4), opt).log;
}

}  // namespace

static void BM_StepPack(benchmark::State& state) {
  auto pack = make_uniform_pack(fresh_params(), 0.005, 0.5);
  double current = 1.667;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pack.step(current, 0.1));
    if (pack.states()[0].soc >= 1.0 || pack.states()[0].soc <= 0.0) {
      current = -current;
    }
  }
  state.SetItemsProcessed(state.iterations() * pack_model::group_count);
}
BENCHMARK(BM_StepPack);

static void BM_RunTs4(benchmark::State& state) {
  for (auto _ : state) {
    auto pack = make_uniform_pack(fresh_params(), 0.0, 0.05);
    run_options opt;
    opt.pack_id = "B";
    auto rr = run_protocol(pack, build_standard_sequence(sequence_kind::ts4), opt);
    benchmark::DoNotOptimize(rr.log.samples.size());
  }
}
BENCHMARK(BM_RunTs4)->Unit(benchmark::kMillisecond);

static void BM_WriteLog(benchmark::State& state) {
  const auto log = interrupt_log();
  const auto file = std::filesystem::temp_directory_path() / "cellscreen_bench.csv";
  for (auto _ : state) {
    write_log(log, file);
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(std::filesystem::file_size(file)));
  std::filesystem::remove(file);
}
BENCHMARK(BM_WriteLog)->Unit(benchmark::kMillisecond);

static void BM_ReadLog(benchmark::State& state) {
  const auto log = interrupt_log();
  const auto file = std::filesystem::temp_directory_path() / "cellscreen_bench.csv";
  write_log(log, file);
  for (auto _ : state) {
    benchmark::DoNotOptimize(read_log(file).samples.size());
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(std::filesystem::file_size(file)));
  std::filesystem::remove(file);
}
BENCHMARK(BM_ReadLog)->Unit(benchmark::kMillisecond);

static void BM_DetectAndProfile(benchmark::State& state) {
  const auto log = interrupt_log();
  for (auto _ : state) {
    benchmark::DoNotOptimize(rs_voltage_profile(log, 3, rs_method::ci, 0.125));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(log.samples.size()));
}
BENCHMARK(BM_DetectAndProfile)->Unit(benchmark::kMillisecond);

static void BM_CoulombCount(benchmark::State& state) {
  auto pack = make_uniform_pack(fresh_params(), 0.0, 1.0);
  run_options opt;
  opt.pack_id = "B";
  const auto log =
      run_protocol(pack, build_standard_sequence(sequence_kind::ts5), opt).log;
  for (auto _ : state) {
    benchmark::DoNotOptimize(coulomb_count_capacity(log, 3, 4.1, 2.95));
  }
}
BENCHMARK(BM_CoulombCount)->Unit(benchmark::kMillisecond);

static void BM_Fit(benchmark::State& state) {
  std::vector<fit_point> points;
  for (int i = 0; i < state.range(0); ++i) {
    const double r = 0.025 + 0.0001 * i;
    points.push_back({r, 6.0 - 70.0 * r + 0.001 * (i % 7)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_capacity_resistance(points));
  }
}
BENCHMARK(BM_Fit)->Arg(39)->Arg(1000);

BENCHMARK_MAIN();
