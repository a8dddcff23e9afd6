#include "cheapstack/evaluate.hpp"

#include <benchmark/benchmark.h>

using namespace cheapstack;

namespace {

std::shared_ptr<const TransformedGame> supply_chain() {
  static const auto tg = prepare_game(supply_chain_game());
  return tg;
}

std::shared_ptr<const Expansion> expansion() {
  static const auto ex = Expansion::build(supply_chain(), 1);
  return ex;
}

}  // namespace

static void BM_ExactSolve(benchmark::State& state) {
  const double eps = 1.0 / static_cast<double>(state.range(0));
  for (auto _ : state) {
    BvpSolution sol = solve_exact(supply_chain(), eps);
    benchmark::DoNotOptimize(sol.costs.J_u);
  }
  state.SetLabel("eps=1/" + std::to_string(state.range(0)));
}
BENCHMARK(BM_ExactSolve)->Arg(5)->Arg(10)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_ExpansionBuild(benchmark::State& state) {
  for (auto _ : state) {
    auto ex = Expansion::build(supply_chain(), static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(ex.get());
  }
}
BENCHMARK(BM_ExpansionBuild)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Compose(benchmark::State& state) {
  auto ex = expansion();
  double t = 0.0;
  for (auto _ : state) {
    Components c = ex->compose(t, 0.05);
    benchmark::DoNotOptimize(c.z1.data());
    t += 1e-3;
    if (t > 2.0) t = 0.0;
  }
}
BENCHMARK(BM_Compose);

static void BM_SimulateHatPair(benchmark::State& state) {
  auto ex = expansion();
  const ControlPair hat = hat_pair(ex, 0.05);
  for (auto _ : state) {
    OpenLoopTrajectory traj = simulate_openloop(supply_chain(), hat);
    benchmark::DoNotOptimize(traj.defect);
  }
}
BENCHMARK(BM_SimulateHatPair)->Unit(benchmark::kMillisecond);

static void BM_CheapControlComparison(benchmark::State& state) {
  const GameSpec g = supply_chain_game();
  for (auto _ : state) {
    auto rows = cheap_control_comparison(g, {0.2, 0.1, 0.05});
    benchmark::DoNotOptimize(rows.data());
  }
}
BENCHMARK(BM_CheapControlComparison)->Unit(benchmark::kMillisecond);
