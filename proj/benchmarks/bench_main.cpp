#include <benchmark/benchmark.h>

#include "wcontract/coupling.hpp"
#include "wcontract/fk.hpp"
#include "wcontract/mc.hpp"
#include "wcontract/rng.hpp"
#include "wcontract/sde.hpp"

using namespace wcontract;

static void BM_SturmLeading(benchmark::State& st) {
  auto m = overdamped_builtin("U2", 1);
  auto op = build_operator(m, 2, -5, 5, 10.0 / st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(leading_eigenvalue(op).lambda);
  st.SetComplexityN(op.n);
}
BENCHMARK(BM_SturmLeading)->Arg(1000)->Arg(10000)->Complexity();

static void BM_PowerLeading(benchmark::State& st) {
  auto m = overdamped_builtin("U1", 1);
  auto op = build_operator(m, 1, -5, 5, 0.05);
  EigenOptions o;
  o.method = EigenMethod::power;
  for (auto _ : st) benchmark::DoNotOptimize(leading_eigenvalue(op, o).lambda);
}
BENCHMARK(BM_PowerLeading);

static void BM_ExprEval(benchmark::State& st) {
  auto e = builtin_potential("U2");
  double x = 0.3;
  for (auto _ : st) {
    benchmark::DoNotOptimize(e.eval(x));
    x += 1e-9;
  }
}
BENCHMARK(BM_ExprEval);

static void BM_Philox(benchmark::State& st) {
  RngStream r(1, 2);
  for (auto _ : st) benchmark::DoNotOptimize(r.normal());
}
BENCHMARK(BM_Philox);

static void BM_TangentPath1D(benchmark::State& st) {
  auto m = overdamped_builtin("U1", 1);
  std::vector<long> cps{1000};
  Checkpoints1D out;
  std::uint64_t i = 0;
  for (auto _ : st) {
    RngStream rng(3, i++);
    tangent_path_1d(m, 0.0, 1e-3, cps, rng, {}, out);
    benchmark::DoNotOptimize(out.log_v[0]);
  }
  st.SetItemsProcessed(st.iterations() * 1000);
}
BENCHMARK(BM_TangentPath1D);

static void BM_EmStepKinetic(benchmark::State& st) {
  auto m = kinetic_langevin(parse_expression("x^4/4 - x^2"), 1, 1, 2);
  Vec x(4), v(4);
  x << 0.1, 0.2, 0.3, 0.4;
  v << 1, 0, 0, 0;
  PathState s = PathState::with_tangent(x, v);
  RngStream rng(4, 0);
  for (auto _ : st) {
    s = em_step(m, s, 1e-3, rng);
    benchmark::DoNotOptimize(s.x.data());
  }
}
BENCHMARK(BM_EmStepKinetic);

static void BM_CoupledPair(benchmark::State& st) {
  auto cn = colored_noise(parse_expression("x^2/2"), Mat::Ones(1, 1), Mat::Ones(1, 1));
  auto c = compute_constants(CouplingParams::from_model(cn.yz, 2));
  CouplingFunctions fn(c, 1e-3);
  Vec x(2), y(2);
  x << 1, 1;
  y << -1, -1;
  std::uint64_t i = 0;
  for (auto _ : st) benchmark::DoNotOptimize(simulate_pair(cn.yz, fn, x, y, 1, 1e-3, 5, i++).x);
  st.SetItemsProcessed(st.iterations() * 1000);
}
BENCHMARK(BM_CoupledPair);

static void BM_Constants(benchmark::State& st) {
  CouplingParams cp;
  cp.rho1 = cp.L1 = cp.L2 = cp.L3 = cp.theta = 1;
  cp.metric = make_metric(Mat::Identity(2, 2), 1, 1);
  cp.p = 2;
  for (auto _ : st) benchmark::DoNotOptimize(compute_constants(cp).lambdap);
}
BENCHMARK(BM_Constants);
BENCHMARK_MAIN();
