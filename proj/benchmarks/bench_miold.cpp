#include <benchmark/benchmark.h>

#include <filesystem>

#include "miold/expr/program.hpp"
#include "miold/geometry/geometry.hpp"
#include "miold/model/system_file.hpp"
#include "miold/sim/sim.hpp"
#include "miold/synthesis/synthesis.hpp"

namespace {

using namespace miold;

model::SystemCase corpus_case(const std::string& file, const std::string& set) {
  return model::build_system(
      model::SystemDocument::load(std::filesystem::path(MIOLD_CORPUS_DIR) / file), "", set);
}

expr::Point point_of(const model::SystemCase& c) {
  auto p = *c.point;
  p.params = c.system.params;
  return p;
}

// Second Lie derivative of the TORA3 flat output, unsimplified.
expr::Expr raw_chain_term() {
  const auto c = corpus_case("tora3.toml", "flat");
  const auto& s = c.system;
  expr::Expr l = s.h[0];
  for (int q = 0; q < 2; ++q) {
    expr::Expr next;
    for (int i = 0; i < s.n; ++i) next = next + s.e[i] * expr::diff(l, i);
    l = next;
  }
  return l;
}

void BM_SimplifyCold(benchmark::State& state) {
  const auto e = raw_chain_term();
  for (auto _ : state) {
    expr::clear_simplify_cache();
    benchmark::DoNotOptimize(expr::simplify(e));
  }
}
BENCHMARK(BM_SimplifyCold)->Unit(benchmark::kMillisecond);

void BM_ZeroTestPythagorean(benchmark::State& state) {
  const std::vector<std::string> names{"x", "y"};
  const auto e = expr::parse("sin(x+y)^2 + cos(x+y)^2 - 1", names);
  for (auto _ : state) {
    expr::clear_simplify_cache();
    benchmark::DoNotOptimize(expr::is_zero(e));
  }
}
BENCHMARK(BM_ZeroTestPythagorean)->Unit(benchmark::kMicrosecond);

// arg 0: IWP combined output, 1: TORA3 flat output.
void BM_HalfDegree(benchmark::State& state) {
  const auto c = state.range(0) == 0 ? corpus_case("iwp.toml", "combined") : corpus_case("tora3.toml", "flat");
  const auto p = point_of(c);
  for (auto _ : state) {
    expr::clear_simplify_cache();
    benchmark::DoNotOptimize(geometry::half_degree(c.system, p));
  }
}
BENCHMARK(BM_HalfDegree)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Synthesis(benchmark::State& state) {
  const auto c = corpus_case("tora3.toml", "flat");
  const auto p = point_of(c);
  for (auto _ : state) {
    expr::clear_simplify_cache();
    const auto rep = geometry::half_degree(c.system, p);
    benchmark::DoNotOptimize(synthesis::synthesize(c.system, rep, p));
  }
}
BENCHMARK(BM_Synthesis)->Unit(benchmark::kMillisecond);

void BM_ProgramRun(benchmark::State& state) {
  const auto c = corpus_case("tora3.toml", "flat");
  const auto field = model::drift_acceleration(c.system);
  const expr::Program program(field, c.system.params);
  const std::vector<double> z{0.1, 0.2, 0.3, 0.05, 0.1, -0.1};
  std::vector<double> out(program.output_count()), scratch;
  for (auto _ : state) {
    program.run(z, out, scratch);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ProgramRun);

// One closed-loop RK4 run, 1 s at dt = 1e-4.
void BM_ClosedLoopRK4(benchmark::State& state) {
  const auto c = corpus_case("tora3.toml", "flat");
  const auto p = point_of(c);
  const auto syn = synthesis::synthesize(c.system, geometry::half_degree(c.system, p), p);
  const sim::InputVector u{sim::InputSignal::step(0.1, 0.1)};
  for (auto _ : state) benchmark::DoNotOptimize(sim::closed_loop_run(c.system, syn.law, p, u));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_ClosedLoopRK4)->Unit(benchmark::kMillisecond);

void BM_Certificate(benchmark::State& state) {
  const auto c = corpus_case("iwp.toml", "combined");
  const auto p = point_of(c);
  const auto syn = synthesis::synthesize(c.system, geometry::half_degree(c.system, p), p);
  sim::CertificateOptions o;
  o.parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(sim::decoupling_certificate(c.system, syn.law, p, o));
}
BENCHMARK(BM_Certificate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
