#include <benchmark/benchmark.h>

#include <array>
#include <vector>

#include "forgetlab/experiment.hpp"
#include "forgetlab/gaussian_integrals.hpp"
#include "forgetlab/network.hpp"
#include "forgetlab/order_dynamics.hpp"
#include "forgetlab/tasks.hpp"

using namespace forgetlab;

namespace {

void BM_ClosedForm(benchmark::State& state) {
    const auto kind = static_cast<IntegralKind>(state.range(0));
    Rng rng(1);
    const CovarianceBlock c(random_covariance(block_dim(kind), rng));
    for (auto _ : state) benchmark::DoNotOptimize(closed_form(c, kind));
}
BENCHMARK(BM_ClosedForm)->Arg(0)->Arg(1)->Arg(2);

void BM_MonteCarloI4(benchmark::State& state) {
    Rng rng(1);
    const CovarianceBlock c(random_covariance(4, rng));
    for (auto _ : state)
        benchmark::DoNotOptimize(mc_integral(c, IntegralKind::I4, ActivationKind::scaled_erf, state.range(0), 7));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarloI4)->Arg(100000);

OrderParameterState start_state(int K) {
    ExperimentConfig cfg = parse_config("");
    cfg.K = K;
    const TaskPair pair = make_teachers(cfg, 500, 0.5, 1);
    return empirical_order_params(make_initial_student(cfg, 500, 1), pair.teacher_dag, pair.teacher_ddag);
}

void BM_Derivatives(benchmark::State& state) {
    const OrderParameterState s = start_state(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(derivatives(s, Task::dagger, DynamicsConfig{}));
}
BENCHMARK(BM_Derivatives)->Arg(2)->Arg(4)->Arg(8);

void BM_IntegrateTenTau(benchmark::State& state) {
    const OrderParameterState s = start_state(2);
    const std::array<TaskPhase, 1> sched{TaskPhase{Task::dagger, 10.0}};
    for (auto _ : state) benchmark::DoNotOptimize(integrate(s, sched, DynamicsConfig{}, 10.0));
}
BENCHMARK(BM_IntegrateTenTau);

void BM_SgdStep(benchmark::State& state) {
    const int D = static_cast<int>(state.range(0));
    ExperimentConfig cfg = parse_config("");
    TwoLayerNet net = make_initial_student(cfg, D, 1);
    const TeacherSource src(make_teachers(cfg, D, 0.5, 1).teacher_dag);
    Rng rng(2);
    std::vector<double> x(static_cast<std::size_t>(D));
    for (auto _ : state) {
        const double y = src.draw(rng, x);
        benchmark::DoNotOptimize(sgd_step(net, x, y, Task::dagger, 0.1, 0.1));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SgdStep)->Arg(1000)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
