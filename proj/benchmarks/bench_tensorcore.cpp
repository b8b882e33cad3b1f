#include <benchmark/benchmark.h>

#include <random>

#include "egomatch/ops.hpp"

using namespace egomatch;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : t.data()) v = u(rng);
    return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
    const auto cin = static_cast<std::size_t>(state.range(0));
    const auto cout = static_cast<std::size_t>(state.range(1));
    const auto size = static_cast<std::size_t>(state.range(2));
    std::mt19937_64 rng(1);
    Parameter k("k", random_tensor(rng, {cout, cin, 3, 3}));
    Parameter b("b", random_tensor(rng, {cout}));
    const Tensor x = random_tensor(rng, {cin, size, size});
    for (auto _ : state) {
        Graph g;
        Var y = conv2d(g.variable(x), g.parameter(k), g.parameter(b), 1, 1);
        g.backward(sum(y));
        benchmark::DoNotOptimize(k.grad.ptr());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(cin * cout * 9 * size * size));
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({3, 8, 64})->Args({8, 16, 32})->Args({16, 32, 16})->Args({32, 32, 8});

}  // namespace
BENCHMARK_MAIN();
