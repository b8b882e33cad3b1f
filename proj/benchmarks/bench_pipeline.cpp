#include <benchmark/benchmark.h>

#include <random>

#include "egomatch/eval.hpp"
#include "egomatch/features.hpp"
#include "egomatch/synthworld.hpp"
#include "egomatch/trainer.hpp"

using namespace egomatch;

namespace {

FlowField random_flow(std::mt19937_64& rng, int w, int h) {
    FlowField f(w, h);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (double& v : f.uv) v = u(rng);
    return f;
}

const Dataset& small_world() {
    static const Dataset data = [] {
        WorldConfig wc;
        wc.frames = 60;
        return generate(wc);
    }();
    return data;
}

void BM_Hoof(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const int s = static_cast<int>(state.range(0));
    const FlowField f = random_flow(rng, s, s);
    for (auto _ : state) benchmark::DoNotOptimize(hoof(f));
    state.SetItemsProcessed(state.iterations() * s * s);
}
BENCHMARK(BM_Hoof)->Arg(32)->Arg(64);

void BM_CropFlow(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const FlowField f = random_flow(rng, 64, 64);
    const BBox box{10, 12, 7, 11, 0};
    for (auto _ : state) benchmark::DoNotOptimize(crop_flow(f, box, kFlowCropSize, kFlowCropSize));
}
BENCHMARK(BM_CropFlow);

void BM_AveragePrecision(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoredPair> pairs(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < pairs.size(); ++i)
        pairs[i] = {static_cast<int>(i / 3), "ego0", static_cast<int>(i % 3), u(rng), i % 3 == 0 ? 1 : 0};
    for (auto _ : state) benchmark::DoNotOptimize(average_precision(pairs));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AveragePrecision)->Arg(600)->Arg(60000);

void BM_Embed(benchmark::State& state) {
    const auto arch = static_cast<Architecture>(state.range(0));
    const Dataset& data = small_world();
    const EmbeddingNet net = EmbeddingNet::build(default_spec(arch, SharingPolicy::semi), 1);
    const InputBuilder inputs(data, net.spec());
    const auto samples = frame_samples(data, data.train, "exo", uses_flow(net.spec()));
    const NetInput in = inputs.ego(samples.front());
    for (auto _ : state) benchmark::DoNotOptimize(net.embed_ego(in));
    state.SetLabel(std::string(to_string(arch)));
}
BENCHMARK(BM_Embed)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

// One minibatch of 16 exemplars, forward, backward and update.
void BM_TrainStep(benchmark::State& state) {
    TrainConfig cfg;
    cfg.arch = static_cast<Architecture>(state.range(0));
    cfg.loss = state.range(1) ? LossKind::triplet : LossKind::contrastive;
    Trainer t(small_world(), cfg);
    for (auto _ : state) benchmark::DoNotOptimize(t.step());
    state.SetLabel(std::string(to_string(cfg.arch)) + "/" + std::string(to_string(cfg.loss)));
}
BENCHMARK(BM_TrainStep)->ArgsProduct({{0, 1, 2}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace
