#include <benchmark/benchmark.h>

#include <random>

#include "dgmnet/architectures.hpp"
#include "dgmnet/metrics.hpp"
#include "dgmnet/nn/layers.hpp"
#include "dgmnet/phantoms.hpp"

using namespace dgmnet;

namespace {

nn::Tensor noise(nn::Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g;
    nn::Tensor t(s);
    for (float& v : t.values()) v = g(rng);
    return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto hw = static_cast<std::size_t>(state.range(1));
    nn::InitRng init(1);
    nn::Conv2d conv(c, c, 3, init);
    const nn::Tensor x = noise(nn::Shape{8, c, hw, hw}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nn::Context{}));
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 64})->Args({32, 32})->Args({64, 16});

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto hw = static_cast<std::size_t>(state.range(1));
    nn::InitRng init(1);
    nn::Conv2d conv(c, c, 3, init);
    const nn::Tensor x = noise(nn::Shape{8, c, hw, hw}, 2);
    const nn::Context ctx{true, nullptr, true};
    for (auto _ : state) {
        const nn::Tensor y = conv.forward(x, ctx);
        benchmark::DoNotOptimize(conv.backward(y));
    }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({8, 64})->Args({32, 32});

void BM_ModelForward(benchmark::State& state) {
    ModelSpec s;
    s.variant = static_cast<Variant>(state.range(0));
    auto g = build_generator(generator_spec_for(s));
    g->freeze();
    auto m = s.variant == Variant::DgmNet ? build_model(s, g.get()) : build_model(s);
    const nn::Tensor x = noise(nn::Shape{10, 1, s.input_height, s.input_width}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(m->forward(x, {}, nn::Context{}));
    state.SetLabel(std::string(to_string(s.variant)));
}
BENCHMARK(BM_ModelForward)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

void BM_AverageSurfaceDistance(benchmark::State& state) {
    PhantomConfig c;
    const PhantomPair a = generate_phantom(c, 0), b = generate_phantom(c, 1);
    for (auto _ : state) benchmark::DoNotOptimize(average_surface_distance(a.high.mask, b.high.mask));
}
BENCHMARK(BM_AverageSurfaceDistance)->Unit(benchmark::kMillisecond);

void BM_AsdBruteForce(benchmark::State& state) {
    PhantomConfig c;
    const PhantomPair a = generate_phantom(c, 0), b = generate_phantom(c, 1);
    for (auto _ : state) benchmark::DoNotOptimize(asd_oracle(a.high.mask, b.high.mask));
}
BENCHMARK(BM_AsdBruteForce)->Unit(benchmark::kMillisecond);

void BM_GeneratePhantom(benchmark::State& state) {
    PhantomConfig c;
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(generate_phantom(c, i++));
}
BENCHMARK(BM_GeneratePhantom)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
