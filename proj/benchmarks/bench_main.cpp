#include <benchmark/benchmark.h>

#include "dna/analytics.hpp"
#include "dna/data.hpp"
#include "dna/model.hpp"
#include "dna/rng.hpp"
#include "dna/tensor.hpp"

namespace {

template <typename S>
dna::Tensor<S> random_tensor(dna::Shape shape, uint64_t seed) {
    dna::Rng rng(seed);
    dna::Tensor<S> t(std::move(shape));
    for (auto& v : t.value()) v = static_cast<S>(rng.normal());
    return t;
}

void bench_matmul_f32(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto a = random_tensor<float>({n, n}, 1);
    auto b = random_tensor<float>({n, n}, 2);
    for (auto _ : state) {
        auto c = dna::matmul(a, b);
        benchmark::DoNotOptimize(c.value().data());
    }
    state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(bench_matmul_f32)->Arg(64)->Arg(128)->Arg(256);

void bench_softmax_rows(benchmark::State& state) {
    auto x = random_tensor<float>({1024, static_cast<int>(state.range(0))}, 3);
    for (auto _ : state) {
        auto p = dna::softmax(x, 1);
        benchmark::DoNotOptimize(p.value().data());
    }
}
BENCHMARK(bench_softmax_rows)->Arg(16)->Arg(64);

void bench_module_forward(benchmark::State& state) {
    dna::ModuleSpec spec;
    spec.kind = dna::ModuleKind::TransformerBlock;
    spec.d_embed = 64;
    spec.d_mlp = 128;
    spec.n_head = 2;
    spec.causal = true;
    auto params = dna::init_parameters<float>(spec, 5);
    const int tokens = static_cast<int>(state.range(0));
    auto h = random_tensor<float>({tokens, 64}, 7);
    std::vector<int> positions(static_cast<size_t>(tokens));
    for (int i = 0; i < tokens; ++i) positions[static_cast<size_t>(i)] = i;
    for (auto _ : state) {
        auto out = dna::module_forward(spec, params, h, positions);
        benchmark::DoNotOptimize(out.value().data());
    }
}
BENCHMARK(bench_module_forward)->Arg(32)->Arg(128);

// Routed forward vs. the same pool at top-1/top-2: the cost of the dynamic
// gather/compute/scatter machinery.
void bench_routed_forward(benchmark::State& state) {
    dna::DnaConfig cfg;
    cfg.task = dna::TaskKind::CausalLm;
    cfg.d_embed = 32;
    cfg.d_mlp = 64;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 5;
    cfg.top_k = static_cast<int>(state.range(0));
    cfg.module_kinds = dna::make_pool(4, 2, 2, 2);
    cfg.vocab_size = 64;
    cfg.context = 64;
    dna::DnaModel<float> model(cfg, 11);
    dna::Rng rng(13);
    dna::Example ex;
    for (int i = 0; i <= cfg.context; ++i) ex.tokens.push_back(rng.uniform_int(cfg.vocab_size));
    dna::ForwardOptions<float> opts;
    for (auto _ : state) {
        auto fwd = model.forward_sequence(ex, opts);
        benchmark::DoNotOptimize(fwd.logits.value().data());
    }
    state.SetItemsProcessed(state.iterations() * cfg.context);
}
BENCHMARK(bench_routed_forward)->Arg(1)->Arg(2);

void bench_irfft2(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto spec = random_tensor<float>({2, n, n}, 17);
    for (auto _ : state) {
        auto img = dna::irfft2(spec);
        benchmark::DoNotOptimize(img.value().data());
    }
}
BENCHMARK(bench_irfft2)->Arg(32)->Arg(64);

void bench_rank_frequency(benchmark::State& state) {
    dna::Rng rng(23);
    dna::SequenceTrace t;
    t.tokens = static_cast<int>(state.range(0));
    t.k = 1;
    t.n_modules = 12;
    for (int i = 0; i < t.tokens; ++i) {
        std::vector<std::vector<int>> ribbon;
        for (int s = 0; s < 8; ++s) ribbon.push_back({rng.uniform_int(12)});
        t.ribbons.push_back(std::move(ribbon));
    }
    for (auto _ : state) {
        auto stats = dna::rank_frequency({t});
        benchmark::DoNotOptimize(stats.total_tokens);
    }
}
BENCHMARK(bench_rank_frequency)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
