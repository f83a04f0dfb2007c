// Microbenchmarks for the inference path: windowed vs dense attention at a
// few sequence lengths, plus concept scoring on its own.

#include <benchmark/benchmark.h>

#include "conceptdrive/concepts.hpp"
#include "conceptdrive/model.hpp"
#include "conceptdrive/rng.hpp"
#include "conceptdrive/tape.hpp"

using namespace conceptdrive;

namespace {

constexpr std::size_t kConcepts = 24;
constexpr std::size_t kWidth = 64;

ModelConfig bench_config(std::size_t max_len) {
    ModelConfig c;
    c.input_dim = kConcepts + 3;
    c.max_seq_len = max_len;
    validate_config(c);
    return c;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng) {
    Tensor t(rows, cols, 0.0);
    for (double& x : t.storage()) x = rng.next_normal();
    return t;
}

ConceptSet bench_concepts(SplitMix64& rng) {
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < kConcepts; ++i)
        texts.push_back("concept " + std::to_string(i));
    return ConceptSet(texts, random_matrix(kConcepts, kWidth, rng), SourceTag::generated);
}

void run_encoder(benchmark::State& state, AttentionKind kind) {
    const auto frames = static_cast<std::size_t>(state.range(0));
    const ModelConfig config = bench_config(frames);
    const ModelParams params = init_params(config, 7);
    SplitMix64 rng(derive_seed(7, "bench-input"));
    const Tensor scores = random_matrix(frames, kConcepts, rng);
    const Tensor sensors = random_matrix(frames, 3, rng);

    for (auto _ : state) {
        Tape tape;
        BoundParams bound = bind_params(tape, params, false);
        ForwardGraph g =
            build_forward(tape, scores, sensors, bound, config, false, nullptr, kind);
        benchmark::DoNotOptimize(tape.value(g.head_outputs[0]).item());
    }
}

void BM_WindowedForward(benchmark::State& state) {
    run_encoder(state, AttentionKind::windowed);
}

void BM_DenseForward(benchmark::State& state) {
    run_encoder(state, AttentionKind::dense_reference);
}

void BM_ConceptScores(benchmark::State& state) {
    const auto frames = static_cast<std::size_t>(state.range(0));
    SplitMix64 rng(derive_seed(7, "bench-scores"));
    const ConceptSet set = bench_concepts(rng);
    const Tensor embeddings = random_matrix(frames, kWidth, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(concept_scores(embeddings, set));
    }
}

}  // namespace

BENCHMARK(BM_WindowedForward)->Arg(20)->Arg(240)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseForward)->Arg(20)->Arg(240)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConceptScores)->Arg(20)->Arg(240)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
