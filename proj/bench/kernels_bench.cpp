#include <omp.h>

#include <benchmark/benchmark.h>

#include "nomos/kernels.hpp"
#include "nomos/masking.hpp"
#include "nomos/rng.hpp"
#include "nomos/tokenizer.hpp"

using namespace nomos;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

// Square gemm of side state.range(0); range(1) is the thread count (0 = serial).
void BM_gemm_nn(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const int threads = static_cast<int>(state.range(1));
    const auto a = random_floats(n * n, 1);
    const auto b = random_floats(n * n, 2);
    std::vector<float> c(n * n);
    if (threads > 0) omp_set_num_threads(threads);
    for (auto _ : state) {
        if (threads == 0) {
            kernels::serial::gemm_nn<float>(n, n, n, a.data(), b.data(), c.data(), false);
        } else {
            kernels::omp::gemm_nn<float>(n, n, n, a.data(), b.data(), c.data(), false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_gemm_nn)->ArgsProduct({{64, 256}, {0, 1, 2, 4}})->UseRealTime();

std::vector<tokenizer::detail::WordSymbols> word_symbols() {
    Rng rng(3);
    std::vector<tokenizer::detail::WordSymbols> words(20000);
    for (auto& w : words) {
        const auto len = 2 + rng.below(10);
        for (std::size_t i = 0; i < len; ++i) {
            w.symbols.push_back(static_cast<tokenizer::TokenId>(tokenizer::kFirstByteId + rng.below(40)));
        }
        w.count = static_cast<std::int64_t>(1 + rng.below(50));
    }
    return words;
}

void BM_count_pairs(benchmark::State& state) {
    const auto words = word_symbols();
    const int jobs = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto counts = jobs == 0 ? tokenizer::detail::count_pairs_serial(words)
                                : tokenizer::detail::count_pairs_parallel(words, jobs);
        benchmark::DoNotOptimize(counts);
    }
}
BENCHMARK(BM_count_pairs)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

void BM_collate_epoch(benchmark::State& state) {
    Rng rng(4);
    const masking::MaskingVocab vocab{8000};
    std::vector<corpus::PackedSequence> rows(512);
    for (auto& r : rows) {
        r.ids.push_back(tokenizer::kBos);
        for (int i = 0; i < 126; ++i) {
            r.ids.push_back(static_cast<tokenizer::TokenId>(tokenizer::kFirstByteId +
                                                            rng.below(vocab.vocab_size - 5)));
        }
        r.ids.push_back(tokenizer::kEos);
        r.attention_mask.assign(r.ids.size(), 1);
    }
    const int jobs = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto batch = jobs == 0 ? masking::collate_epoch_serial(rows, {}, vocab, 1, 0, 0)
                               : masking::collate_epoch_parallel(rows, {}, vocab, 1, 0, 0, jobs);
        benchmark::DoNotOptimize(batch.input_ids.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.size()));
}
BENCHMARK(BM_collate_epoch)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
