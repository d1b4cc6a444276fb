#include <benchmark/benchmark.h>

#include "lumina/loss.hpp"
#include "lumina/nets.hpp"
#include "lumina/pipeline.hpp"
#include "lumina/rng.hpp"

using namespace lumina;

namespace {

template <typename S>
Tensor<S> rand_image(int hw, Rng& rng) {
  std::vector<S> v(static_cast<size_t>(3) * hw * hw);
  for (S& x : v) x = static_cast<S>(rng.uniform(0.02, 0.6));
  return Tensor<S>({1, 3, hw, hw}, std::move(v));
}

void BM_enhance_forward(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  ModelParams<float> params = ModelParams<float>::init(1);
  Rng rng(2);
  Tensor<float> img = rand_image<float>(hw, rng);
  for (auto _ : state) {
    Decomposition<float> d = enhance(params, img, kDefaultLambda, {});
    benchmark::DoNotOptimize(d.I_f.data());
  }
}

void BM_paired_training_step(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  ModelParams<float> master = ModelParams<float>::init(1);
  FeatureExtractor<float> phi = FeatureExtractor<float>::init(1);
  Rng rng(3);
  Tensor<float> i1 = rand_image<float>(hw, rng);
  Tensor<float> i2 = rand_image<float>(hw, rng);
  const LossWeights weights;
  for (auto _ : state) {
    Tape<float> tape;
    master.watch_all(tape);
    PairedForward<float> fwd = paired_forward(master, phi, i1, i2, kDefaultLambda, weights);
    tape.backward(fwd.total);
    benchmark::DoNotOptimize(fwd.total.value());
  }
}

}  // namespace

BENCHMARK(BM_enhance_forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_paired_training_step)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
