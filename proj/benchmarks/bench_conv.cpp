#include <benchmark/benchmark.h>

#include "lumina/ops.hpp"
#include "lumina/rng.hpp"

using namespace lumina;

namespace {

template <typename S>
Tensor<S> rand_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<S> v(static_cast<size_t>(numel(shape)));
  for (S& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return Tensor<S>(shape, std::move(v));
}

void BM_conv2d_forward(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor<float> x = rand_tensor<float>({1, 3, hw, hw}, rng, 0.0, 1.0);
  Tensor<float> w = rand_tensor<float>({32, 3, 3, 3}, rng, -0.2, 0.2);
  Tensor<float> b = rand_tensor<float>({32}, rng, -0.1, 0.1);
  for (auto _ : state) {
    Tensor<float> y = conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(hw) * hw * 32 * 3 * 9);
}

void BM_conv2d_forward_backward(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor<float> x0 = rand_tensor<float>({1, 3, hw, hw}, rng, 0.0, 1.0);
  Tensor<float> w0 = rand_tensor<float>({32, 3, 3, 3}, rng, -0.2, 0.2);
  Tensor<float> b0 = rand_tensor<float>({32}, rng, -0.1, 0.1);
  for (auto _ : state) {
    Tape<float> tape;
    Tensor<float> w = w0.detached();
    Tensor<float> b = b0.detached();
    tape.watch(w);
    tape.watch(b);
    Tensor<float> loss = mean(conv2d(x0, w, b, 1, 1));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad_of(w).data());
  }
}

}  // namespace

BENCHMARK(BM_conv2d_forward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv2d_forward_backward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
