#include <benchmark/benchmark.h>

#include "lumina/image.hpp"
#include "lumina/metrics.hpp"
#include "lumina/rng.hpp"

using namespace lumina;

namespace {

Image rand_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

void BM_psnr(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  const Image a = rand_image(hw, hw, 1);
  const Image b = rand_image(hw, hw, 2);
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
}

void BM_ssim(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  const Image a = rand_image(hw, hw, 1);
  const Image b = rand_image(hw, hw, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}

}  // namespace

BENCHMARK(BM_psnr)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ssim)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
