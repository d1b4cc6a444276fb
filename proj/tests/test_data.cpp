#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "lumina/data.hpp"
#include "lumina/png_io.hpp"
#include "lumina/rng.hpp"

using namespace lumina;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / ("lumina_data_" + leaf);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

bool same_values(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a.values()[static_cast<size_t>(i)] != b.values()[static_cast<size_t>(i)])
      return false;
  return true;
}

}  // namespace

TEST_CASE("png round trip stays within quantization error") {
  Rng rng(71);
  Image img(23, 17);
  for (double& p : img.pixels) p = rng.uniform();
  fs::path dir = fresh_dir("roundtrip");
  write_png(img, dir / "x.png");
  Image back = read_png(dir / "x.png");
  REQUIRE(back.same_size(img));
  double worst = 0.0;
  for (size_t i = 0; i < img.pixels.size(); ++i)
    worst = std::max(worst, std::fabs(img.pixels[i] - back.pixels[i]));
  CHECK(worst <= 0.5 / 255.0 + 1e-12);

  // once quantized, the write is a fixed point: bytes repeat exactly
  write_png(back, dir / "y.png");
  write_png(back, dir / "z.png");
  CHECK(slurp(dir / "y.png") == slurp(dir / "z.png"));
  Image again = read_png(dir / "y.png");
  for (size_t i = 0; i < back.pixels.size(); ++i)
    CHECK(again.pixels[i] == back.pixels[i]);

  CHECK_THROWS_AS(read_png(dir / "missing.png"), DataError);
  std::ofstream(dir / "junk.png") << "not a png at all";
  CHECK_THROWS_AS(read_png(dir / "junk.png"), DataError);
}

TEST_CASE("load_pairs keeps valid pairs and reports the rest") {
  fs::path root = fresh_dir("pairs");
  Image small = synth_base_image(20, 20, 1);
  Image big = synth_base_image(24, 24, 2);

  fs::create_directories(root / "pair_b");
  write_png(small, root / "pair_b" / "a.png");
  write_png(small, root / "pair_b" / "b.png");
  fs::create_directories(root / "pair_a");
  write_png(big, root / "pair_a" / "a.png");
  write_png(big, root / "pair_a" / "b.png");
  fs::create_directories(root / "pair_c_missing");
  write_png(small, root / "pair_c_missing" / "a.png");
  fs::create_directories(root / "pair_d_mismatch");
  write_png(small, root / "pair_d_mismatch" / "a.png");
  write_png(big, root / "pair_d_mismatch" / "b.png");
  fs::create_directories(root / "pair_e_corrupt");
  std::ofstream(root / "pair_e_corrupt" / "a.png") << "nope";
  write_png(small, root / "pair_e_corrupt" / "b.png");

  std::vector<std::string> warnings;
  std::vector<LowLightPair> pairs = load_pairs(root, &warnings);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].id == "pair_a");  // lexicographic by directory name
  CHECK(pairs[1].id == "pair_b");
  CHECK(pairs[0].I1.shape() == Shape({1, 3, 24, 24}));
  CHECK(pairs[1].I1.shape() == Shape({1, 3, 20, 20}));
  REQUIRE(warnings.size() == 3);
  for (const std::string& w : warnings) CHECK(w.find("skipped") != std::string::npos);

  fs::path empty = fresh_dir("pairs_empty");
  CHECK_THROWS_AS(load_pairs(empty), DataError);
  CHECK_THROWS_AS(load_pairs(root / "no_such_dir"), DataError);
}

TEST_CASE("synthetic pairs are seed-deterministic") {
  std::vector<Image> bases = {synth_base_image(20, 20, 3)};
  std::vector<LowLightPair> run1 = synth_pairs(bases, 3, 77);
  std::vector<LowLightPair> run2 = synth_pairs(bases, 3, 77);
  std::vector<LowLightPair> run3 = synth_pairs(bases, 3, 78);
  REQUIRE(run1.size() == 3);
  for (size_t k = 0; k < 3; ++k) {
    CHECK(run1[k].id == run2[k].id);
    CHECK(same_values(run1[k].I1, run2[k].I1));
    CHECK(same_values(run1[k].I2, run2[k].I2));
  }
  bool differs = false;
  for (size_t k = 0; k < 3; ++k)
    if (!same_values(run1[k].I1, run3[k].I1)) differs = true;
  CHECK(differs);
  CHECK(run1[0].id == "pair_0000");
  CHECK(run1[2].id == "pair_0002");
}

TEST_CASE("noiseless pairs are exactly base times field") {
  std::vector<Image> bases = {synth_base_image(20, 16, 5)};
  SynthParams params;
  params.noise_sigma = 0.0;
  std::vector<SynthPair> out = synth_pairs_with_fields(bases, 2, 13, params);
  REQUIRE(out.size() == 2);
  for (const SynthPair& sp : out) {
    const int h = sp.pair.I1.dim(2), w = sp.pair.I1.dim(3);
    REQUIRE(sp.field1.shape() == Shape({1, 1, h, w}));
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int c = 0; c < 3; ++c)
      for (int64_t k = 0; k < plane; ++k) {
        const double base = bases[0].pixels[static_cast<size_t>(k) * 3 +
                                            static_cast<size_t>(c)];
        const double f1 = sp.field1.values()[static_cast<size_t>(k)];
        const double got = sp.pair.I1.values()[static_cast<size_t>(c * plane + k)];
        CHECK(got == doctest::Approx(base * f1).epsilon(1e-5));
      }
  }
}

TEST_CASE("noiseless branches share one reflectance") {
  // With zero noise, I_k / L_k recovers the base image from either branch, so
  // the two ratios agree wherever the fields are defined (they always are:
  // fields live in [level_min, level_max], bounded away from zero).
  std::vector<Image> bases = {synth_base_image(24, 24, 9)};
  SynthParams params;
  params.noise_sigma = 0.0;
  std::vector<SynthPair> out = synth_pairs_with_fields(bases, 1, 31, params);
  const SynthPair& sp = out.at(0);
  const int64_t plane = 24 * 24;
  double worst = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int64_t k = 0; k < plane; ++k) {
      const double r1 = sp.pair.I1.values()[static_cast<size_t>(c * plane + k)] /
                        sp.field1.values()[static_cast<size_t>(k)];
      const double r2 = sp.pair.I2.values()[static_cast<size_t>(c * plane + k)] /
                        sp.field2.values()[static_cast<size_t>(k)];
      worst = std::max(worst, std::fabs(r1 - r2));
    }
  CHECK(worst < 1e-5);
}

TEST_CASE("noise moves pixels by a bounded amount") {
  // Same seed with and without noise draws identical fields and identical
  // normal variates, so the difference is exactly the clamped noise term.
  std::vector<Image> bases = {synth_base_image(20, 20, 11)};
  SynthParams quiet;
  quiet.noise_sigma = 0.0;
  SynthParams loud;
  loud.noise_sigma = 0.05;
  std::vector<SynthPair> a = synth_pairs_with_fields(bases, 2, 55, quiet);
  std::vector<SynthPair> b = synth_pairs_with_fields(bases, 2, 55, loud);
  double worst = 0.0;
  bool moved = false;
  for (size_t k = 0; k < a.size(); ++k) {
    CHECK(same_values(a[k].field1, b[k].field1));
    for (int64_t i = 0; i < a[k].pair.I1.size(); ++i) {
      const double d = std::fabs(a[k].pair.I1.values()[static_cast<size_t>(i)] -
                                 b[k].pair.I1.values()[static_cast<size_t>(i)]);
      worst = std::max(worst, d);
      if (d > 0) moved = true;
    }
  }
  CHECK(moved);
  CHECK(worst <= 6.0 * loud.noise_sigma);
}

TEST_CASE("generator rejects nonsense parameters") {
  std::vector<Image> bases = {synth_base_image(20, 20, 1)};
  CHECK_THROWS_AS(synth_pairs({}, 1, 1), DataError);
  CHECK_THROWS_AS(synth_pairs(bases, 0, 1), ConfigError);
  CHECK_THROWS_AS(synth_pairs(bases, -2, 1), ConfigError);
  SynthParams bad;
  bad.level_min = 0.0;
  CHECK_THROWS_AS(synth_pairs(bases, 1, 1, bad), ConfigError);
  SynthParams swapped;
  swapped.gamma_min = 5.0;  // > gamma_max
  CHECK_THROWS_AS(synth_pairs(bases, 1, 1, swapped), ConfigError);
  SynthParams neg;
  neg.noise_sigma = -0.1;
  CHECK_THROWS_AS(synth_pairs(bases, 1, 1, neg), ConfigError);
}

TEST_CASE("undersized bases are skipped with a warning") {
  std::vector<Image> bases = {synth_base_image(8, 8, 1), synth_base_image(20, 20, 2)};
  std::vector<std::string> warnings;
  std::vector<LowLightPair> pairs = synth_pairs(bases, 2, 3, {}, &warnings);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].I1.dim(2) == 20);  // both pairs come from the one usable base
  CHECK(pairs[1].I1.dim(2) == 20);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("8x8") != std::string::npos);

  std::vector<Image> tiny = {synth_base_image(4, 4, 1)};
  CHECK_THROWS_AS(synth_pairs(tiny, 1, 1), DataError);
}

TEST_CASE("bases cycle across generated pairs") {
  std::vector<Image> bases = {synth_base_image(16, 16, 1), synth_base_image(18, 18, 2)};
  std::vector<LowLightPair> pairs = synth_pairs(bases, 3, 5);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].I1.dim(2) == 16);
  CHECK(pairs[1].I1.dim(2) == 18);
  CHECK(pairs[2].I1.dim(2) == 16);
}

TEST_CASE("random_crop cuts the same window from both branches") {
  std::vector<Image> bases = {synth_base_image(16, 16, 7)};
  LowLightPair pair = synth_pairs(bases, 1, 21).at(0);
  Rng rng(3);
  LowLightPair crop = random_crop(pair, 5, rng);
  CHECK(crop.I1.shape() == Shape({1, 3, 5, 5}));
  CHECK(crop.I2.shape() == Shape({1, 3, 5, 5}));
  CHECK(crop.id == pair.id);

  // locate the window in I1 by exhaustive scan, then demand I2 agree at the
  // exact same offset — the pair stays registered
  auto window_matches = [&](const Tensor<float>& full, const Tensor<float>& cut,
                            int oy, int ox) {
    const int h = full.dim(2), w = full.dim(3);
    const int64_t fplane = static_cast<int64_t>(h) * w;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x)
          if (cut.values()[static_cast<size_t>(c * 25 + y * 5 + x)] !=
              full.values()[static_cast<size_t>(c * fplane + (oy + y) * w + (ox + x))])
            return false;
    return true;
  };
  int found = 0, found_oy = -1, found_ox = -1;
  for (int oy = 0; oy <= 11; ++oy)
    for (int ox = 0; ox <= 11; ++ox)
      if (window_matches(pair.I1, crop.I1, oy, ox)) {
        ++found;
        found_oy = oy;
        found_ox = ox;
      }
  REQUIRE(found >= 1);
  CHECK(window_matches(pair.I2, crop.I2, found_oy, found_ox));

  // crop of the full size is the identity
  Rng rng2(4);
  LowLightPair whole = random_crop(pair, 16, rng2);
  CHECK(same_values(whole.I1, pair.I1));
  CHECK(same_values(whole.I2, pair.I2));

  Rng rng3(5);
  CHECK_THROWS_AS(random_crop(pair, 17, rng3), ConfigError);
  CHECK_THROWS_AS(random_crop(pair, 0, rng3), ConfigError);
  CHECK_THROWS_AS(random_crop(pair, -3, rng3), ConfigError);
}

TEST_CASE("procedural base images are deterministic and well exposed") {
  Image a = synth_base_image(32, 24, 123);
  Image b = synth_base_image(32, 24, 123);
  Image c = synth_base_image(32, 24, 124);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels != c.pixels);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (double p : a.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
    sum += p;
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(lo >= 0.2);  // the generator keeps away from crushed shadows
  const double mean = sum / static_cast<double>(a.pixels.size());
  CHECK(mean > 0.3);
  CHECK(mean < 0.9);
  CHECK_THROWS_AS(synth_base_image(0, 10, 1), ConfigError);
  CHECK_THROWS_AS(synth_base_image(10, -1, 1), ConfigError);
}
