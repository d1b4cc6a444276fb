#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lumina/nets.hpp"
#include "lumina/rng.hpp"

using namespace lumina;

namespace {

template <typename S>
Tensor<S> rand_image(int c, int hw, uint64_t seed, double lo = 0.05, double hi = 0.95) {
  Rng rng(seed);
  std::vector<S> v(static_cast<size_t>(c) * hw * hw);
  for (S& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return Tensor<S>({1, c, hw, hw}, std::move(v));
}

template <typename S>
void check_open_unit_range(const Tensor<S>& t) {
  for (S v : t.values()) {
    CHECK(v > S(0));
    CHECK(v < S(1));
  }
}

template <typename S>
void check_bitwise_equal(const Tensor<S>& a, const Tensor<S>& b) {
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(a.values()[static_cast<size_t>(i)] == b.values()[static_cast<size_t>(i)]);
}

}  // namespace

TEST_CASE("architecture table is consistent and pins the parameter count") {
  const auto& table = architecture_table();
  CHECK(table.size() == 40);  // 20 layers, weight + bias each

  std::set<std::string> paths;
  int64_t total = 0;
  for (const ParamSpec& spec : table) {
    CHECK(paths.insert(spec.path).second);  // unique
    total += numel(spec.shape);
    CHECK(spec.fan_in > 0);
    if (spec.shape.size() == 4)  // conv weight: fan_in = C_in * k * k
      CHECK(spec.fan_in == spec.shape[1] * spec.shape[2] * spec.shape[3]);
    if (spec.shape.size() == 2)  // fc weight: fan_in = in_features
      CHECK(spec.fan_in == spec.shape[1]);
  }
  CHECK(total == 52217);
  CHECK(ModelParams<float>::init(1).param_count() == 52217);
}

TEST_CASE("initialization is seeded, bounded, and seed-sensitive") {
  ModelParams<float> a = ModelParams<float>::init(42);
  ModelParams<float> b = ModelParams<float>::init(42);
  ModelParams<float> c = ModelParams<float>::init(43);

  bool any_differs = false;
  for (const ParamSpec& spec : architecture_table()) {
    const auto& av = a.at(spec.path).values();
    const auto& bv = b.at(spec.path).values();
    const auto& cv = c.at(spec.path).values();
    const float bound = 1.0f / std::sqrt(static_cast<float>(spec.fan_in));
    bool all_zero = true;
    for (size_t i = 0; i < av.size(); ++i) {
      CHECK(av[i] == bv[i]);
      CHECK(std::fabs(av[i]) <= bound);
      if (av[i] != 0.0f) all_zero = false;
      if (av[i] != cv[i]) any_differs = true;
    }
    CHECK(!all_zero);
  }
  CHECK(any_differs);

  CHECK_THROWS_AS(a.at("no.such.param"), ContractError);
}

TEST_CASE("projection keeps shape and stays strictly inside (0,1)") {
  ModelParams<float> p = ModelParams<float>::init(7);
  Tensor<float> img = rand_image<float>(3, 16, 1);
  Tensor<float> i1 = project(p, img);
  CHECK(i1.shape() == img.shape());
  check_open_unit_range(i1);

  Tensor<float> i2 = project(p, img);
  check_bitwise_equal(i1, i2);

  CHECK_THROWS_AS(project(p, Tensor<float>({1, 1, 8, 8})), DimensionError);
}

TEST_CASE("decomposition produces a 3-channel reflectance and 1-channel illumination") {
  ModelParams<float> p = ModelParams<float>::init(7);
  Tensor<float> i = rand_image<float>(3, 16, 2);
  auto [R, L] = decompose(p, i);
  CHECK(R.shape() == Shape{1, 3, 16, 16});
  CHECK(L.shape() == Shape{1, 1, 16, 16});
  check_open_unit_range(R);
  check_open_unit_range(L);
}

TEST_CASE("attention gates have the contract shapes and open-unit range") {
  ModelParams<float> p = ModelParams<float>::init(7);
  Tensor<float> R = rand_image<float>(3, 16, 3, 0.05, 0.95);
  CgGates<float> g = cg_gates(p, R);
  CHECK(g.channel.shape() == Shape{1, 3, 1, 1});
  CHECK(g.spatial.shape() == Shape{1, 1, 16, 16});
  check_open_unit_range(g.channel);
  check_open_unit_range(g.spatial);

  // CE channel gate over the rebuilt feature stack
  Tensor<float> L = rand_image<float>(1, 16, 4);
  Tensor<float> f = relu(conv2d(L, p.at("ce.conv1.weight"), p.at("ce.conv1.bias"), 1, 1));
  f = relu(conv2d(f, p.at("ce.conv2.weight"), p.at("ce.conv2.bias"), 1, 1));
  Tensor<float> gate = ce_gates(p, f);
  CHECK(gate.shape() == Shape{1, 8, 1, 1});
  check_open_unit_range(gate);
}

TEST_CASE("spatial attention separates a bright quadrant from the rest") {
  ModelParams<float> p = ModelParams<float>::init(7);
  const int hw = 16;
  std::vector<float> v(3 * hw * hw, 0.1f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < hw / 2; ++y)
      for (int x = 0; x < hw / 2; ++x)
        v[static_cast<size_t>((c * hw + y) * hw + x)] = 0.9f;
  Tensor<float> R({1, 3, hw, hw}, std::move(v));
  CgGates<float> g = cg_gates(p, R);
  float lo = 1.0f, hi = 0.0f;
  for (float s : g.spatial.values()) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  CHECK(hi > lo);  // the map reacts to spatial structure
}

TEST_CASE("cg_refine is the residual fusion of the gated reflectance") {
  ModelParams<float> p = ModelParams<float>::init(9);
  Tensor<float> R = rand_image<float>(3, 12, 5);
  Tensor<float> R_f = cg_refine(p, R);
  CHECK(R_f.shape() == R.shape());
  check_open_unit_range(R_f);

  CgGates<float> g = cg_gates(p, R);
  Tensor<float> gated = mul(mul(R, g.channel), g.spatial);
  Tensor<float> manual =
      sigmoid(add(R, conv2d(gated, p.at("cg.fuse.weight"), p.at("cg.fuse.bias"), 1, 1)));
  check_bitwise_equal(R_f, manual);
}

TEST_CASE("ce_refine preserves the illumination shape") {
  ModelParams<float> p = ModelParams<float>::init(9);
  Tensor<float> L = rand_image<float>(1, 12, 6);
  Tensor<float> L_f = ce_refine(p, L);
  CHECK(L_f.shape() == L.shape());
  check_open_unit_range(L_f);

  Tensor<float> again = ce_refine(p, L);
  check_bitwise_equal(L_f, again);

  // spatial extent smaller than the 2x2 descriptor grid cannot be pooled
  CHECK_THROWS_AS(ce_refine(p, Tensor<float>({1, 1, 1, 4})), DimensionError);
}

TEST_CASE("oec matches the hand-computed scalar example") {
  Tensor<float> L_f = Tensor<float>::full({1, 1, 2, 2}, 0.25f);
  Tensor<float> R_f = Tensor<float>::full({1, 3, 2, 2}, 0.5f);
  Tensor<float> I_f = oec_correct(L_f, R_f, 0.5);
  // 0.25^0.5 * 0.5 = 0.25
  for (float v : I_f.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("oec with unit exponent is the plain recomposition") {
  Rng rng(11);
  Tensor<float> L_f = rand_image<float>(1, 8, 12, 0.02, 1.0);
  Tensor<float> R_f = rand_image<float>(3, 8, 13);
  Tensor<float> I_f = oec_correct(L_f, R_f, 1.0);
  Tensor<float> manual = clamp(mul(pow_scalar(clamp(L_f, 0.01f, 1.0f), 1.0f), R_f), 0.0f, 1.0f);
  check_bitwise_equal(I_f, manual);
}

TEST_CASE("oec validates lambda and respects the clamp floor") {
  Tensor<float> L_f = Tensor<float>::full({1, 1, 2, 2}, 0.001f);
  Tensor<float> R_f = Tensor<float>::ones({1, 3, 2, 2});
  CHECK_THROWS_AS(oec_correct(L_f, R_f, 0.0), ConfigError);
  CHECK_THROWS_AS(oec_correct(L_f, R_f, -0.2), ConfigError);
  CHECK_THROWS_AS(oec_correct(L_f, R_f, 1.5), ConfigError);

  // L_f below the floor is lifted to it: 0.01^1 * 1 = 0.01
  Tensor<float> I_f = oec_correct(L_f, R_f, 1.0);
  for (float v : I_f.values()) CHECK(v == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("smaller lambda never darkens any pixel") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<float> L_f = rand_image<float>(1, 6, 100 + trial, 0.01, 1.0);
    Tensor<float> R_f = rand_image<float>(3, 6, 200 + trial);
    Tensor<float> bright = oec_correct(L_f, R_f, 0.10);
    Tensor<float> mid = oec_correct(L_f, R_f, 0.2);
    Tensor<float> dark = oec_correct(L_f, R_f, 1.0);
    for (int64_t i = 0; i < bright.size(); ++i) {
      CHECK(bright.values()[static_cast<size_t>(i)] >= mid.values()[static_cast<size_t>(i)]);
      CHECK(mid.values()[static_cast<size_t>(i)] >= dark.values()[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("enhance composes the refinement blocks exactly") {
  ModelParams<float> p = ModelParams<float>::init(3);
  Tensor<float> img = rand_image<float>(3, 16, 21, 0.02, 0.5);

  Decomposition<float> d = enhance(p, img, kDefaultLambda, {});
  CHECK(d.I_f.shape() == img.shape());
  check_bitwise_equal(d.R_f, cg_refine(p, d.R));
  check_bitwise_equal(d.L_f, ce_refine(p, d.L));
  check_bitwise_equal(d.I_f, oec_correct(d.L_f, d.R_f, kDefaultLambda));

  Decomposition<float> again = enhance(p, img, kDefaultLambda, {});
  check_bitwise_equal(d.I_f, again.I_f);
}

TEST_CASE("ablation flags substitute the raw decomposition fields") {
  ModelParams<float> p = ModelParams<float>::init(3);
  Tensor<float> img = rand_image<float>(3, 16, 22, 0.02, 0.5);

  Decomposition<float> no_cg = enhance(p, img, kDefaultLambda, {.cg = true});
  check_bitwise_equal(no_cg.R_f, no_cg.R);

  Decomposition<float> no_ce = enhance(p, img, kDefaultLambda, {.ce = true});
  check_bitwise_equal(no_ce.L_f, no_ce.L);

  Decomposition<float> no_oec = enhance(p, img, kDefaultLambda, {.oec = true});
  check_bitwise_equal(no_oec.I_f, clamp(mul(no_oec.L_f, no_oec.R_f), 0.0f, 1.0f));

  Decomposition<float> bare =
      enhance(p, img, kDefaultLambda, {.oec = true, .cg = true, .ce = true});
  check_bitwise_equal(bare.I_f, clamp(mul(bare.L, bare.R), 0.0f, 1.0f));
}

TEST_CASE("watch_all exposes every parameter to the tape") {
  ModelParams<float> p = ModelParams<float>::init(5);
  Tape<float> tape;
  p.watch_all(tape);
  Tensor<float> img = rand_image<float>(3, 8, 31, 0.02, 0.5);
  Decomposition<float> d = enhance(p, img, kDefaultLambda, {});
  tape.backward(mean(d.I_f));

  for (const ParamSpec& spec : architecture_table()) {
    auto g = tape.grad_of(p.at(spec.path));
    CHECK(static_cast<int64_t>(g.size()) == numel(spec.shape));
  }
  // the sigmoid heads always pass gradient, so their weights must see some
  for (const char* path : {"n_net.conv3.weight", "r_net.conv4.weight", "l_net.conv4.weight",
                           "cg.fuse.weight", "ce.head.weight"}) {
    auto g = tape.grad_of(p.at(path));
    bool any = false;
    for (float v : g)
      if (v != 0.0f) any = true;
    CHECK(any);
  }
}
