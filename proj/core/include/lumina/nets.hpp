#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lumina/ops.hpp"
#include "lumina/rng.hpp"
#include "lumina/tensor.hpp"

namespace lumina {

/// One row of the fixed architecture table: parameter path, tensor shape, and
/// the fan-in that scales its uniform init range.
struct ParamSpec {
  std::string path;
  Shape shape;
  int fan_in;
};

/// The canonical parameter list. Order matters: initialization draws from one
/// sequential RNG stream in exactly this order, and checkpoints serialize
/// arrays in this order.
inline const std::vector<ParamSpec>& architecture_table() {
  static const std::vector<ParamSpec> table = [] {
    std::vector<ParamSpec> t;
    auto conv = [&t](const std::string& name, int co, int ci, int k) {
      const int fan = ci * k * k;
      t.push_back({name + ".weight", {co, ci, k, k}, fan});
      t.push_back({name + ".bias", {co}, fan});
    };
    auto fc = [&t](const std::string& name, int out, int in) {
      t.push_back({name + ".weight", {out, in}, in});
      t.push_back({name + ".bias", {out}, in});
    };
    // N-Net: projection 3->32->32->3
    conv("n_net.conv1", 32, 3, 3);
    conv("n_net.conv2", 32, 32, 3);
    conv("n_net.conv3", 3, 32, 3);
    // R-Net: reflectance 3->32->32->32->3
    conv("r_net.conv1", 32, 3, 3);
    conv("r_net.conv2", 32, 32, 3);
    conv("r_net.conv3", 32, 32, 3);
    conv("r_net.conv4", 3, 32, 3);
    // L-Net: illumination 3->32->32->32->1
    conv("l_net.conv1", 32, 3, 3);
    conv("l_net.conv2", 32, 32, 3);
    conv("l_net.conv3", 32, 32, 3);
    conv("l_net.conv4", 1, 32, 3);
    // CG attention: channel squeeze/excite (reduction 4 on 3 channels -> width 1),
    // spatial 7x7 gate over [avg;max], residual fuse conv
    conv("cg.channel1", 1, 3, 1);
    conv("cg.channel2", 3, 1, 1);
    conv("cg.spatial", 1, 2, 7);
    conv("cg.fuse", 3, 3, 3);
    // CE attention: feature convs on L, AAP(2x2) descriptor -> FC gate, conv head
    conv("ce.conv1", 8, 1, 3);
    conv("ce.conv2", 8, 8, 3);
    fc("ce.fc1", 8, 32);
    fc("ce.fc2", 8, 8);
    conv("ce.head", 1, 8, 3);
    return t;
  }();
  return table;
}

/// Trainable parameters, keyed by path. Initialization is a pure function of
/// the seed: one RNG stream, table order, uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)]
/// drawn in double and cast to S.
template <class S>
struct ModelParams {
  std::map<std::string, Tensor<S>> tensors;
  uint64_t rng_seed = 0;

  static ModelParams init(uint64_t seed) {
    ModelParams p;
    p.rng_seed = seed;
    Rng rng(seed);
    for (const ParamSpec& spec : architecture_table()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::vector<S> vals(static_cast<size_t>(numel(spec.shape)));
      for (S& v : vals) v = static_cast<S>(rng.uniform(-bound, bound));
      p.tensors.emplace(spec.path, Tensor<S>(spec.shape, std::move(vals)));
    }
    return p;
  }

  Tensor<S>& at(const std::string& path) {
    auto it = tensors.find(path);
    if (it == tensors.end())
      throw ContractError("ModelParams: unknown parameter path '" + path + "'");
    return it->second;
  }
  const Tensor<S>& at(const std::string& path) const {
    auto it = tensors.find(path);
    if (it == tensors.end())
      throw ContractError("ModelParams: unknown parameter path '" + path + "'");
    return it->second;
  }

  void watch_all(Tape<S>& tape) {
    for (const ParamSpec& spec : architecture_table()) tape.watch(at(spec.path));
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& [path, t] : tensors) n += t.size();
    return n;
  }
};

/// Which pipeline blocks to bypass (Table-style "w/o" ablations).
struct AblationSet {
  bool oec = false;
  bool cg = false;
  bool ce = false;
};

/// Everything the pipeline produces for one image.
template <class S>
struct Decomposition {
  Tensor<S> i;    // N x 3 x H x W, projected image
  Tensor<S> R;    // N x 3 x H x W, raw reflectance
  Tensor<S> L;    // N x 1 x H x W, raw illumination
  Tensor<S> R_f;  // refined reflectance
  Tensor<S> L_f;  // refined illumination
  Tensor<S> I_f;  // N x 3 x H x W, enhanced output
};

inline constexpr double kClampFloor = 0.01;
inline constexpr double kDefaultLambda = 0.2;
inline constexpr double kLolLambda = 0.10;

namespace detail {

template <class S>
void check_channels(const Tensor<S>& x, int c, const char* who) {
  check_rank4(x.shape(), who, "input");
  if (x.dim(1) != c)
    throw DimensionError(std::string(who) + ": channel axis must be " +
                         std::to_string(c) + ", got " + shape_str(x.shape()));
}

}  // namespace detail

/// N-Net: maps the raw image to the projected image i that the Retinex
/// decomposition actually sees.
template <class S>
Tensor<S> project(const ModelParams<S>& p, const Tensor<S>& image) {
  detail::check_channels(image, 3, "project");
  Tensor<S> h1 = relu(conv2d(image, p.at("n_net.conv1.weight"), p.at("n_net.conv1.bias"), 1, 1));
  Tensor<S> h2 = relu(conv2d(h1, p.at("n_net.conv2.weight"), p.at("n_net.conv2.bias"), 1, 1));
  return sigmoid(conv2d(h2, p.at("n_net.conv3.weight"), p.at("n_net.conv3.bias"), 1, 1));
}

/// R-Net and L-Net: reflectance (3-channel) and illumination (1-channel) maps,
/// both sigmoid-bounded.
template <class S>
std::pair<Tensor<S>, Tensor<S>> decompose(const ModelParams<S>& p, const Tensor<S>& i) {
  detail::check_channels(i, 3, "decompose");
  Tensor<S> r = relu(conv2d(i, p.at("r_net.conv1.weight"), p.at("r_net.conv1.bias"), 1, 1));
  r = relu(conv2d(r, p.at("r_net.conv2.weight"), p.at("r_net.conv2.bias"), 1, 1));
  r = relu(conv2d(r, p.at("r_net.conv3.weight"), p.at("r_net.conv3.bias"), 1, 1));
  Tensor<S> R = sigmoid(conv2d(r, p.at("r_net.conv4.weight"), p.at("r_net.conv4.bias"), 1, 1));

  Tensor<S> l = relu(conv2d(i, p.at("l_net.conv1.weight"), p.at("l_net.conv1.bias"), 1, 1));
  l = relu(conv2d(l, p.at("l_net.conv2.weight"), p.at("l_net.conv2.bias"), 1, 1));
  l = relu(conv2d(l, p.at("l_net.conv3.weight"), p.at("l_net.conv3.bias"), 1, 1));
  Tensor<S> L = sigmoid(conv2d(l, p.at("l_net.conv4.weight"), p.at("l_net.conv4.bias"), 1, 1));
  return {R, L};
}

/// CG gate maps, exposed separately so tests can probe their ranges.
template <class S>
struct CgGates {
  Tensor<S> channel;  // N x 3 x 1 x 1
  Tensor<S> spatial;  // N x 1 x H x W
};

template <class S>
CgGates<S> cg_gates(const ModelParams<S>& p, const Tensor<S>& R) {
  detail::check_channels(R, 3, "cg_refine");
  Tensor<S> squeezed = global_avg_pool(R);
  Tensor<S> mid = relu(conv2d(squeezed, p.at("cg.channel1.weight"), p.at("cg.channel1.bias"), 1, 0));
  Tensor<S> w_c = sigmoid(conv2d(mid, p.at("cg.channel2.weight"), p.at("cg.channel2.bias"), 1, 0));
  Tensor<S> pooled = concat_channels(channel_avg(R), channel_max(R));
  Tensor<S> w_s = sigmoid(conv2d(pooled, p.at("cg.spatial.weight"), p.at("cg.spatial.bias"), 1, 3));
  return {w_c, w_s};
}

/// Colour-Guidance refinement: channel gate (GAP squeeze/excite), spatial gate
/// (7x7 over [avg;max]), then a residual fuse conv under a sigmoid.
template <class S>
Tensor<S> cg_refine(const ModelParams<S>& p, const Tensor<S>& R) {
  CgGates<S> g = cg_gates(p, R);
  Tensor<S> gated = mul(mul(R, g.channel), g.spatial);
  Tensor<S> fused = conv2d(gated, p.at("cg.fuse.weight"), p.at("cg.fuse.bias"), 1, 1);
  return sigmoid(add(R, fused));
}

template <class S>
Tensor<S> ce_gates(const ModelParams<S>& p, const Tensor<S>& features) {
  const int n = features.dim(0);
  Tensor<S> desc = adaptive_avg_pool(features, 2, 2);
  Tensor<S> flat = reshape(desc, {n, 32});
  Tensor<S> mid = relu(linear(flat, p.at("ce.fc1.weight"), p.at("ce.fc1.bias")));
  Tensor<S> gate = sigmoid(linear(mid, p.at("ce.fc2.weight"), p.at("ce.fc2.bias")));
  return reshape(gate, {n, 8, 1, 1});
}

/// Contrast-Enhancement refinement of the illumination plane: feature convs,
/// AAP(2,2) global descriptor, FC sigmoid channel gate, sigmoid conv head.
template <class S>
Tensor<S> ce_refine(const ModelParams<S>& p, const Tensor<S>& L) {
  detail::check_channels(L, 1, "ce_refine");
  Tensor<S> f = relu(conv2d(L, p.at("ce.conv1.weight"), p.at("ce.conv1.bias"), 1, 1));
  f = relu(conv2d(f, p.at("ce.conv2.weight"), p.at("ce.conv2.bias"), 1, 1));
  Tensor<S> gate = ce_gates(p, f);
  Tensor<S> gated = mul(f, gate);
  return sigmoid(conv2d(gated, p.at("ce.head.weight"), p.at("ce.head.bias"), 1, 1));
}

/// Over-Exposure Correction: I_f = clamp(L_f^lambda o R_f, 0, 1) with the
/// illumination clamped away from zero before the power.
template <class S>
Tensor<S> oec_correct(const Tensor<S>& L_f, const Tensor<S>& R_f, double lambda,
                      double clamp_floor = kClampFloor) {
  if (!(lambda > 0.0) || lambda > 1.0)
    throw ConfigError("oec_correct: lambda must lie in (0, 1], got " +
                      std::to_string(lambda));
  detail::check_channels(L_f, 1, "oec_correct (illumination)");
  detail::check_channels(R_f, 3, "oec_correct (reflectance)");
  Tensor<S> safe = clamp(L_f, static_cast<S>(clamp_floor), S(1));
  Tensor<S> powered = pow_scalar(safe, static_cast<S>(lambda));
  return clamp(mul(powered, R_f), S(0), S(1));
}

/// Full inference path. Ablated blocks fall back to the raw decomposition
/// fields; with OEC off the output is the plain Retinex recomposition.
template <class S>
Decomposition<S> enhance(const ModelParams<S>& p, const Tensor<S>& image,
                         double lambda = kDefaultLambda,
                         const AblationSet& ablate = {},
                         double clamp_floor = kClampFloor) {
  Decomposition<S> d;
  d.i = project(p, image);
  auto [R, L] = decompose(p, d.i);
  d.R = R;
  d.L = L;
  d.R_f = ablate.cg ? R : cg_refine(p, R);
  d.L_f = ablate.ce ? L : ce_refine(p, L);
  d.I_f = ablate.oec ? clamp(mul(d.L_f, d.R_f), S(0), S(1))
                     : oec_correct(d.L_f, d.R_f, lambda, clamp_floor);
  return d;
}

}  // namespace lumina
