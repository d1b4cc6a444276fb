#pragma once

#include <cstdint>
#include <string>

#include "lumina/nets.hpp"
#include "lumina/ops.hpp"
#include "lumina/rng.hpp"
#include "lumina/tensor.hpp"

namespace lumina {

struct LossWeights {
  double w0 = 5.0;   // projection
  double w1 = 1.0;   // consistency
  double w2 = 1.0;   // retinex
  double w3 = 0.1;   // perceptual

  void validate() const {
    if (w0 < 0 || w1 < 0 || w2 < 0 || w3 < 0)
      throw ConfigError("loss weights must be non-negative, got (" +
                        std::to_string(w0) + ", " + std::to_string(w1) + ", " +
                        std::to_string(w2) + ", " + std::to_string(w3) + ")");
  }
};

/// Frozen random conv stack standing in for a pretrained feature network.
/// Parameters are a pure function of the seed and are never placed on a tape,
/// so gradients flow through its input but never into it. Spatial extents are
/// cropped to odd before each stride-2 conv so the exact-division conv
/// geometry always holds.
template <class S>
struct FeatureExtractor {
  uint64_t seed = 0;
  Tensor<S> w1, b1, w2, b2, w3, b3;

  static FeatureExtractor init(uint64_t seed) {
    FeatureExtractor f;
    f.seed = seed;
    Rng rng(seed);
    auto draw = [&rng](Shape shape, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::vector<S> vals(static_cast<size_t>(numel(shape)));
      for (S& v : vals) v = static_cast<S>(rng.uniform(-bound, bound));
      return Tensor<S>(std::move(shape), std::move(vals));
    };
    f.w1 = draw({16, 3, 3, 3}, 27);
    f.b1 = draw({16}, 27);
    f.w2 = draw({32, 16, 3, 3}, 144);
    f.b2 = draw({32}, 144);
    f.w3 = draw({64, 32, 3, 3}, 288);
    f.b3 = draw({64}, 288);
    return f;
  }

  Tensor<S> features(const Tensor<S>& x) const {
    auto down = [](const Tensor<S>& in, const Tensor<S>& w, const Tensor<S>& b) {
      Tensor<S> v = in;
      const int h = v.dim(2), ww = v.dim(3);
      if (h % 2 == 0 || ww % 2 == 0)
        v = crop2d(v, h - (h % 2 == 0 ? 1 : 0), ww - (ww % 2 == 0 ? 1 : 0));
      return relu(conv2d(v, w, b, 2, 1));
    };
    Tensor<S> h = down(x, w1, b1);
    h = down(h, w2, b2);
    return down(h, w3, b3);
  }
};

template <class S>
Tensor<S> projection_loss(const Tensor<S>& original, const Tensor<S>& projected) {
  return mean_sq_diff(original, projected);
}

template <class S>
Tensor<S> consistency_loss(const Tensor<S>& refl1, const Tensor<S>& refl2) {
  return mean_sq_diff(refl1, refl2);
}

template <class S>
struct RetinexLossBreakdown {
  Tensor<S> reconstruction;       // mean ||R_f o L_f - i||^2
  Tensor<S> reflectance_fit;      // mean ||R_f - clamp01(i / stopgrad(L_f))||^2
  Tensor<S> illumination_anchor;  // mean ||clamp(L) - channelmax(i)||^2
  Tensor<S> smoothness;           // mean |grad L| on the raw plane
  Tensor<S> total;
};

/// Retinex decomposition loss. The divisor illumination is clamped to
/// [clamp_floor, 1] and held out of the gradient; the anchor compares the
/// clamped raw L against the per-pixel channel max of i; smoothness is the
/// forward-difference TV of the raw L plane.
template <class S>
RetinexLossBreakdown<S> retinex_loss(const Tensor<S>& i, const Tensor<S>& R_f,
                                     const Tensor<S>& L_raw, const Tensor<S>& L_f,
                                     double clamp_floor = kClampFloor) {
  if (i.rank() != 4 || i.dim(1) != 3)
    throw DimensionError("retinex_loss: i must be N x 3 x H x W, got " +
                         shape_str(i.shape()));
  if (L_raw.shape() != L_f.shape())
    throw DimensionError("retinex_loss: L and L_f shapes differ: " +
                         shape_str(L_raw.shape()) + " vs " + shape_str(L_f.shape()));
  const S floor = static_cast<S>(clamp_floor);
  RetinexLossBreakdown<S> out;
  out.reconstruction = mean_sq_diff(mul(R_f, L_f), i);
  Tensor<S> divisor = stop_gradient(clamp(L_f, floor, S(1)));
  Tensor<S> target = clamp(div(i, divisor), S(0), S(1));
  out.reflectance_fit = mean_sq_diff(R_f, target);
  out.illumination_anchor = mean_sq_diff(clamp(L_raw, floor, S(1)), channel_max(i));
  out.smoothness = tv_l1_mean(L_raw);
  out.total = add(add(out.reconstruction, out.reflectance_fit),
                  add(out.illumination_anchor, out.smoothness));
  return out;
}

template <class S>
Tensor<S> perceptual_loss(const FeatureExtractor<S>& phi, const Tensor<S>& I_f1,
                          const Tensor<S>& I_f2) {
  if (I_f1.shape() != I_f2.shape())
    throw DimensionError("perceptual_loss: shape mismatch " + shape_str(I_f1.shape()) +
                         " vs " + shape_str(I_f2.shape()));
  return mean_sq_diff(phi.features(I_f1), phi.features(I_f2));
}

/// L_All = w0*L_p + w1*L_C + w2*L_R + w3*L_per over already-reduced scalars.
template <class S>
Tensor<S> combined_loss(const LossWeights& w, const Tensor<S>& l_p,
                        const Tensor<S>& l_c, const Tensor<S>& l_r,
                        const Tensor<S>& l_per) {
  w.validate();
  Tensor<S> acc = mul_scalar(l_p, static_cast<S>(w.w0));
  acc = add(acc, mul_scalar(l_c, static_cast<S>(w.w1)));
  acc = add(acc, mul_scalar(l_r, static_cast<S>(w.w2)));
  return add(acc, mul_scalar(l_per, static_cast<S>(w.w3)));
}

}  // namespace lumina
