#pragma once

#include "lumina/loss.hpp"
#include "lumina/nets.hpp"

namespace lumina {

/// One training step's forward pass: both branches plus every loss term,
/// all living on the caller's tape so a single backward from `total` reaches
/// every parameter.
template <class S>
struct PairedForward {
  Decomposition<S> branch1, branch2;
  Tensor<S> projection1, projection2;
  Tensor<S> consistency;
  RetinexLossBreakdown<S> retinex1, retinex2;
  Tensor<S> perceptual;
  Tensor<S> total;
};

/// Runs the full two-branch pipeline on a registered low-light pair.
/// Projection and retinex losses are computed per branch and averaged; the
/// consistency and perceptual losses couple the branches.
template <class S>
PairedForward<S> paired_forward(const ModelParams<S>& params,
                                const FeatureExtractor<S>& phi,
                                const Tensor<S>& I1, const Tensor<S>& I2,
                                double lambda, const LossWeights& weights,
                                double clamp_floor = kClampFloor) {
  if (I1.shape() != I2.shape())
    throw DimensionError("paired_forward: branch shapes differ: " +
                         shape_str(I1.shape()) + " vs " + shape_str(I2.shape()));
  weights.validate();
  PairedForward<S> out;
  out.branch1 = enhance(params, I1, lambda, {}, clamp_floor);
  out.branch2 = enhance(params, I2, lambda, {}, clamp_floor);

  out.projection1 = projection_loss(I1, out.branch1.i);
  out.projection2 = projection_loss(I2, out.branch2.i);
  out.consistency = consistency_loss(out.branch1.R_f, out.branch2.R_f);
  out.retinex1 = retinex_loss(out.branch1.i, out.branch1.R_f, out.branch1.L,
                              out.branch1.L_f, clamp_floor);
  out.retinex2 = retinex_loss(out.branch2.i, out.branch2.R_f, out.branch2.L,
                              out.branch2.L_f, clamp_floor);
  out.perceptual = perceptual_loss(phi, out.branch1.I_f, out.branch2.I_f);

  Tensor<S> proj = mul_scalar(add(out.projection1, out.projection2), S(0.5));
  Tensor<S> retx = mul_scalar(add(out.retinex1.total, out.retinex2.total), S(0.5));
  out.total = combined_loss(weights, proj, out.consistency, retx, out.perceptual);
  return out;
}

}  // namespace lumina
