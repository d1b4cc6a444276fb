#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "lumina/nets.hpp"
#include "lumina/tensor.hpp"

namespace lumina {

/// One in-place Adam update with bias correction. `step` is the 1-based update
/// count (the t in the bias-correction terms).
template <class S>
void adam_update(std::span<S> param, std::span<const S> grad, std::span<S> m,
                 std::span<S> v, int64_t step, S lr, S beta1 = S(0.9),
                 S beta2 = S(0.999), S eps = S(1e-8)) {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
    throw DimensionError("adam_update: parameter/gradient/state sizes differ");
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1),
                                               static_cast<double>(step)));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2),
                                               static_cast<double>(step)));
  for (size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (S(1) - beta1) * grad[i];
    v[i] = beta2 * v[i] + (S(1) - beta2) * grad[i] * grad[i];
    const S mhat = m[i] / bc1;
    const S vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

/// lr * 0.5 * (1 + cos(pi * step / total)) on a 0-based step index, so step 0
/// gives lr exactly and step == total gives 0.
inline double cosine_lr(double lr, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be positive");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

/// Adam over every ModelParams tensor with the cosine schedule. Deterministic:
/// parameters are visited in architecture-table order, state is dense per
/// tensor.
template <class S>
class AdamCosine {
 public:
  AdamCosine(double lr, int64_t total_steps, double beta1 = 0.9,
             double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), total_steps_(total_steps), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0)) throw ConfigError("AdamCosine: lr must be positive");
    if (total_steps <= 0) throw ConfigError("AdamCosine: total_steps must be positive");
  }

  int64_t steps_taken() const { return steps_; }
  double lr_at(int64_t step) const { return cosine_lr(lr_, step, total_steps_); }

  /// Applies one update from the tape's gradients. Returns the learning rate
  /// used. A non-finite gradient aborts, naming the parameter.
  double step(ModelParams<S>& params, Tape<S>& tape) {
    const double lr_t = lr_at(steps_);
    const int64_t t = steps_ + 1;
    for (const ParamSpec& spec : architecture_table()) {
      Tensor<S>& p = params.at(spec.path);
      auto g = tape.grad_of(p);
      for (size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i]))
          throw TrainError("non-finite gradient in parameter '" + spec.path +
                           "' at step " + std::to_string(t));
      auto& st = state_[spec.path];
      if (st.m.empty()) {
        st.m.assign(static_cast<size_t>(p.size()), S(0));
        st.v.assign(static_cast<size_t>(p.size()), S(0));
      }
      adam_update<S>(std::span<S>(p.data(), static_cast<size_t>(p.size())), g,
                     std::span<S>(st.m), std::span<S>(st.v), t,
                     static_cast<S>(lr_t), static_cast<S>(beta1_),
                     static_cast<S>(beta2_), static_cast<S>(eps_));
    }
    ++steps_;
    return lr_t;
  }

 private:
  struct State {
    std::vector<S> m, v;
  };
  double lr_;
  int64_t total_steps_;
  double beta1_, beta2_, eps_;
  int64_t steps_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace lumina
