#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lumina/data.hpp"
#include "lumina/loss.hpp"
#include "lumina/nets.hpp"

namespace lumina {

struct TrainConfig {
  double lr = 1e-4;
  int epochs = 50;          // desk-scale default; the reference regime is 400
  int crop = 64;            // desk-scale default; the reference regime is 256
  int batch = 1;
  double lambda = kDefaultLambda;
  LossWeights weights;
  uint64_t seed = 0;
  double clamp_floor = kClampFloor;
  uint64_t phi_seed = 1;

  void validate() const {
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
    if (epochs <= 0) throw ConfigError("train: epochs must be positive");
    if (crop <= 0) throw ConfigError("train: crop must be positive");
    if (batch != 1) throw ConfigError("train: only batch size 1 is supported");
    if (!(lambda > 0.0) || lambda > 1.0)
      throw ConfigError("train: lambda must lie in (0, 1]");
    if (!(clamp_floor > 0.0) || clamp_floor >= 1.0)
      throw ConfigError("train: clamp_floor must lie in (0, 1)");
    weights.validate();
  }
};

/// One line of the training log. Branch-paired losses (projection, the four
/// retinex sub-terms) are the across-branch averages that enter the total.
struct StepLog {
  int64_t step = 0;  // 1-based
  double lr = 0.0;
  double projection = 0.0;
  double consistency = 0.0;
  double reconstruction = 0.0;
  double reflectance_fit = 0.0;
  double illumination_anchor = 0.0;
  double smoothness = 0.0;
  double perceptual = 0.0;
  double total = 0.0;
};

/// Tab-separated log line: step, lr, L_p, L_C, the four retinex sub-terms,
/// L_per, L_All.
std::string format_step_log(const StepLog& log);
void write_loss_log(const std::filesystem::path& path, const std::vector<StepLog>& log);

struct TrainResult {
  ModelParams<float> params;
  std::vector<StepLog> log;
};

/// Full training session: per step, crop a pair, run both branches, backward
/// from the combined loss, Adam+cosine update. Deterministic given the config
/// seed. Non-finite losses or gradients abort with a TrainError.
TrainResult train(const TrainConfig& config, const std::vector<LowLightPair>& pairs,
                  const std::function<void(const StepLog&)>& on_step = {});

}  // namespace lumina
