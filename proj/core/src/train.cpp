#include "lumina/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lumina/optim.hpp"
#include "lumina/pipeline.hpp"

namespace lumina {

std::string format_step_log(const StepLog& log) {
  char buf[360];
  std::snprintf(buf, sizeof buf,
                "%lld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g",
                static_cast<long long>(log.step), log.lr, log.projection,
                log.consistency, log.reconstruction, log.reflectance_fit,
                log.illumination_anchor, log.smoothness, log.perceptual, log.total);
  return buf;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<StepLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open loss log '" + path.string() + "' for writing");
  out << "# step\tlr\tL_p\tL_C\trecon\trefl_fit\tanchor\tsmooth\tL_per\tL_All\n";
  for (const StepLog& l : log) out << format_step_log(l) << "\n";
  if (!out) throw DataError("write to loss log '" + path.string() + "' failed");
}

TrainResult train(const TrainConfig& config, const std::vector<LowLightPair>& pairs,
                  const std::function<void(const StepLog&)>& on_step) {
  config.validate();
  if (pairs.empty()) throw DataError("train: no training pairs");
  for (const LowLightPair& p : pairs)
    if (config.crop > p.I1.dim(2) || config.crop > p.I1.dim(3))
      throw ConfigError("train: crop " + std::to_string(config.crop) +
                        " exceeds pair '" + p.id + "' size " +
                        std::to_string(p.I1.dim(3)) + "x" + std::to_string(p.I1.dim(2)));

  TrainResult result;
  result.params = ModelParams<float>::init(config.seed);
  const FeatureExtractor<float> phi = FeatureExtractor<float>::init(config.phi_seed);
  const int64_t total_steps = static_cast<int64_t>(config.epochs) *
                              static_cast<int64_t>(pairs.size());
  AdamCosine<float> opt(config.lr, total_steps);
  // Crop offsets come from their own stream so the parameter init draw count
  // can never shift the data pipeline.
  Rng crop_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const LowLightPair& pair : pairs) {
      ++step;
      const LowLightPair sample =
          (config.crop == pair.I1.dim(2) && config.crop == pair.I1.dim(3))
              ? pair
              : random_crop(pair, config.crop, crop_rng);

      Tape<float> tape;
      result.params.watch_all(tape);
      PairedForward<float> fwd =
          paired_forward(result.params, phi, sample.I1, sample.I2, config.lambda,
                         config.weights, config.clamp_floor);
      const double total = static_cast<double>(fwd.total.value());
      if (!std::isfinite(total))
        throw TrainError("combined loss is non-finite at step " + std::to_string(step));
      tape.backward(fwd.total);

      StepLog log;
      log.step = step;
      log.projection = 0.5 * (fwd.projection1.value() + fwd.projection2.value());
      log.consistency = fwd.consistency.value();
      log.reconstruction =
          0.5 * (fwd.retinex1.reconstruction.value() + fwd.retinex2.reconstruction.value());
      log.reflectance_fit =
          0.5 * (fwd.retinex1.reflectance_fit.value() + fwd.retinex2.reflectance_fit.value());
      log.illumination_anchor = 0.5 * (fwd.retinex1.illumination_anchor.value() +
                                       fwd.retinex2.illumination_anchor.value());
      log.smoothness =
          0.5 * (fwd.retinex1.smoothness.value() + fwd.retinex2.smoothness.value());
      log.perceptual = fwd.perceptual.value();
      log.total = total;
      log.lr = opt.step(result.params, tape);
      result.log.push_back(log);
      if (on_step) on_step(log);
    }
  }
  return result;
}

}  // namespace lumina
