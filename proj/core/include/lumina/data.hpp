#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lumina/image.hpp"
#include "lumina/rng.hpp"
#include "lumina/tensor.hpp"

namespace lumina {

/// A registered exposure pair: two low-light views of the same scene.
struct LowLightPair {
  Tensor<float> I1, I2;  // 1 x 3 x H x W, [0,1]
  std::string id;
};

/// Loads pair subdirectories (each holding exactly a.png and b.png) under
/// root, sorted by subdirectory name. Malformed pairs are skipped with a
/// warning; zero valid pairs is a DataError.
std::vector<LowLightPair> load_pairs(const std::filesystem::path& root,
                                     std::vector<std::string>* warnings = nullptr);

/// Knobs of the synthetic pair generator. Defaults produce visibly different
/// exposures over a shared base image.
struct SynthParams {
  int field_res = 4;           // illumination sampled on this grid, then upsampled
  double gamma_min = 1.5;      // exposure curve range
  double gamma_max = 4.0;
  double level_min = 0.05;     // illumination value range after the gamma map
  double level_max = 0.6;
  double noise_sigma = 0.02;   // per-branch additive Gaussian noise
  int min_size = 16;           // bases smaller than this are skipped
};

/// One generated pair plus the illumination fields that built it, so tests
/// can check the construction (I1/L1 ~ I2/L2 where the fields are safe).
struct SynthPair {
  LowLightPair pair;
  Tensor<float> field1, field2;  // 1 x 1 x H x W illumination fields
};

/// Deterministic generator: each pair takes the next base image (cycling) and
/// two smooth illumination fields; branch k is clamp(base * field_k + noise_k).
std::vector<SynthPair> synth_pairs_with_fields(const std::vector<Image>& bases,
                                               int count, uint64_t seed,
                                               const SynthParams& params = {},
                                               std::vector<std::string>* warnings = nullptr);

std::vector<LowLightPair> synth_pairs(const std::vector<Image>& bases, int count,
                                      uint64_t seed, const SynthParams& params = {},
                                      std::vector<std::string>* warnings = nullptr);

/// The SAME window cut from both branches, offsets drawn from rng.
LowLightPair random_crop(const LowLightPair& pair, int crop, Rng& rng);

/// Smooth, colorful, well-exposed procedural image (values roughly in
/// [0.25, 0.95]): a stand-in scene for the synthetic pair generator when no
/// photographs are on hand.
Image synth_base_image(int width, int height, uint64_t seed);

}  // namespace lumina
