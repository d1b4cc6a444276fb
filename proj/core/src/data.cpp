#include "lumina/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lumina/errors.hpp"
#include "lumina/png_io.hpp"

namespace lumina {

std::vector<LowLightPair> load_pairs(const std::filesystem::path& root,
                                     std::vector<std::string>* warnings) {
  if (!std::filesystem::is_directory(root))
    throw DataError("load_pairs: '" + root.string() + "' is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());

  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  std::vector<LowLightPair> pairs;
  for (const auto& dir : dirs) {
    const auto a = dir / "a.png";
    const auto b = dir / "b.png";
    if (!std::filesystem::is_regular_file(a) || !std::filesystem::is_regular_file(b)) {
      warn("pair directory '" + dir.filename().string() + "' lacks a.png/b.png, skipped");
      continue;
    }
    Image ia, ib;
    try {
      ia = read_png(a);
      ib = read_png(b);
    } catch (const Error& e) {
      warn("pair directory '" + dir.filename().string() + "' unreadable (" + e.what() +
           "), skipped");
      continue;
    }
    if (!ia.same_size(ib)) {
      warn("pair directory '" + dir.filename().string() + "' has mismatched sizes " +
           std::to_string(ia.width) + "x" + std::to_string(ia.height) + " vs " +
           std::to_string(ib.width) + "x" + std::to_string(ib.height) + ", skipped");
      continue;
    }
    pairs.push_back({to_tensor<float>(ia), to_tensor<float>(ib), dir.filename().string()});
  }
  if (pairs.empty())
    throw DataError("load_pairs: no valid pairs under '" + root.string() + "'");
  return pairs;
}

namespace {

/// Bilinear upsample of a res x res grid to h x w (half-pixel centers,
/// clamped edges).
std::vector<double> upsample(const std::vector<double>& grid, int res, int h, int w) {
  std::vector<double> out(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) / h * res - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, res - 1);
    const int y1 = std::min(y0 + 1, res - 1);
    const double ty = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) / w * res - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, res - 1);
      const int x1 = std::min(x0 + 1, res - 1);
      const double tx = std::clamp(fx - x0, 0.0, 1.0);
      const double top = grid[static_cast<size_t>(y0) * res + x0] * (1 - tx) +
                         grid[static_cast<size_t>(y0) * res + x1] * tx;
      const double bot = grid[static_cast<size_t>(y1) * res + x0] * (1 - tx) +
                         grid[static_cast<size_t>(y1) * res + x1] * tx;
      out[static_cast<size_t>(y) * w + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

/// Smooth illumination field in [level_min, level_max]: low-res uniform grid,
/// bilinear upsample, gamma curve, affine map onto the level range.
std::vector<double> sample_field(Rng& rng, int h, int w, const SynthParams& p) {
  std::vector<double> grid(static_cast<size_t>(p.field_res) * p.field_res);
  for (double& g : grid) g = rng.uniform();
  const double gamma = rng.uniform(p.gamma_min, p.gamma_max);
  std::vector<double> field = upsample(grid, p.field_res, h, w);
  for (double& v : field)
    v = p.level_min + (p.level_max - p.level_min) * std::pow(v, gamma);
  return field;
}

}  // namespace

std::vector<SynthPair> synth_pairs_with_fields(const std::vector<Image>& bases,
                                               int count, uint64_t seed,
                                               const SynthParams& params,
                                               std::vector<std::string>* warnings) {
  if (bases.empty()) throw DataError("synth_pairs: no base images");
  if (count <= 0) throw ConfigError("synth_pairs: count must be positive");
  if (params.field_res < 2 || params.gamma_min > params.gamma_max ||
      params.level_min <= 0 || params.level_min > params.level_max ||
      params.noise_sigma < 0)
    throw ConfigError("synth_pairs: invalid generator parameters");

  std::vector<const Image*> usable;
  for (const Image& b : bases) {
    if (b.width < params.min_size || b.height < params.min_size) {
      if (warnings)
        warnings->push_back("base image " + std::to_string(b.width) + "x" +
                            std::to_string(b.height) + " below minimum size " +
                            std::to_string(params.min_size) + ", skipped");
      continue;
    }
    usable.push_back(&b);
  }
  if (usable.empty()) throw DataError("synth_pairs: every base image is too small");

  Rng rng(seed);
  std::vector<SynthPair> out;
  out.reserve(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    const Image& base = *usable[static_cast<size_t>(k) % usable.size()];
    const int h = base.height, w = base.width;
    const std::vector<double> f1 = sample_field(rng, h, w, params);
    const std::vector<double> f2 = sample_field(rng, h, w, params);

    auto make_branch = [&](const std::vector<double>& field) {
      Tensor<float> t({1, 3, h, w});
      float* v = t.data();
      const int64_t plane = static_cast<int64_t>(h) * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double l = field[static_cast<size_t>(y) * w + x];
          for (int c = 0; c < 3; ++c) {
            const double noisy =
                base.at(y, x, c) * l + params.noise_sigma * rng.normal();
            v[c * plane + static_cast<int64_t>(y) * w + x] =
                static_cast<float>(std::clamp(noisy, 0.0, 1.0));
          }
        }
      return t;
    };
    Tensor<float> i1 = make_branch(f1);
    Tensor<float> i2 = make_branch(f2);

    auto field_tensor = [&](const std::vector<double>& field) {
      Tensor<float> t({1, 1, h, w});
      float* v = t.data();
      for (size_t i = 0; i < field.size(); ++i) v[i] = static_cast<float>(field[i]);
      return t;
    };
    char id[16];
    std::snprintf(id, sizeof id, "pair_%04d", k);
    out.push_back({{std::move(i1), std::move(i2), id},
                   field_tensor(f1), field_tensor(f2)});
  }
  return out;
}

std::vector<LowLightPair> synth_pairs(const std::vector<Image>& bases, int count,
                                      uint64_t seed, const SynthParams& params,
                                      std::vector<std::string>* warnings) {
  std::vector<LowLightPair> out;
  for (SynthPair& sp : synth_pairs_with_fields(bases, count, seed, params, warnings))
    out.push_back(std::move(sp.pair));
  return out;
}

Image synth_base_image(int width, int height, uint64_t seed) {
  if (width <= 0 || height <= 0)
    throw ConfigError("synth_base_image: size must be positive");
  Rng rng(seed);
  Image img(width, height);
  const int res = 6;
  // Independent smooth plane per channel plus one shared brightness plane so
  // channels correlate the way real scenes do.
  std::vector<double> shared(static_cast<size_t>(res) * res);
  for (double& v : shared) v = rng.uniform();
  const std::vector<double> lum = upsample(shared, res, height, width);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> grid(static_cast<size_t>(res) * res);
    for (double& v : grid) v = rng.uniform();
    const std::vector<double> plane = upsample(grid, res, height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = 0.25 + 0.7 * (0.6 * lum[static_cast<size_t>(y) * width + x] +
                                       0.4 * plane[static_cast<size_t>(y) * width + x]);
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
  }
  return img;
}

LowLightPair random_crop(const LowLightPair& pair, int crop, Rng& rng) {
  const int h = pair.I1.dim(2), w = pair.I1.dim(3);
  if (crop <= 0 || crop > h || crop > w)
    throw ConfigError("random_crop: crop " + std::to_string(crop) +
                      " invalid for pair size " + std::to_string(w) + "x" +
                      std::to_string(h));
  const int oy = static_cast<int>(rng.below(static_cast<uint64_t>(h - crop + 1)));
  const int ox = static_cast<int>(rng.below(static_cast<uint64_t>(w - crop + 1)));
  auto cut = [&](const Tensor<float>& t) {
    Tensor<float> out({1, 3, crop, crop});
    const float* src = t.data();
    float* dst = out.data();
    const int64_t splane = static_cast<int64_t>(h) * w;
    const int64_t dplane = static_cast<int64_t>(crop) * crop;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < crop; ++y)
        std::copy(src + c * splane + static_cast<int64_t>(oy + y) * w + ox,
                  src + c * splane + static_cast<int64_t>(oy + y) * w + ox + crop,
                  dst + c * dplane + static_cast<int64_t>(y) * crop);
    return out;
  };
  return {cut(pair.I1), cut(pair.I2), pair.id};
}

}  // namespace lumina
