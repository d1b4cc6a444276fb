#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lumina/image.hpp"

namespace lumina {

/// Cap substituted for infinite PSNR (identical images) when aggregating.
inline constexpr double kPsnrCap = 100.0;

/// 10 * log10(1 / MSE) in dB over all channels and pixels; +infinity for
/// identical images (callers aggregate it as kPsnrCap).
double psnr(const Image& x, const Image& y);

/// Mean local SSIM on BT.601 luma: 11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1, valid window positions only.
/// Requires min(H, W) >= 11.
double ssim(const Image& x, const Image& y);

struct MetricsReport {
  struct Entry {
    std::string id;
    double psnr_db = 0.0;  // capped value for identical images
    double ssim = 0.0;
  };
  std::vector<Entry> per_image;            // sorted by id
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::vector<std::string> warnings;       // unmatched files, skipped pairs
  std::vector<std::string> file_errors;    // unreadable images
  bool empty() const { return per_image.empty(); }
};

/// Pairs same-stem image files across the two directories, computes both
/// metrics per pair, and aggregates arithmetic means. Unmatched stems land in
/// warnings; unreadable files land in file_errors; both are excluded from the
/// means. Ordering is deterministic (sorted by stem).
MetricsReport evaluate_dir(const std::filesystem::path& enhanced_dir,
                           const std::filesystem::path& reference_dir);

/// Line-oriented human-readable report.
std::string report_text(const MetricsReport& report);

/// Machine-readable report: one tab-separated record per image with the
/// field order id, psnr_db, ssim; mean rows appended as comments.
std::string report_structured(const MetricsReport& report);

}  // namespace lumina
