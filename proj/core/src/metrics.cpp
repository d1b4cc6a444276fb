#include "lumina/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "lumina/errors.hpp"
#include "lumina/png_io.hpp"

namespace lumina {

double psnr(const Image& x, const Image& y) {
  if (!x.same_size(y))
    throw DimensionError("psnr: image sizes differ: " + std::to_string(x.width) + "x" +
                         std::to_string(x.height) + " vs " + std::to_string(y.width) +
                         "x" + std::to_string(y.height));
  double se = 0.0;
  for (size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = x.pixels[i] - y.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    k[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> luma(const Image& img) {
  std::vector<double> out(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out[static_cast<size_t>(y) * img.width + x] =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return out;
}

/// Separable valid-mode Gaussian filter: (H x W) -> (H-10 x W-10).
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w,
                                 const std::array<double, kWindow>& k) {
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i)
        s += k[static_cast<size_t>(i)] * in[static_cast<size_t>(y) * w + x + i];
      rows[static_cast<size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i)
        s += k[static_cast<size_t>(i)] * rows[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& x, const Image& y) {
  if (!x.same_size(y))
    throw DimensionError("ssim: image sizes differ: " + std::to_string(x.width) + "x" +
                         std::to_string(x.height) + " vs " + std::to_string(y.width) +
                         "x" + std::to_string(y.height));
  if (x.width < kWindow || x.height < kWindow)
    throw DimensionError("ssim: image " + std::to_string(x.width) + "x" +
                         std::to_string(x.height) + " smaller than the " +
                         std::to_string(kWindow) + "x" + std::to_string(kWindow) +
                         " window");
  static const std::array<double, kWindow> kernel = gaussian_kernel();
  const int h = x.height, w = x.width;
  const std::vector<double> lx = luma(x);
  const std::vector<double> ly = luma(y);
  std::vector<double> lx2(lx.size()), ly2(lx.size()), lxy(lx.size());
  for (size_t i = 0; i < lx.size(); ++i) {
    lx2[i] = lx[i] * lx[i];
    ly2[i] = ly[i] * ly[i];
    lxy[i] = lx[i] * ly[i];
  }
  const std::vector<double> mx = filter_valid(lx, h, w, kernel);
  const std::vector<double> my = filter_valid(ly, h, w, kernel);
  const std::vector<double> mx2 = filter_valid(lx2, h, w, kernel);
  const std::vector<double> my2 = filter_valid(ly2, h, w, kernel);
  const std::vector<double> mxy = filter_valid(lxy, h, w, kernel);

  const double c1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
  const double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double mux = mx[i], muy = my[i];
    const double vx = mx2[i] - mux * mux;
    const double vy = my2[i] - muy * muy;
    const double cov = mxy[i] - mux * muy;
    total += ((2.0 * mux * muy + c1) * (2.0 * cov + c2)) /
             ((mux * mux + muy * muy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

namespace {

bool is_png(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

std::map<std::string, std::filesystem::path> scan_pngs(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && is_png(entry.path()))
      out.emplace(entry.path().stem().string(), entry.path());
  return out;
}

}  // namespace

MetricsReport evaluate_dir(const std::filesystem::path& enhanced_dir,
                           const std::filesystem::path& reference_dir) {
  if (!std::filesystem::is_directory(enhanced_dir))
    throw DataError("evaluate_dir: '" + enhanced_dir.string() + "' is not a directory");
  if (!std::filesystem::is_directory(reference_dir))
    throw DataError("evaluate_dir: '" + reference_dir.string() + "' is not a directory");

  const auto enhanced = scan_pngs(enhanced_dir);
  const auto reference = scan_pngs(reference_dir);
  MetricsReport report;
  for (const auto& [stem, path] : enhanced)
    if (!reference.count(stem))
      report.warnings.push_back("unmatched enhanced image: " + path.filename().string());
  for (const auto& [stem, path] : reference)
    if (!enhanced.count(stem))
      report.warnings.push_back("unmatched reference image: " + path.filename().string());

  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& [stem, epath] : enhanced) {
    auto rit = reference.find(stem);
    if (rit == reference.end()) continue;
    try {
      const Image a = read_png(epath);
      const Image b = read_png(rit->second);
      const double p = std::min(psnr(a, b), kPsnrCap);
      const double s = ssim(a, b);
      report.per_image.push_back({stem, p, s});
      psnr_sum += p;
      ssim_sum += s;
    } catch (const Error& e) {
      report.file_errors.push_back(stem + ": " + e.what());
    }
  }
  if (!report.per_image.empty()) {
    report.mean_psnr = psnr_sum / static_cast<double>(report.per_image.size());
    report.mean_ssim = ssim_sum / static_cast<double>(report.per_image.size());
  }
  return report;
}

std::string report_text(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "image quality report (PSNR dB / SSIM on BT.601 luma, 11x11 Gaussian window)\n";
  os << "psnr cap for identical images: " << kPsnrCap << " dB\n\n";
  for (const auto& e : report.per_image)
    os << e.id << "\tpsnr=" << e.psnr_db << "\tssim=" << e.ssim << "\n";
  os << "\nimages: " << report.per_image.size() << "\n";
  os << "mean_psnr: " << report.mean_psnr << "\n";
  os << "mean_ssim: " << report.mean_ssim << "\n";
  if (!report.warnings.empty()) {
    os << "\nwarnings:\n";
    for (const auto& w : report.warnings) os << "  " << w << "\n";
  }
  if (!report.file_errors.empty()) {
    os << "\nerrors:\n";
    for (const auto& e : report.file_errors) os << "  " << e << "\n";
  }
  return os.str();
}

std::string report_structured(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(9);
  os << std::fixed;
  os << "# fields: id\tpsnr_db\tssim\n";
  for (const auto& e : report.per_image)
    os << e.id << "\t" << e.psnr_db << "\t" << e.ssim << "\n";
  os << "# mean_psnr\t" << report.mean_psnr << "\n";
  os << "# mean_ssim\t" << report.mean_ssim << "\n";
  return os.str();
}

}  // namespace lumina
