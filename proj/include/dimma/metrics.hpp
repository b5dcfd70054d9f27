#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dimma/image.hpp"

namespace dimma {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / mse), peak 1.0; identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

// Gaussian-window SSIM (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03, valid
// windows only). Gray uses Rec.601 luma; RGB is the mean over channels.
// Throws Error(kTooSmall) when a side is shorter than 11.
double ssim_gray(const Image& a, const Image& b);
double ssim_rgb(const Image& a, const Image& b);
// SSIM of two single-channel planes given as H x W x 1 fields.
double ssim_plane(const Field& a, const Field& b);

struct Lab {
  double l;
  double a;
  double b;
};

// sRGB (D65) -> CIELAB. The white point is the XYZ of sRGB white, so
// neutral colors map to a* = b* = 0.
Lab srgb_to_lab(double r, double g, double b);

// Mean CIE76 distance in CIELAB over pixels.
double delta_e(const Image& a, const Image& b);

// Optional extra metrics (e.g. LPIPS, NIQE wrappers) plug in by name.
using MetricFn = std::function<double(const Image& pred, const Image& gt)>;

struct MetricRow {
  std::string name;
  double psnr = 0.0;
  double ssim_gray = 0.0;
  double ssim_rgb = 0.0;
  double delta_e = 0.0;
  std::map<std::string, double> extra;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::map<std::string, MetricSummary> aggregate;  // keyed by column name
  std::vector<std::string> warnings;
};

MetricRow evaluate_pair(const std::string& name, const Image& pred, const Image& gt,
                        const std::map<std::string, MetricFn>& extra = {});

// Recomputes report.aggregate from report.rows.
void summarize(MetricReport& report);

// Pairs images by file name; files present on one side only become warnings.
// Throws Error(kNoPairsFound) when nothing matches.
MetricReport evaluate_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                          const std::map<std::string, MetricFn>& extra = {});

// CSV header: name,psnr,ssim_gray,ssim_rgb,delta_e[,extra...]; the last row
// is the mean aggregate with name "mean".
void write_csv(const MetricReport& report, std::ostream& out);
void write_markdown(const MetricReport& report, std::ostream& out);

}  // namespace dimma
