#include "dimma/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <ostream>
#include <set>

#include "dimma/errors.hpp"
#include "parallel.hpp"

namespace dimma {

namespace fs = std::filesystem;

namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw Error(ErrorCode::kShapeMismatch, "metric inputs have different shapes");
  }
}

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable Gaussian filter of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto kernel = gaussian_kernel();
  const int oh = h - kWindow + 1;
  const int ow = w - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += kernel[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += kernel[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

double ssim_planes(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  if (h < kWindow || w < kWindow) {
    throw Error(ErrorCode::kTooSmall, "SSIM needs both sides >= 11");
  }
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w);
  const auto mu_b = filter_valid(b, h, w);
  const auto e_aa = filter_valid(aa, h, w);
  const auto e_bb = filter_valid(bb, h, w);
  const auto e_ab = filter_valid(ab, h, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    sum += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
  }
  return sum / static_cast<double>(mu_a.size());
}

std::vector<double> channel_plane(const Image& img, int c) {
  std::vector<double> out(img.pixel_count());
  const auto v = img.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[3 * i + static_cast<std::size_t>(c)];
  return out;
}

std::vector<double> luma_plane(const Image& img) {
  std::vector<double> out(img.pixel_count());
  const auto v = img.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * v[3 * i] + 0.587 * v[3 * i + 1] + 0.114 * v[3 * i + 2];
  }
  return out;
}

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

constexpr double kM[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}};

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b);
  const auto va = a.values();
  const auto vb = b.values();
  double sse = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = static_cast<double>(va[i]) - static_cast<double>(vb[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(va.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim_gray(const Image& a, const Image& b) {
  require_same_shape(a, b);
  return ssim_planes(luma_plane(a), luma_plane(b), a.height(), a.width());
}

double ssim_rgb(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += ssim_planes(channel_plane(a, c), channel_plane(b, c), a.height(), a.width());
  return s / 3.0;
}

double ssim_plane(const Field& a, const Field& b) {
  if (a.channels() != 1 || !a.same_shape(b)) throw Error(ErrorCode::kShapeMismatch, "SSIM planes differ");
  std::vector<double> pa(a.values().begin(), a.values().end());
  std::vector<double> pb(b.values().begin(), b.values().end());
  return ssim_planes(pa, pb, a.height(), a.width());
}

Lab srgb_to_lab(double r, double g, double b) {
  const double lin[3] = {srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)};
  double xyz[3];
  double white[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kM[i][0] * lin[0] + kM[i][1] * lin[1] + kM[i][2] * lin[2];
    white[i] = kM[i][0] + kM[i][1] + kM[i][2];
  }
  const double fx = lab_f(xyz[0] / white[0]);
  const double fy = lab_f(xyz[1] / white[1]);
  const double fz = lab_f(xyz[2] / white[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double delta_e(const Image& a, const Image& b) {
  require_same_shape(a, b);
  const auto va = a.values();
  const auto vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    const Lab p = srgb_to_lab(va[3 * i], va[3 * i + 1], va[3 * i + 2]);
    const Lab q = srgb_to_lab(vb[3 * i], vb[3 * i + 1], vb[3 * i + 2]);
    sum += std::sqrt((p.l - q.l) * (p.l - q.l) + (p.a - q.a) * (p.a - q.a) + (p.b - q.b) * (p.b - q.b));
  }
  return sum / static_cast<double>(a.pixel_count());
}

MetricRow evaluate_pair(const std::string& name, const Image& pred, const Image& gt,
                        const std::map<std::string, MetricFn>& extra) {
  MetricRow row;
  row.name = name;
  row.psnr = psnr(pred, gt);
  row.ssim_gray = ssim_gray(pred, gt);
  row.ssim_rgb = ssim_rgb(pred, gt);
  row.delta_e = delta_e(pred, gt);
  for (const auto& [key, fn] : extra) row.extra[key] = fn(pred, gt);
  return row;
}

void summarize(MetricReport& report) {
  report.aggregate.clear();
  if (report.rows.empty()) return;
  std::map<std::string, std::vector<double>> columns;
  for (const MetricRow& r : report.rows) {
    columns["psnr"].push_back(r.psnr);
    columns["ssim_gray"].push_back(r.ssim_gray);
    columns["ssim_rgb"].push_back(r.ssim_rgb);
    columns["delta_e"].push_back(r.delta_e);
    for (const auto& [k, v] : r.extra) columns[k].push_back(v);
  }
  for (const auto& [key, values] : columns) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    report.aggregate[key] = {mean, std::sqrt(var / static_cast<double>(values.size()))};
  }
}

namespace {

std::set<std::string> image_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kFileNotFound, dir.string());
  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      names.insert(entry.path().filename().string());
    }
  }
  return names;
}

}  // namespace

MetricReport evaluate_dir(const fs::path& pred_dir, const fs::path& gt_dir,
                          const std::map<std::string, MetricFn>& extra) {
  const auto pred = image_names(pred_dir);
  const auto gt = image_names(gt_dir);
  MetricReport report;
  std::vector<std::string> matched;
  for (const auto& n : pred) {
    if (gt.contains(n)) {
      matched.push_back(n);
    } else {
      report.warnings.push_back("no ground truth for " + (pred_dir / n).string());
    }
  }
  for (const auto& n : gt) {
    if (!pred.contains(n)) report.warnings.push_back("no prediction for " + (gt_dir / n).string());
  }
  if (matched.empty()) {
    throw Error(ErrorCode::kNoPairsFound, pred_dir.string() + " and " + gt_dir.string() + " share no file names");
  }
  report.rows.resize(matched.size());
  parallel_for(matched.size(), [&](std::size_t i) {
    report.rows[i] = evaluate_pair(matched[i], load_image(pred_dir / matched[i]),
                                   load_image(gt_dir / matched[i]), extra);
  });
  summarize(report);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> extra_columns(const MetricReport& report) {
  std::set<std::string> keys;
  for (const auto& r : report.rows)
    for (const auto& kv : r.extra) keys.insert(kv.first);
  return {keys.begin(), keys.end()};
}

}  // namespace

void write_csv(const MetricReport& report, std::ostream& out) {
  const auto extras = extra_columns(report);
  out << "name,psnr,ssim_gray,ssim_rgb,delta_e";
  for (const auto& k : extras) out << ',' << k;
  out << '\n';
  for (const MetricRow& r : report.rows) {
    out << r.name << ',' << fmt(r.psnr) << ',' << fmt(r.ssim_gray) << ',' << fmt(r.ssim_rgb) << ','
        << fmt(r.delta_e);
    for (const auto& k : extras) out << ',' << (r.extra.contains(k) ? fmt(r.extra.at(k)) : "");
    out << '\n';
  }
  if (!report.aggregate.empty()) {
    out << "mean," << fmt(report.aggregate.at("psnr").mean) << ',' << fmt(report.aggregate.at("ssim_gray").mean)
        << ',' << fmt(report.aggregate.at("ssim_rgb").mean) << ',' << fmt(report.aggregate.at("delta_e").mean);
    for (const auto& k : extras) out << ',' << fmt(report.aggregate.at(k).mean);
    out << '\n';
  }
}

void write_markdown(const MetricReport& report, std::ostream& out) {
  const auto extras = extra_columns(report);
  out << "| Image | PSNR ↑ | SSIM ↑ | RGB-SSIM ↑ | DeltaE ↓ |";
  for (const auto& k : extras) out << ' ' << k << " |";
  out << "\n|---|---|---|---|---|";
  for (std::size_t i = 0; i < extras.size(); ++i) out << "---|";
  out << '\n';
  auto cell = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  for (const MetricRow& r : report.rows) {
    out << "| " << r.name << " | " << cell(r.psnr) << " | " << cell(r.ssim_gray) << " | " << cell(r.ssim_rgb)
        << " | " << cell(r.delta_e) << " |";
    for (const auto& k : extras) out << ' ' << (r.extra.contains(k) ? cell(r.extra.at(k)) : "") << " |";
    out << '\n';
  }
  if (!report.aggregate.empty()) {
    auto agg = [&](const std::string& key) {
      const auto& s = report.aggregate.at(key);
      return cell(s.mean) + " ± " + cell(s.std);
    };
    out << "| **mean** | " << agg("psnr") << " | " << agg("ssim_gray") << " | " << agg("ssim_rgb") << " | "
        << agg("delta_e") << " |";
    for (const auto& k : extras) out << ' ' << agg(k) << " |";
    out << '\n';
  }
}

}  // namespace dimma
