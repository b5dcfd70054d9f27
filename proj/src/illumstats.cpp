#include "dimma/illumstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dimma/errors.hpp"
#include "dimma/retinex.hpp"

namespace dimma {

namespace {

constexpr double kMinRatio = 1e-4;
constexpr float kMuFloor = 1e-4f;

}  // namespace

void DimConfig::validate() const {
  if (!(gamma_min > 0.0) || !(gamma_min <= gamma_max)) {
    throw Error(ErrorCode::kInvalidConfig, "need 0 < gamma_min <= gamma_max");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidConfig, "alpha outside [0,1]");
  if (!(ratio_clamp_max >= 1.0)) throw Error(ErrorCode::kInvalidConfig, "ratio_clamp_max < 1");
}

int lightness_bin(double l) noexcept { return quantize_u8(l); }

void StatsBuilder::add(int bin, double ratio) {
  ratios_.at(static_cast<std::size_t>(bin)).push_back(ratio);
}

IlluminationStats StatsBuilder::finish() const {
  IlluminationStats s;
  std::vector<int> observed;
  for (int k = 0; k < IlluminationStats::kBins; ++k) {
    const auto& r = ratios_[k];
    s.count[k] = r.size();
    if (r.size() < 2) continue;
    double sum = 0.0;
    for (double v : r) sum += v;
    const double mean = sum / static_cast<double>(r.size());
    double ss = 0.0;
    for (double v : r) ss += (v - mean) * (v - mean);
    s.mu[k] = static_cast<float>(mean);
    s.sigma[k] = static_cast<float>(std::sqrt(ss / static_cast<double>(r.size() - 1)));
    observed.push_back(k);
  }
  if (observed.empty()) throw Error(ErrorCode::kNoObservedBins, "no bin has two or more ratios");

  std::size_t next = 0;  // index into observed of the first observed bin >= k
  for (int k = 0; k < IlluminationStats::kBins; ++k) {
    while (next < observed.size() && observed[next] < k) ++next;
    if (next < observed.size() && observed[next] == k) continue;
    s.interpolated[k] = true;
    if (next == 0) {
      s.mu[k] = s.mu[observed.front()];
      s.sigma[k] = s.sigma[observed.front()];
    } else if (next == observed.size()) {
      s.mu[k] = s.mu[observed.back()];
      s.sigma[k] = s.sigma[observed.back()];
    } else {
      const int lo = observed[next - 1];
      const int hi = observed[next];
      const double t = static_cast<double>(k - lo) / static_cast<double>(hi - lo);
      s.mu[k] = static_cast<float>((1.0 - t) * s.mu[lo] + t * s.mu[hi]);
      s.sigma[k] = static_cast<float>((1.0 - t) * s.sigma[lo] + t * s.sigma[hi]);
    }
  }
  for (float& m : s.mu) m = std::max(m, kMuFloor);
  s.fitted = true;
  return s;
}

IlluminationStats fit_stats(std::span<const ImagePair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "fit_stats needs at least one pair");
  StatsBuilder builder;
  const double min_light = 2.0 * kRetinexEpsilon;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Image& light = pairs[p].light;
    const Image& dark = pairs[p].dark;
    if (light.height() != dark.height() || light.width() != dark.width()) {
      throw Error(ErrorCode::kShapeMismatch, "pair " + std::to_string(p) + " shapes differ");
    }
    const auto lv = light.values();
    const auto dv = dark.values();
    for (std::size_t i = 0; i < light.pixel_count(); ++i) {
      const double l = (static_cast<double>(lv[3 * i]) + lv[3 * i + 1] + lv[3 * i + 2]) / 3.0;
      if (l < min_light) continue;
      const double ld = (static_cast<double>(dv[3 * i]) + dv[3 * i + 1] + dv[3 * i + 2]) / 3.0;
      builder.add(lightness_bin(l), ld / l);
    }
  }
  return builder.finish();
}

Field sample_dim_field(const Field& illumination, const IlluminationStats& stats, double gamma,
                       double alpha, Rng& rng, double ratio_clamp_max) {
  if (!stats.fitted) throw Error(ErrorCode::kUnfittedStats, "illumination stats are not fitted");
  if (!(gamma > 0.0)) throw Error(ErrorCode::kRange, "gamma must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kRange, "alpha outside [0,1]");
  if (illumination.channels() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "illumination must have one channel");
  }
  Field out(illumination.height(), illumination.width(), 1);
  const double scale = std::sqrt(alpha);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < illumination.size(); ++i) {
    const double l = illumination[i];
    const int k = lightness_bin(l);
    double phi = gamma * stats.mu[k];
    // With alpha == 0 no draw happens, so the result is seed independent.
    if (scale > 0.0) phi += scale * stats.sigma[k] * normal(rng);
    phi = std::clamp(phi, kMinRatio, ratio_clamp_max);
    out[i] = static_cast<float>(std::min(phi * l, 1.0));
  }
  return out;
}

void write_stats(const IlluminationStats& stats, std::ostream& out) {
  out << "dimma-stats v1\n";
  char line[160];
  for (int k = 0; k < IlluminationStats::kBins; ++k) {
    std::snprintf(line, sizeof line, "%d %.9g %.9g %llu %d\n", k, static_cast<double>(stats.mu[k]),
                  static_cast<double>(stats.sigma[k]),
                  static_cast<unsigned long long>(stats.count[k]), stats.interpolated[k] ? 1 : 0);
    out << line;
  }
}

IlluminationStats read_stats(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (header != "dimma-stats v1") throw Error(ErrorCode::kFormat, "bad stats header: " + header);
  IlluminationStats s;
  for (int k = 0; k < IlluminationStats::kBins; ++k) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, "stats table truncated");
    std::istringstream row(line);
    int idx = -1;
    double mu = 0.0;
    double sigma = 0.0;
    unsigned long long count = 0;
    int interp = 0;
    if (!(row >> idx >> mu >> sigma >> count >> interp) || idx != k || interp < 0 || interp > 1) {
      throw Error(ErrorCode::kFormat, "bad stats row " + std::to_string(k) + ": " + line);
    }
    s.mu[k] = static_cast<float>(mu);
    s.sigma[k] = static_cast<float>(sigma);
    s.count[k] = count;
    s.interpolated[k] = interp == 1;
  }
  s.fitted = true;
  return s;
}

void save_stats(const IlluminationStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
  write_stats(stats, out);
  if (!out) throw Error(ErrorCode::kIO, "write failed: " + path.string());
}

IlluminationStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  return read_stats(in);
}

}  // namespace dimma
