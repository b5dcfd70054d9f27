#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dimma/image.hpp"
#include "dimma/seed.hpp"

namespace dimma {

// Per 8-bit lightness bin statistics of the dark/light illumination ratio.
struct IlluminationStats {
  static constexpr int kBins = 256;

  std::array<float, kBins> mu{};
  std::array<float, kBins> sigma{};
  std::array<std::uint64_t, kBins> count{};
  std::array<bool, kBins> interpolated{};
  bool fitted = false;

  friend bool operator==(const IlluminationStats&, const IlluminationStats&) = default;
};

enum class DimMode {
  kStochastic,   // sample illumination ratios and MDN reflectance
  kExpectation,  // deterministic ablation: alpha forced to 0, mixture mean
};

struct DimConfig {
  double gamma_min = 0.3;
  double gamma_max = 2.0;
  double alpha = 0.8;
  double ratio_clamp_max = 1.5;
  std::uint64_t seed = 0;
  DimMode mode = DimMode::kStochastic;

  // Throws Error(kInvalidConfig).
  void validate() const;
};

// Accumulates ratios per bin; finish() applies the moment formulas and the
// interpolation fallback for bins with fewer than two observations.
class StatsBuilder {
 public:
  void add(int bin, double ratio);
  // Throws Error(kNoObservedBins) when no bin has two or more samples.
  IlluminationStats finish() const;

 private:
  std::array<std::vector<double>, IlluminationStats::kBins> ratios_;
};

// Bin of an illumination value: round-half-up of 255 * l.
int lightness_bin(double l) noexcept;

IlluminationStats fit_stats(std::span<const ImagePair> pairs);

// Draws L_D = phi * L per pixel, phi ~ N(gamma * mu_k, alpha * sigma_k^2),
// phi clamped to [1e-4, ratio_clamp_max], L_D clamped to at most 1.
Field sample_dim_field(const Field& illumination, const IlluminationStats& stats, double gamma,
                       double alpha, Rng& rng, double ratio_clamp_max = 1.5);

// "dimma-stats v1" text table, 9 significant digits.
void write_stats(const IlluminationStats& stats, std::ostream& out);
IlluminationStats read_stats(std::istream& in);
void save_stats(const IlluminationStats& stats, const std::filesystem::path& path);
IlluminationStats load_stats(const std::filesystem::path& path);

}  // namespace dimma
