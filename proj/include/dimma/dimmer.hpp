#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dimma/illumstats.hpp"
#include "dimma/image.hpp"
#include "dimma/mdn.hpp"
#include "dimma/seed.hpp"

namespace dimma {

struct DimmedSample {
  Image dark;
  Field dark_reflectance;    // H x W x 3
  Field dark_illumination;   // H x W x 1
  double delta_m = 0.0;      // mean_lightness(light) - mean_lightness(dark)
  double gamma_used = 1.0;
};

// Decompose, draw gamma, dim the illumination, distort the reflectance with
// the MDN, recompose. Every call consumes fresh randomness from rng.
DimmedSample dim_image(const Image& light, const MDNParams& mdn, const IlluminationStats& stats,
                       const DimConfig& config, Rng& rng);

struct CorpusImage {
  std::string name;  // output file stem
  std::filesystem::path source;
  Image image;
};

struct DimRecord {
  std::filesystem::path dark_path;
  std::filesystem::path light_path;
  double delta_m = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

// Writes <name>.png and <name>.json per input plus manifest.txt into out_dir.
// Image i is dimmed with seed (config.seed ^ i). The dark image is snapped to
// the 8-bit grid before delta_m is computed so the sidecar matches the file.
std::vector<DimRecord> dim_corpus(std::span<const CorpusImage> corpus, const MDNParams& mdn,
                                  const IlluminationStats& stats, const DimConfig& config,
                                  const std::filesystem::path& out_dir);

// Manifest lines: "dark_path light_path delta_m gamma seed".
void write_dim_manifest(std::span<const DimRecord> records, const std::filesystem::path& path);
std::vector<DimRecord> read_dim_manifest(const std::filesystem::path& path);

}  // namespace dimma
