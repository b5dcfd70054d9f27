#pragma once

#include <filesystem>
#include <string>

#include "dimma/image.hpp"
#include "dimma/seed.hpp"

namespace dimma::testing {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Uniform noise in [lo, hi].
Image random_image(Rng& rng, int height, int width, float lo = 0.0f, float hi = 1.0f);

// Smooth blobs and gradients in roughly [0.05, 0.95]; a stand-in for a photo.
Image smooth_scene(Rng& rng, int height, int width);

// Tileable texture with the given period on both axes.
Image periodic_texture(Rng& rng, int height, int width, int period);

// A known "camera": dark = clamp((R + offset) * ratio * L + noise), where
// (R, L) is the exact channel-mean decomposition of light.
struct CameraModel {
  double ratio = 0.3;
  double offset[3] = {0.05, -0.025, -0.025};
  double noise = 0.0;
  bool quantize = false;
};
ImagePair camera_pair(const Image& light, const CameraModel& camera, Rng& rng);

Image scale(const Image& img, double c);

double max_abs_diff(const Field& a, const Field& b);
double max_abs_diff(const Image& a, const Image& b);

// Writes img as <dir>/<name>, creating dir.
void write_png(const std::filesystem::path& dir, const std::string& name, const Image& img);

}  // namespace dimma::testing
