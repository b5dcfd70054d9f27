#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dimma::testing {

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "dimma-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Image random_image(Rng& rng, int height, int width, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  Field f(height, width, 3);
  for (auto& v : f.values()) v = u(rng);
  return Image::from_field(std::move(f));
}

Image smooth_scene(Rng& rng, int height, int width) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Blob {
    double cy, cx, radius, color[3];
  };
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    b.cy = u(rng) * height;
    b.cx = u(rng) * width;
    b.radius = (0.15 + 0.35 * u(rng)) * std::max(height, width);
    for (double& c : b.color) c = u(rng) - 0.5;
  }
  double base[3];
  for (double& c : base) c = 0.25 + 0.5 * u(rng);
  const double gy = u(rng) - 0.5;
  const double gx = u(rng) - 0.5;
  const double fy = 2.0 * std::numbers::pi * (1.0 + 4.0 * u(rng)) / height;
  const double fx = 2.0 * std::numbers::pi * (1.0 + 4.0 * u(rng)) / width;
  Field f(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double ramp = 0.5 * (gy * y / height + gx * x / width);
      const double ripple = 0.06 * std::sin(fy * y) * std::cos(fx * x);
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + ramp + ripple * (c + 1) / 3.0;
        for (const auto& b : blobs) {
          const double d2 = ((y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx)) / (b.radius * b.radius);
          v += 0.6 * b.color[c] * std::exp(-d2);
        }
        f.at(y, x, c) = static_cast<float>(std::clamp(v, 0.05, 0.95));
      }
    }
  }
  return Image::from_field(std::move(f));
}

Image periodic_texture(Rng& rng, int height, int width, int period) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double phase[3][4];
  for (auto& row : phase)
    for (double& p : row) p = 2.0 * std::numbers::pi * u(rng);
  const double w = 2.0 * std::numbers::pi / period;
  Field f(height, width, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = 0.45 + 0.2 * std::sin(w * x + phase[c][0]) * std::cos(w * y + phase[c][1]) +
                         0.1 * std::sin(2 * w * (x + y) + phase[c][2]) + 0.08 * std::cos(3 * w * y + phase[c][3]);
        f.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return Image::from_field(std::move(f));
}

ImagePair camera_pair(const Image& light, const CameraModel& camera, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Field f(light.height(), light.width(), 3);
  for (int y = 0; y < light.height(); ++y) {
    for (int x = 0; x < light.width(); ++x) {
      const double l = (static_cast<double>(light.at(y, x, 0)) + light.at(y, x, 1) + light.at(y, x, 2)) / 3.0;
      for (int c = 0; c < 3; ++c) {
        const double r = l > 0.0 ? light.at(y, x, c) / l : 1.0;
        double v = (r + camera.offset[c]) * camera.ratio * l;
        if (camera.noise > 0.0) v += camera.noise * n(rng);
        f.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  Image dark = Image::from_field(std::move(f));
  if (camera.quantize) return {quantize(light), quantize(dark)};
  return {light, dark};
}

Image scale(const Image& img, double c) {
  Field f = img.field();
  for (auto& v : f.values()) v = static_cast<float>(v * c);
  return Image::clamped(std::move(f));
}

double max_abs_diff(const Field& a, const Field& b) {
  if (a.size() != b.size()) throw std::runtime_error("size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

double max_abs_diff(const Image& a, const Image& b) { return max_abs_diff(a.field(), b.field()); }

void write_png(const std::filesystem::path& dir, const std::string& name, const Image& img) {
  std::filesystem::create_directories(dir);
  save_image(img, dir / name);
}

}  // namespace dimma::testing
