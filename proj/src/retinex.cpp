#include "dimma/retinex.hpp"

#include <algorithm>

#include "dimma/errors.hpp"

namespace dimma {

RetinexPair decompose(const Image& img, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kRange, "retinex epsilon must be positive");
  RetinexPair out{Field(img.height(), img.width(), 3), Field(img.height(), img.width(), 1)};
  const auto src = img.values();
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = src[3 * i];
    const double g = src[3 * i + 1];
    const double b = src[3 * i + 2];
    const float l = static_cast<float>((r + g + b) / 3.0 + epsilon);
    out.illumination[i] = l;
    out.reflectance[3 * i] = static_cast<float>(r / l);
    out.reflectance[3 * i + 1] = static_cast<float>(g / l);
    out.reflectance[3 * i + 2] = static_cast<float>(b / l);
  }
  return out;
}

Image recompose(const Field& reflectance, const Field& illumination) {
  if (reflectance.channels() != 3 || illumination.channels() != 1 ||
      !reflectance.same_extent(illumination)) {
    throw Error(ErrorCode::kShapeMismatch, "reflectance/illumination shapes differ");
  }
  Field out(reflectance.height(), reflectance.width(), 3);
  const std::size_t n = reflectance.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double l = illumination[i];
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = static_cast<double>(reflectance[3 * i + c]) * l;
      out[3 * i + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return Image::from_field(std::move(out));
}

Image recompose(const RetinexPair& pair) { return recompose(pair.reflectance, pair.illumination); }

}  // namespace dimma
