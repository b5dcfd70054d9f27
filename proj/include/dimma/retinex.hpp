#pragma once

#include "dimma/image.hpp"

namespace dimma {

inline constexpr double kRetinexEpsilon = 1e-4;

// reflectance: H x W x 3, illumination: H x W x 1.
struct RetinexPair {
  Field reflectance;
  Field illumination;
};

// L = channel mean + epsilon, R = I / L. Total for epsilon > 0; the product
// R * L reproduces the input.
RetinexPair decompose(const Image& img, double epsilon = kRetinexEpsilon);

// clamp(R * L, 0, 1). Throws Error(kShapeMismatch).
Image recompose(const RetinexPair& pair);
Image recompose(const Field& reflectance, const Field& illumination);

}  // namespace dimma
