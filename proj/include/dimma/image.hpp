#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dimma {

// Dense H x W x C float field, interleaved (HWC). Used for images,
// reflectance maps (C = 3) and illumination maps (C = 1).
class Field {
 public:
  Field() = default;
  Field(int height, int width, int channels, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  bool same_shape(const Field& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_extent(const Field& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// An sRGB image with every element in [0, 1] and exactly three channels.
// The invariant is checked on construction; the pixels are immutable
// afterwards.
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f);

  // Throws Error(kRange) when an element is outside [0, 1] or not finite,
  // Error(kShapeMismatch) when the field does not have three channels.
  static Image from_field(Field field);
  // Clamps into [0, 1] (NaN becomes 0).
  static Image clamped(Field field);

  int height() const noexcept { return pixels_.height(); }
  int width() const noexcept { return pixels_.width(); }
  std::size_t pixel_count() const noexcept { return pixels_.pixel_count(); }
  float at(int y, int x, int c) const { return pixels_.at(y, x, c); }
  const Field& field() const noexcept { return pixels_; }
  std::span<const float> values() const noexcept { return pixels_.values(); }
  bool empty() const noexcept { return pixels_.empty(); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  explicit Image(Field field) : pixels_(std::move(field)) {}
  Field pixels_;
};

struct ImagePair {
  Image light;
  Image dark;
};

// Round-half-up 8-bit quantization, clamped to [0, 255].
std::uint8_t quantize_u8(double value) noexcept;

// Snaps every element to the nearest 8-bit level (value = q / 255).
Image quantize(const Image& img);

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

bool has_image_extension(const std::filesystem::path& path);

// Per-channel classical histogram equalization of the 8-bit quantization.
Image hist_equalize(const Image& img);

// Spatial mean of the per-pixel channel mean.
double mean_lightness(const Image& img);

Image crop(const Image& img, int top, int left, int height, int width);
Image flip_horizontal(const Image& img);
// Reflect padding (edge-excluded mirror, repeated as often as needed) on the
// bottom/right up to the requested size.
Image pad_reflect(const Image& img, int height, int width);

}  // namespace dimma
