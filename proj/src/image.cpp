#include "dimma/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dimma/errors.hpp"

namespace dimma {

namespace fs = std::filesystem;

Field::Field(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw Error(ErrorCode::kShapeMismatch, "negative field dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                   static_cast<std::size_t>(channels),
               fill);
}

Image::Image(int height, int width, float fill) : pixels_(height, width, 3, fill) {
  if (height < 1 || width < 1) throw Error(ErrorCode::kShapeMismatch, "image must be at least 1x1");
  if (!(fill >= 0.0f && fill <= 1.0f)) throw Error(ErrorCode::kRange, "fill value outside [0,1]");
}

Image Image::from_field(Field field) {
  if (field.channels() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "image needs 3 channels, got " + std::to_string(field.channels()));
  }
  if (field.height() < 1 || field.width() < 1) {
    throw Error(ErrorCode::kShapeMismatch, "image must be at least 1x1");
  }
  for (std::size_t i = 0; i < field.size(); ++i) {
    const float v = field[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::kRange, "element " + std::to_string(i) + " = " +
                                         std::to_string(v) + " outside [0,1]");
    }
  }
  return Image(std::move(field));
}

Image Image::clamped(Field field) {
  for (float& v : field.values()) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  return from_field(std::move(field));
}

std::uint8_t quantize_u8(double value) noexcept {
  if (!(value > 0.0)) return 0;
  const double q = std::floor(value * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::min(q, 255.0));
}

Image quantize(const Image& img) {
  Field out = img.field();
  for (float& v : out.values()) v = static_cast<float>(quantize_u8(v)) / 255.0f;
  return Image::from_field(std::move(out));
}

namespace {

enum class Magic { kPng, kJpeg, kOther };

Magic sniff(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 8> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  const auto n = in.gcount();
  static constexpr std::array<unsigned char, 8> kPng = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (n == 8 && head == kPng) return Magic::kPng;
  if (n >= 3 && head[0] == 0xff && head[1] == 0xd8 && head[2] == 0xff) return Magic::kJpeg;
  return Magic::kOther;
}

}  // namespace

bool has_image_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image load_image(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorCode::kFileNotFound, path.string());
  }
  if (sniff(path) == Magic::kOther) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + " is neither PNG nor JPEG");
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error(ErrorCode::kUnsupportedFormat, "cannot decode " + path.string());
  if (raw.depth() != CV_8U) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + " is not 8-bit");
  }
  if (raw.channels() != 3 && raw.channels() != 4) {
    throw Error(ErrorCode::kUnsupportedFormat,
                path.string() + " has " + std::to_string(raw.channels()) + " channels");
  }
  const int h = raw.rows;
  const int w = raw.cols;
  const int cn = raw.channels();
  Field f(h, w, 3);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      // OpenCV decodes to BGR(A).
      const std::uint8_t* px = row + static_cast<std::ptrdiff_t>(x) * cn;
      f.at(y, x, 0) = static_cast<float>(px[2]) / 255.0f;
      f.at(y, x, 1) = static_cast<float>(px[1]) / 255.0f;
      f.at(y, x, 2) = static_cast<float>(px[0]) / 255.0f;
    }
  }
  return Image::from_field(std::move(f));
}

void save_image(const Image& img, const fs::path& path) {
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw Error(ErrorCode::kIO, "parent directory does not exist: " + parent.string());
  }
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      row[3 * x + 0] = quantize_u8(img.at(y, x, 2));
      row[3 * x + 1] = quantize_u8(img.at(y, x, 1));
      row[3 * x + 2] = quantize_u8(img.at(y, x, 0));
    }
  }
  std::vector<std::uint8_t> bytes;
  try {
    if (!cv::imencode(".png", mat, bytes)) throw Error(ErrorCode::kIO, "PNG encode failed");
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kIO, e.what());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
}

Image hist_equalize(const Image& img) {
  const std::size_t n = img.pixel_count();
  Field out(img.height(), img.width(), 3);
  const auto src = img.values();
  for (int c = 0; c < 3; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < n; ++i) ++hist[quantize_u8(src[i * 3 + c])];
    std::array<std::size_t, 256> cdf{};
    std::size_t running = 0;
    std::size_t cdf_min = 0;
    for (int k = 0; k < 256; ++k) {
      running += hist[k];
      cdf[k] = running;
      if (cdf_min == 0 && running > 0) cdf_min = running;
    }
    const double denom = static_cast<double>(n - cdf_min);
    std::array<float, 256> lut{};
    for (int k = 0; k < 256; ++k) {
      lut[k] = denom > 0.0 && cdf[k] >= cdf_min
                   ? static_cast<float>(static_cast<double>(cdf[k] - cdf_min) / denom)
                   : 0.0f;
    }
    for (std::size_t i = 0; i < n; ++i) out[i * 3 + c] = lut[quantize_u8(src[i * 3 + c])];
  }
  return Image::from_field(std::move(out));
}

double mean_lightness(const Image& img) {
  const auto v = img.values();
  double sum = 0.0;
  for (float x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

Image crop(const Image& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height() ||
      left + width > img.width()) {
    throw Error(ErrorCode::kShapeMismatch, "crop window outside image");
  }
  Field out(height, width, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
  return Image::from_field(std::move(out));
}

Image flip_horizontal(const Image& img) {
  Field out(img.height(), img.width(), 3);
  const int w = img.width();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, w - 1 - x, c);
  return Image::from_field(std::move(out));
}

namespace {

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Image pad_reflect(const Image& img, int height, int width) {
  height = std::max(height, img.height());
  width = std::max(width, img.width());
  Field out(height, width, 3);
  for (int y = 0; y < height; ++y) {
    const int sy = mirror_index(y, img.height());
    for (int x = 0; x < width; ++x) {
      const int sx = mirror_index(x, img.width());
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return Image::from_field(std::move(out));
}

}  // namespace dimma
