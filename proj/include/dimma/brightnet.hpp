#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "dimma/image.hpp"

namespace dimma {

inline constexpr int kNetInputChannels = 10;
inline constexpr int kPadMultiple = 8;
inline constexpr double kEmbedScale = 1000.0;

// Lightness-conditioned residual UNet. Four resolution levels (three
// downsample and three upsample stages) with one same-resolution stage per
// level; every stage holds blocks_per_stage residual blocks and the lowest
// level adds multi-head self-attention.
struct NetConfig {
  int base_channels = 64;
  std::vector<int> channel_mult{1, 2, 4, 4};
  int blocks_per_stage = 2;
  int attention_heads = 64;
  bool use_attention = true;
  bool use_norm = true;
  int embed_dim = 256;
  bool zero_init_output = false;
  std::uint64_t seed = 0;

  static NetConfig full();
  // base 16; heads scaled with width (16 heads over 64 bottleneck channels).
  static NetConfig toy();

  int level_channels(int level) const { return base_channels * channel_mult.at(static_cast<std::size_t>(level)); }
  // Throws Error(kInvalidConfig).
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Raw sinusoidal features [sin(dm w_i) ..., cos(dm w_i) ...] with
// w_i = 1000 * 10000^(-2i / dim). dim must be even.
std::vector<float> embed_lightness(double delta_m, int embed_dim);

// [dark | hist_equalize(dark) | reflectance / 3 | illumination], H x W x 10.
Field assemble_input(const Image& dark);

struct EnhanceResult {
  Image output;    // clamp(dark + residual, 0, 1)
  Field residual;  // H x W x 3, sigmoid output
};

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

class BrightNet {
 public:
  explicit BrightNet(const NetConfig& config = NetConfig::toy());
  BrightNet(const BrightNet& other);
  BrightNet& operator=(const BrightNet& other);
  BrightNet(BrightNet&&) noexcept;
  BrightNet& operator=(BrightNet&&) noexcept;
  ~BrightNet();

  const NetConfig& config() const;

  // Reflect-pads to a multiple of 8, runs the net, crops back.
  EnhanceResult enhance(const Image& dark, double delta_m) const;

  std::size_t parameter_count() const;
  std::vector<NamedTensor> parameters() const;

  // "DIMMA-UNET\0", u32 version, config echo, then per tensor: name, shape and
  // little-endian float32 values in registration order.
  void write(std::ostream& out) const;
  static BrightNet read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static BrightNet load(const std::filesystem::path& path);

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  explicit BrightNet(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

inline BrightNet build_unet(const NetConfig& config) { return BrightNet(config); }

}  // namespace dimma
