#pragma once

// libtorch modules behind BrightNet. Internal: included by the trainer and
// by tests, not part of the installed interface.

#include <span>
#include <vector>

#include <torch/torch.h>

#include "dimma/brightnet.hpp"

namespace dimma::detail {

struct ResBlockImpl : torch::nn::Module {
  ResBlockImpl(int in_channels, int out_channels, int embed_dim, bool use_norm);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

  torch::nn::AnyModule norm1, norm2;
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  torch::nn::Linear emb_proj{nullptr};
};
TORCH_MODULE(ResBlock);

struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int channels, int heads, bool use_norm);
  torch::Tensor forward(const torch::Tensor& x);

  int heads;
  torch::nn::AnyModule norm;
  torch::nn::Conv2d qkv{nullptr}, proj{nullptr};
};
TORCH_MODULE(Attention);

// A run of residual blocks at one resolution, optionally preceded by a
// stride-2 downsample or a nearest-neighbour upsample (with skip concat).
struct StageImpl : torch::nn::Module {
  enum class Kind { kSame, kDown, kUp };
  StageImpl(Kind kind, int in_channels, int skip_channels, int out_channels, const NetConfig& cfg,
            bool attention);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& emb, const torch::Tensor& skip = {});

  Kind kind;
  torch::nn::Conv2d resample{nullptr};
  torch::nn::ModuleList blocks;
  Attention attention{nullptr};
};
TORCH_MODULE(Stage);

struct UNetImpl : torch::nn::Module {
  explicit UNetImpl(const NetConfig& cfg);
  // x: [B, 10, H, W] with H, W multiples of 8; features: [B, embed_dim] raw
  // sinusoidal features. Returns pre-sigmoid residual logits [B, 3, H, W].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& features);

  torch::nn::Sequential embed_mlp{nullptr};
  torch::nn::Conv2d conv_in{nullptr}, conv_out{nullptr};
  torch::nn::AnyModule norm_out;
  std::vector<Stage> same, down, up;
};
TORCH_MODULE(UNet);

// [B, 3, H, W] float tensor of an image batch.
torch::Tensor image_tensor(std::span<const Image> images);
// [B, 10, H, W] assembled network input.
torch::Tensor input_tensor(std::span<const Image> darks);
torch::Tensor lightness_features(std::span<const double> delta_m, int embed_dim);
// Pads [B, C, H, W] on the bottom/right by mirroring up to multiples of 8.
torch::Tensor pad_to_multiple(const torch::Tensor& x, int multiple);
Image image_from_tensor(const torch::Tensor& chw);

}  // namespace dimma::detail

namespace dimma {

struct BrightNet::Impl {
  NetConfig config;
  detail::UNet net{nullptr};
};

}  // namespace dimma
