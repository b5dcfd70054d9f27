#include "dimma/brightnet.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include "binary_io.hpp"
#include "brightnet_module.hpp"
#include "dimma/errors.hpp"
#include "dimma/retinex.hpp"

namespace dimma {

namespace F = torch::nn::functional;

namespace {

constexpr char kMagic[] = "DIMMA-UNET";  // written with its terminating NUL
constexpr std::uint32_t kFormatVersion = 1;

int group_count(int channels) {
  int groups = std::min(32, std::max(1, channels / 4));
  while (channels % groups != 0) --groups;
  return groups;
}

torch::nn::AnyModule make_norm(int channels, bool use_norm) {
  if (use_norm) return torch::nn::AnyModule(torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(channels), channels)));
  return torch::nn::AnyModule(torch::nn::Identity());
}

torch::nn::Conv2d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Conv2d pointwise(int in, int out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)); }

// Module construction draws from torch's global generator.
std::mutex& init_mutex() {
  static std::mutex m;
  return m;
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

namespace detail {

ResBlockImpl::ResBlockImpl(int in_channels, int out_channels, int embed_dim, bool use_norm)
    : norm1(make_norm(in_channels, use_norm)), norm2(make_norm(out_channels, use_norm)) {
  register_module("norm1", norm1.ptr());
  conv1 = register_module("conv1", conv3(in_channels, out_channels));
  emb_proj = register_module("emb_proj", torch::nn::Linear(embed_dim, out_channels));
  register_module("norm2", norm2.ptr());
  conv2 = register_module("conv2", conv3(out_channels, out_channels));
  if (in_channels != out_channels) skip = register_module("skip", pointwise(in_channels, out_channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
  auto h = conv1->forward(F::silu(norm1.forward(x)));
  h = h + emb_proj->forward(F::silu(emb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2->forward(F::silu(norm2.forward(h)));
  return (skip ? skip->forward(x) : x) + h;
}

AttentionImpl::AttentionImpl(int channels, int heads_, bool use_norm)
    : heads(heads_), norm(make_norm(channels, use_norm)) {
  register_module("norm", norm.ptr());
  qkv = register_module("qkv", pointwise(channels, 3 * channels));
  proj = register_module("proj", pointwise(channels, channels));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0);
  const auto c = x.size(1);
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto head_dim = c / heads;
  auto qkv_t = qkv->forward(norm.forward(x)).reshape({b, 3, heads, head_dim, h * w});
  auto q = qkv_t.select(1, 0).transpose(-1, -2);  // [B, heads, HW, d]
  auto k = qkv_t.select(1, 1);                    // [B, heads, d, HW]
  auto v = qkv_t.select(1, 2).transpose(-1, -2);
  auto attn = torch::softmax(torch::matmul(q, k) / std::sqrt(static_cast<double>(head_dim)), -1);
  auto out = torch::matmul(attn, v).transpose(-1, -2).reshape({b, c, h, w});
  return x + proj->forward(out);
}

StageImpl::StageImpl(Kind kind_, int in_channels, int skip_channels, int out_channels, const NetConfig& cfg,
                     bool with_attention)
    : kind(kind_) {
  if (kind == Kind::kDown) resample = register_module("downsample", conv3(in_channels, in_channels, 2));
  if (kind == Kind::kUp) resample = register_module("upsample", conv3(in_channels, in_channels));
  int c = in_channels + (kind == Kind::kUp ? skip_channels : 0);
  for (int i = 0; i < cfg.blocks_per_stage; ++i) {
    blocks->push_back(ResBlock(c, out_channels, cfg.embed_dim, cfg.use_norm));
    c = out_channels;
  }
  register_module("blocks", blocks);
  if (with_attention) attention = register_module("attention", Attention(out_channels, cfg.attention_heads, cfg.use_norm));
}

torch::Tensor StageImpl::forward(torch::Tensor x, const torch::Tensor& emb, const torch::Tensor& skip) {
  if (kind == Kind::kDown) x = resample->forward(x);
  if (kind == Kind::kUp) {
    x = F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    x = resample->forward(x);
    x = torch::cat({x, skip}, 1);
  }
  for (std::size_t i = 0; i < blocks->size(); ++i) {
    x = blocks[i]->as<ResBlock>()->forward(x, emb);
    // Attention sits after the first residual block of the stage.
    if (i == 0 && attention) x = attention->forward(x);
  }
  return x;
}

UNetImpl::UNetImpl(const NetConfig& cfg) : norm_out(make_norm(cfg.base_channels, cfg.use_norm)) {
  const int levels = static_cast<int>(cfg.channel_mult.size());
  embed_mlp = register_module(
      "embed_mlp", torch::nn::Sequential(torch::nn::Linear(cfg.embed_dim, cfg.embed_dim), torch::nn::SiLU(),
                                         torch::nn::Linear(cfg.embed_dim, cfg.embed_dim)));
  conv_in = register_module("conv_in", conv3(kNetInputChannels, cfg.level_channels(0)));
  using Kind = StageImpl::Kind;
  for (int l = 0; l < levels; ++l) {
    const int c = cfg.level_channels(l);
    if (l > 0) {
      down.push_back(register_module("down" + std::to_string(l),
                                     Stage(Kind::kDown, cfg.level_channels(l - 1), 0, c, cfg, false)));
    }
    const bool bottom = l == levels - 1;
    same.push_back(register_module("same" + std::to_string(l), Stage(Kind::kSame, c, 0, c, cfg, bottom && cfg.use_attention)));
  }
  for (int l = levels - 1; l > 0; --l) {
    up.push_back(register_module("up" + std::to_string(l),
                                 Stage(Kind::kUp, cfg.level_channels(l), cfg.level_channels(l - 1),
                                       cfg.level_channels(l - 1), cfg, false)));
  }
  register_module("norm_out", norm_out.ptr());
  conv_out = register_module("conv_out", conv3(cfg.level_channels(0), 3));
  if (cfg.zero_init_output) {
    torch::NoGradGuard guard;
    conv_out->weight.zero_();
    conv_out->bias.zero_();
  }
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x, const torch::Tensor& features) {
  const auto emb = embed_mlp->forward(features);
  auto h = conv_in->forward(x);
  std::vector<torch::Tensor> skips;
  for (std::size_t l = 0; l < same.size(); ++l) {
    if (l > 0) h = down[l - 1]->forward(h, emb);
    h = same[l]->forward(h, emb);
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < up.size(); ++i) {
    const std::size_t skip_level = same.size() - 2 - i;
    h = up[i]->forward(h, emb, skips[skip_level]);
  }
  return conv_out->forward(F::silu(norm_out.forward(h)));
}

torch::Tensor image_tensor(std::span<const Image> images) {
  const auto b = static_cast<std::int64_t>(images.size());
  const int h = images.front().height();
  const int w = images.front().width();
  auto t = torch::empty({b, 3, h, w}, torch::kFloat32);
  auto acc = t.accessor<float, 4>();
  for (std::int64_t i = 0; i < b; ++i) {
    const Image& img = images[static_cast<std::size_t>(i)];
    if (img.height() != h || img.width() != w) throw Error(ErrorCode::kShapeMismatch, "batch images differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) acc[i][c][y][x] = img.at(y, x, c);
  }
  return t;
}

torch::Tensor input_tensor(std::span<const Image> darks) {
  const auto b = static_cast<std::int64_t>(darks.size());
  const int h = darks.front().height();
  const int w = darks.front().width();
  auto t = torch::empty({b, kNetInputChannels, h, w}, torch::kFloat32);
  auto acc = t.accessor<float, 4>();
  for (std::int64_t i = 0; i < b; ++i) {
    const Image& img = darks[static_cast<std::size_t>(i)];
    if (img.height() != h || img.width() != w) throw Error(ErrorCode::kShapeMismatch, "batch images differ in size");
    const Field f = assemble_input(img);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < kNetInputChannels; ++c) acc[i][c][y][x] = f.at(y, x, c);
  }
  return t;
}

torch::Tensor lightness_features(std::span<const double> delta_m, int embed_dim) {
  auto t = torch::empty({static_cast<std::int64_t>(delta_m.size()), embed_dim}, torch::kFloat32);
  for (std::size_t i = 0; i < delta_m.size(); ++i) {
    const auto f = embed_lightness(delta_m[i], embed_dim);
    std::copy(f.begin(), f.end(), t[static_cast<std::int64_t>(i)].data_ptr<float>());
  }
  return t;
}

torch::Tensor pad_to_multiple(const torch::Tensor& x, int multiple) {
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto ph = (h + multiple - 1) / multiple * multiple;
  const auto pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return x;
  std::vector<std::int64_t> rows(static_cast<std::size_t>(ph));
  std::vector<std::int64_t> cols(static_cast<std::size_t>(pw));
  for (std::int64_t i = 0; i < ph; ++i) rows[static_cast<std::size_t>(i)] = mirror(static_cast<int>(i), static_cast<int>(h));
  for (std::int64_t i = 0; i < pw; ++i) cols[static_cast<std::size_t>(i)] = mirror(static_cast<int>(i), static_cast<int>(w));
  const auto ri = torch::tensor(rows, torch::kLong);
  const auto ci = torch::tensor(cols, torch::kLong);
  return x.index_select(2, ri).index_select(3, ci);
}

Image image_from_tensor(const torch::Tensor& chw) {
  const auto t = chw.contiguous().to(torch::kFloat32);
  const int h = static_cast<int>(t.size(1));
  const int w = static_cast<int>(t.size(2));
  auto acc = t.accessor<float, 3>();
  Field f(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = acc[c][y][x];
  return Image::clamped(std::move(f));
}

}  // namespace detail

NetConfig NetConfig::full() { return NetConfig{}; }

NetConfig NetConfig::toy() {
  NetConfig c;
  c.base_channels = 16;
  c.attention_heads = 16;
  return c;
}

void NetConfig::validate() const {
  if (base_channels < 1) throw Error(ErrorCode::kInvalidConfig, "base_channels must be positive");
  if (channel_mult.size() != 4) {
    throw Error(ErrorCode::kInvalidConfig, "channel_mult needs 4 levels (3 downsamples)");
  }
  for (int m : channel_mult) {
    if (m < 1) throw Error(ErrorCode::kInvalidConfig, "channel multipliers must be positive");
  }
  if (blocks_per_stage < 1) throw Error(ErrorCode::kInvalidConfig, "blocks_per_stage must be positive");
  if (embed_dim < 2 || embed_dim % 2 != 0) throw Error(ErrorCode::kInvalidConfig, "embed_dim must be even");
  if (use_attention) {
    const int c = level_channels(3);
    if (attention_heads < 1 || c % attention_heads != 0) {
      throw Error(ErrorCode::kInvalidConfig, "attention heads must divide the bottleneck width " + std::to_string(c));
    }
  }
}

std::vector<float> embed_lightness(double delta_m, int embed_dim) {
  if (embed_dim < 2 || embed_dim % 2 != 0) throw Error(ErrorCode::kInvalidConfig, "embed_dim must be even");
  const int half = embed_dim / 2;
  std::vector<float> out(static_cast<std::size_t>(embed_dim));
  for (int i = 0; i < half; ++i) {
    const double omega = kEmbedScale * std::pow(10000.0, -2.0 * i / embed_dim);
    out[static_cast<std::size_t>(i)] = static_cast<float>(std::sin(delta_m * omega));
    out[static_cast<std::size_t>(half + i)] = static_cast<float>(std::cos(delta_m * omega));
  }
  return out;
}

Field assemble_input(const Image& dark) {
  const Image eq = hist_equalize(dark);
  const RetinexPair rl = decompose(dark);
  Field out(dark.height(), dark.width(), kNetInputChannels);
  for (std::size_t i = 0; i < dark.pixel_count(); ++i) {
    float* px = &out[i * kNetInputChannels];
    for (std::size_t c = 0; c < 3; ++c) {
      px[c] = dark.values()[3 * i + c];
      px[3 + c] = eq.values()[3 * i + c];
      px[6 + c] = rl.reflectance[3 * i + c] / 3.0f;
    }
    px[9] = rl.illumination[i];
  }
  return out;
}

BrightNet::BrightNet(const NetConfig& config) : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = config;
  std::lock_guard lock(init_mutex());
  torch::manual_seed(config.seed);
  impl_->net = detail::UNet(config);
  impl_->net->eval();
}

BrightNet::BrightNet(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

BrightNet::BrightNet(const BrightNet& other) : impl_(nullptr) {
  std::stringstream buf;
  other.write(buf);
  *this = read(buf);
}

BrightNet& BrightNet::operator=(const BrightNet& other) {
  if (this != &other) {
    BrightNet copy(other);
    impl_ = std::move(copy.impl_);
  }
  return *this;
}

BrightNet::BrightNet(BrightNet&&) noexcept = default;
BrightNet& BrightNet::operator=(BrightNet&&) noexcept = default;
BrightNet::~BrightNet() = default;

const NetConfig& BrightNet::config() const { return impl_->config; }

EnhanceResult BrightNet::enhance(const Image& dark, double delta_m) const {
  torch::InferenceMode guard;
  const int h = dark.height();
  const int w = dark.width();
  const Image batch[] = {dark};
  const double dm[] = {delta_m};
  auto x = detail::pad_to_multiple(detail::input_tensor(batch), kPadMultiple);
  auto logits = impl_->net->forward(x, detail::lightness_features(dm, impl_->config.embed_dim));
  auto residual = torch::sigmoid(logits.slice(2, 0, h).slice(3, 0, w))[0].contiguous();

  EnhanceResult out;
  out.residual = Field(h, w, 3);
  Field sum(h, w, 3);
  auto acc = residual.accessor<float, 3>();
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < 3; ++c) {
        const float r = acc[c][y][xx];
        out.residual.at(y, xx, c) = r;
        sum.at(y, xx, c) = dark.at(y, xx, c) + r;
      }
  out.output = Image::clamped(std::move(sum));
  return out;
}

std::size_t BrightNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : impl_->net->parameters()) n += static_cast<std::size_t>(p.numel());
  return n;
}

std::vector<NamedTensor> BrightNet::parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& item : impl_->net->named_parameters()) {
    const auto t = item.value().detach().contiguous().to(torch::kFloat32);
    NamedTensor nt;
    nt.name = item.key();
    nt.shape.assign(t.sizes().begin(), t.sizes().end());
    nt.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    out.push_back(std::move(nt));
  }
  return out;
}

void BrightNet::write(std::ostream& out) const {
  const NetConfig& c = impl_->config;
  binio::put_bytes(out, std::string_view(kMagic, sizeof kMagic));
  binio::put<std::uint32_t>(out, kFormatVersion);
  binio::put<std::int32_t>(out, c.base_channels);
  binio::put<std::int32_t>(out, static_cast<std::int32_t>(c.channel_mult.size()));
  for (int m : c.channel_mult) binio::put<std::int32_t>(out, m);
  binio::put<std::int32_t>(out, c.blocks_per_stage);
  binio::put<std::int32_t>(out, c.attention_heads);
  binio::put<std::uint8_t>(out, c.use_attention ? 1 : 0);
  binio::put<std::uint8_t>(out, c.use_norm ? 1 : 0);
  binio::put<std::int32_t>(out, c.embed_dim);
  binio::put<std::uint8_t>(out, c.zero_init_output ? 1 : 0);
  binio::put<std::uint64_t>(out, c.seed);
  const auto params = parameters();
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    binio::put_string(out, p.name);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) binio::put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.values.data()), static_cast<std::streamsize>(p.values.size() * sizeof(float)));
  }
}

BrightNet BrightNet::read(std::istream& in) {
  binio::expect_bytes(in, std::string_view(kMagic, sizeof kMagic), "UNet checkpoint");
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kFormat, "unsupported UNet checkpoint version " + std::to_string(version));
  }
  NetConfig c;
  c.base_channels = binio::get<std::int32_t>(in);
  const auto levels = binio::get<std::int32_t>(in);
  if (levels < 1 || levels > 16) throw Error(ErrorCode::kFormat, "implausible level count");
  c.channel_mult.resize(static_cast<std::size_t>(levels));
  for (int& m : c.channel_mult) m = binio::get<std::int32_t>(in);
  c.blocks_per_stage = binio::get<std::int32_t>(in);
  c.attention_heads = binio::get<std::int32_t>(in);
  c.use_attention = binio::get<std::uint8_t>(in) != 0;
  c.use_norm = binio::get<std::uint8_t>(in) != 0;
  c.embed_dim = binio::get<std::int32_t>(in);
  c.zero_init_output = binio::get<std::uint8_t>(in) != 0;
  c.seed = binio::get<std::uint64_t>(in);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kFormat, std::string("UNet checkpoint config: ") + e.what());
  }
  auto impl = std::make_unique<Impl>();
  impl->config = c;
  impl->net = detail::UNet(c);
  impl->net->eval();

  auto named = impl->net->named_parameters();
  const auto count = binio::get<std::uint32_t>(in);
  if (count != named.size()) throw Error(ErrorCode::kFormat, "UNet checkpoint tensor count mismatch");
  torch::NoGradGuard guard;
  for (auto& item : named) {
    const std::string name = binio::get_string(in);
    if (name != item.key()) throw Error(ErrorCode::kFormat, "unexpected tensor " + name + ", wanted " + item.key());
    const auto ndim = binio::get<std::uint32_t>(in);
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) d = binio::get<std::int64_t>(in);
    auto& target = item.value();
    if (torch::IntArrayRef(shape) != target.sizes()) throw Error(ErrorCode::kFormat, "shape mismatch for " + name);
    auto buf = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(buf.data_ptr<float>()), static_cast<std::streamsize>(buf.numel() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kFormat, "UNet checkpoint truncated");
    target.copy_(buf);
  }
  return BrightNet(std::move(impl));
}

void BrightNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
  write(out);
  if (!out) throw Error(ErrorCode::kIO, "write failed: " + path.string());
}

BrightNet BrightNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  return read(in);
}

}  // namespace dimma
