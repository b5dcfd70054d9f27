#include "dimma/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>

#include <torch/script.h>

#include "brightnet_module.hpp"
#include "dimma/dimmer.hpp"
#include "dimma/errors.hpp"
#include "dimma/metrics.hpp"
#include "dimma/seed.hpp"
#include "parallel.hpp"

namespace dimma {

namespace {

class Extractor {
 public:
  explicit Extractor(const LossConfig& config) {
    if (config.feature_extractor.empty() || config.lambda == 0.0) return;
    try {
      module_ = torch::jit::load(config.feature_extractor);
    } catch (const c10::Error& e) {
      throw Error(ErrorCode::kIO, "cannot load feature extractor " + config.feature_extractor);
    }
    module_->eval();
    for (auto p : module_->parameters()) p.set_requires_grad(false);
  }

  bool enabled() const { return module_.has_value(); }

  torch::Tensor features(const torch::Tensor& x) {
    return module_->forward({x}).toTensor();
  }

 private:
  std::optional<torch::jit::Module> module_;
};

struct TensorTerms {
  torch::Tensor total, mse, perceptual;
};

TensorTerms tensor_loss(const torch::Tensor& pred, const torch::Tensor& target, double lambda,
                        Extractor& extractor) {
  TensorTerms t;
  t.mse = torch::mse_loss(pred, target);
  if (extractor.enabled()) {
    t.perceptual = torch::mse_loss(extractor.features(pred), extractor.features(target));
  } else {
    t.perceptual = torch::zeros({}, pred.options());
  }
  t.total = t.mse + lambda * t.perceptual;
  return t;
}

Image fit_crop_size(const Image& img, int crop) {
  if (img.height() >= crop && img.width() >= crop) return img;
  return pad_reflect(img, std::max(img.height(), crop), std::max(img.width(), crop));
}

struct CropWindow {
  int top = 0;
  int left = 0;
  bool flip = false;
};

CropWindow draw_window(int height, int width, const TrainConfig& config, Rng& rng) {
  CropWindow w;
  w.top = std::uniform_int_distribution<int>(0, height - config.crop_size)(rng);
  w.left = std::uniform_int_distribution<int>(0, width - config.crop_size)(rng);
  w.flip = config.horizontal_flip && std::bernoulli_distribution(0.5)(rng);
  return w;
}

Image apply_window(const Image& img, const CropWindow& w, int crop_size) {
  Image out = crop(img, w.top, w.left, crop_size, crop_size);
  return w.flip ? flip_horizontal(out) : out;
}

struct Batch {
  std::vector<Image> light, dark;
  std::vector<double> delta_m;
};

using BatchFn = std::function<void(int iter, Batch& batch)>;

TrainResult run_loop(const BrightNet& init, const TrainConfig& config, const LossConfig& loss,
                     std::span<const ImagePair> val_pairs, const TrainHooks& hooks,
                     std::vector<std::string> meta, const BatchFn& next_batch) {
  BrightNet work(init);
  auto& net = work.impl().net;
  Extractor extractor(loss);

  TrainResult result{init, {}};
  TrainHistory& history = result.history;
  history.meta = std::move(meta);

  if (!val_pairs.empty()) {
    const double p = validation_psnr(work, val_pairs);
    history.initial_val_psnr = p;
    history.best_val_psnr = p;
    if (hooks.on_validation) hooks.on_validation(0, work, p);
  }

  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  int stale = 0;
  for (int it = 1; it <= config.max_iters; ++it) {
    const double lr = cosine_rate(config, it - 1);
    for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

    Batch batch;
    batch.light.resize(static_cast<std::size_t>(config.batch_size));
    batch.dark.resize(batch.light.size());
    batch.delta_m.resize(batch.light.size());
    next_batch(it, batch);
    if (hooks.on_sample) {
      for (std::size_t b = 0; b < batch.light.size(); ++b) hooks.on_sample(it, batch.light[b], batch.dark[b], batch.delta_m[b]);
    }

    net->train();
    const auto x = detail::input_tensor(batch.dark);
    const auto target = detail::image_tensor(batch.light);
    const auto dark = detail::image_tensor(batch.dark);
    const auto features = detail::lightness_features(batch.delta_m, work.config().embed_dim);
    // Unclamped during training so saturated pixels still pass gradient.
    const auto pred = dark + torch::sigmoid(net->forward(x, features));
    auto terms = tensor_loss(pred, target, loss.lambda, extractor);
    const double total = terms.total.item<double>();
    if (!std::isfinite(total)) throw Error(ErrorCode::kNonFiniteLoss, "loss at iteration " + std::to_string(it));
    optimizer.zero_grad();
    terms.total.backward();
    optimizer.step();
    net->eval();

    HistoryRow row;
    row.iter = it;
    row.loss = total;
    row.mse = terms.mse.item<double>();
    row.perceptual = terms.perceptual.item<double>();
    row.lr = lr;

    bool stop = false;
    if (!val_pairs.empty() && (it % config.val_interval == 0 || it == config.max_iters)) {
      const double p = validation_psnr(work, val_pairs);
      row.val_psnr = p;
      if (hooks.on_validation) hooks.on_validation(it, work, p);
      if (p > *history.best_val_psnr) {
        history.best_val_psnr = p;
        history.best_iter = it;
        result.best = work;
        stale = 0;
      } else if (++stale >= config.early_stop_patience) {
        history.early_stopped = it < config.max_iters;
        stop = true;
      }
    }
    history.rows.push_back(row);
    if (stop) break;
  }
  if (val_pairs.empty()) {
    history.best_iter = history.rows.empty() ? 0 : history.rows.back().iter;
    result.best = std::move(work);
  }
  return result;
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::kInvalidConfig, "lambda must be >= 0");
}

LossTerms loss_total(std::span<const Image> pred, std::span<const Image> target, const LossConfig& config) {
  config.validate();
  if (pred.size() != target.size()) throw Error(ErrorCode::kShapeMismatch, "batch sizes differ");
  if (pred.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i].field().same_shape(target[i].field()) || !pred[i].field().same_shape(pred[0].field())) {
      throw Error(ErrorCode::kShapeMismatch, "loss inputs differ in shape");
    }
  }
  torch::NoGradGuard guard;
  Extractor extractor(config);
  auto t = tensor_loss(detail::image_tensor(pred), detail::image_tensor(target), config.lambda, extractor);
  return {t.total.item<double>(), t.mse.item<double>(), t.perceptual.item<double>()};
}

TrainConfig TrainConfig::unsupervised() { return TrainConfig{}; }

TrainConfig TrainConfig::finetuning() {
  TrainConfig c;
  c.max_iters = 2000;
  c.val_interval = 100;
  return c;
}

TrainConfig TrainConfig::full() {
  TrainConfig c;
  c.max_iters = 150000;
  c.val_interval = 1000;
  return c;
}

void TrainConfig::validate() const {
  if (crop_size < 8 || crop_size % kPadMultiple != 0) {
    throw Error(ErrorCode::kInvalidConfig, "crop_size must be a positive multiple of 8");
  }
  if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidConfig, "learning_rate must be positive");
  }
  if (max_iters < 1) throw Error(ErrorCode::kInvalidConfig, "max_iters must be positive");
  if (early_stop_patience < 1) throw Error(ErrorCode::kInvalidConfig, "early_stop_patience must be positive");
  if (val_interval < 1) throw Error(ErrorCode::kInvalidConfig, "val_interval must be positive");
}

double cosine_rate(const TrainConfig& config, int iter) {
  const double t = std::clamp(static_cast<double>(iter) / config.max_iters, 0.0, 1.0);
  return 0.5 * config.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

ImageSource ImageSource::from_images(std::vector<Image> images) {
  auto shared = std::make_shared<const std::vector<Image>>(std::move(images));
  return {shared->size(), [shared](std::size_t i) { return shared->at(i); }};
}

double validation_psnr(const BrightNet& net, std::span<const ImagePair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no validation pairs");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const double dm = mean_lightness(p.light) - mean_lightness(p.dark);
    sum += psnr(net.enhance(p.dark, dm).output, p.light);
  }
  return sum / static_cast<double>(pairs.size());
}

TrainResult train_unsupervised(const BrightNet& net, const ImageSource& corpus, const MDNParams& mdn,
                               const IlluminationStats& stats, const DimConfig& dim_config,
                               const TrainConfig& config, const LossConfig& loss,
                               std::span<const ImagePair> val_pairs, const TrainHooks& hooks) {
  config.validate();
  loss.validate();
  dim_config.validate();
  if (corpus.size == 0 || !corpus.load) throw Error(ErrorCode::kEmptyCorpus, "training corpus is empty");
  if (!stats.fitted) throw Error(ErrorCode::kUnfittedStats, "illumination statistics are not fitted");

  const std::uint64_t stream = derive_seed(config.seed, "unsupervised-batches");
  auto next_batch = [&](int it, Batch& batch) {
    const std::uint64_t iter_seed = derive_seed(stream, static_cast<std::uint64_t>(it));
    parallel_for(batch.light.size(), [&](std::size_t b) {
      Rng rng(derive_seed(iter_seed, static_cast<std::uint64_t>(b)));
      const auto index = std::uniform_int_distribution<std::size_t>(0, corpus.size - 1)(rng);
      const Image source = fit_crop_size(corpus.load(index), config.crop_size);
      const CropWindow w = draw_window(source.height(), source.width(), config, rng);
      Image light = apply_window(source, w, config.crop_size);
      DimmedSample dimmed = dim_image(light, mdn, stats, dim_config, rng);
      batch.delta_m[b] = dimmed.delta_m;
      batch.dark[b] = std::move(dimmed.dark);
      batch.light[b] = std::move(light);
    });
  };
  std::vector<std::string> meta{"mode=unsupervised", "corpus=" + std::to_string(corpus.size)};
  return run_loop(net, config, loss, val_pairs, hooks, std::move(meta), next_batch);
}

TrainResult finetune(const BrightNet& net, std::span<const ImagePair> pairs, const TrainConfig& config,
                     const LossConfig& loss, std::span<const ImagePair> val_pairs, const TrainHooks& hooks) {
  config.validate();
  loss.validate();
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "finetuning needs at least one pair");
  for (const auto& p : pairs) {
    if (!p.light.field().same_shape(p.dark.field())) {
      throw Error(ErrorCode::kShapeMismatch, "light and dark images differ in size");
    }
  }
  std::vector<ImagePair> padded;
  padded.reserve(pairs.size());
  for (const auto& p : pairs) padded.push_back({fit_crop_size(p.light, config.crop_size), fit_crop_size(p.dark, config.crop_size)});

  const std::uint64_t stream = derive_seed(config.seed, "finetune-batches");
  auto next_batch = [&](int it, Batch& batch) {
    const std::uint64_t iter_seed = derive_seed(stream, static_cast<std::uint64_t>(it));
    for (std::size_t b = 0; b < batch.light.size(); ++b) {
      Rng rng(derive_seed(iter_seed, static_cast<std::uint64_t>(b)));
      const auto& p = padded[std::uniform_int_distribution<std::size_t>(0, padded.size() - 1)(rng)];
      const CropWindow w = draw_window(p.light.height(), p.light.width(), config, rng);
      batch.light[b] = apply_window(p.light, w, config.crop_size);
      batch.dark[b] = apply_window(p.dark, w, config.crop_size);
      batch.delta_m[b] = mean_lightness(batch.light[b]) - mean_lightness(batch.dark[b]);
    }
  };
  std::vector<std::string> meta{"mode=finetune", "pairs=" + std::to_string(pairs.size())};
  return run_loop(net, config, loss, val_pairs, hooks, std::move(meta), next_batch);
}

void write_history(const TrainHistory& history, std::ostream& out) {
  for (const auto& m : history.meta) out << "# " << m << '\n';
  char buf[160];
  if (history.initial_val_psnr) {
    std::snprintf(buf, sizeof buf, "# initial_val_psnr=%.6f\n", *history.initial_val_psnr);
    out << buf;
  }
  out << "# best_iter=" << history.best_iter << '\n';
  out << "# early_stopped=" << (history.early_stopped ? 1 : 0) << '\n';
  for (const auto& r : history.rows) {
    std::snprintf(buf, sizeof buf, "%d %.9g %.9g %.9g %.9g", r.iter, r.loss, r.mse, r.perceptual, r.lr);
    out << buf;
    if (r.val_psnr) {
      std::snprintf(buf, sizeof buf, " %.6f", *r.val_psnr);
      out << buf;
    }
    out << '\n';
  }
}

void save_history(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
  write_history(history, out);
}

}  // namespace dimma
