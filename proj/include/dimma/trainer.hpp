#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dimma/brightnet.hpp"
#include "dimma/illumstats.hpp"
#include "dimma/image.hpp"
#include "dimma/mdn.hpp"

namespace dimma {

struct LossConfig {
  double lambda = 0.1;
  // TorchScript module mapping [B, 3, H, W] in [0, 1] to a feature map.
  // Empty disables the perceptual term.
  std::string feature_extractor;

  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double mse = 0.0;
  double perceptual = 0.0;
};

// Throws Error(kShapeMismatch), Error(kEmptyInput).
LossTerms loss_total(std::span<const Image> pred, std::span<const Image> target, const LossConfig& config);

struct TrainConfig {
  int crop_size = 256;
  int batch_size = 4;
  double learning_rate = 1e-5;
  int max_iters = 5000;
  int early_stop_patience = 10;
  int val_interval = 250;
  std::uint64_t seed = 0;
  bool horizontal_flip = true;

  static TrainConfig unsupervised();  // 5k iterations
  static TrainConfig finetuning();    // 2k iterations
  static TrainConfig full();          // 150k iterations
  // crop_size must also be a multiple of 8. Throws Error(kInvalidConfig).
  void validate() const;
};

// Cosine annealing from learning_rate at iteration 0 down to 0 at max_iters.
double cosine_rate(const TrainConfig& config, int iter);

struct HistoryRow {
  int iter = 0;
  double loss = 0.0;
  double mse = 0.0;
  double perceptual = 0.0;
  double lr = 0.0;
  std::optional<double> val_psnr;
};

struct TrainHistory {
  std::vector<std::string> meta;  // "key=value", written as "# key=value"
  std::vector<HistoryRow> rows;   // one per executed iteration, iter from 1
  std::optional<double> initial_val_psnr;
  int best_iter = 0;  // 0 = the input parameters
  std::optional<double> best_val_psnr;
  bool early_stopped = false;
};

struct TrainHooks {
  // Called once per batch slot with the crop pair and the conditioning value
  // fed to the net.
  std::function<void(int iter, const Image& light, const Image& dark, double delta_m)> on_sample;
  std::function<void(int iter, const BrightNet& net, double val_psnr)> on_validation;
};

struct TrainResult {
  BrightNet best;
  TrainHistory history;
};

// Random-access unlabeled images; load may be called concurrently.
struct ImageSource {
  std::size_t size = 0;
  std::function<Image(std::size_t)> load;

  static ImageSource from_images(std::vector<Image> images);
};

// Mean PSNR of enhance(dark, delta_m of the pair) against light.
double validation_psnr(const BrightNet& net, std::span<const ImagePair> pairs);

// Throws Error(kEmptyCorpus), Error(kUnfittedStats), Error(kNonFiniteLoss).
TrainResult train_unsupervised(const BrightNet& net, const ImageSource& corpus, const MDNParams& mdn,
                               const IlluminationStats& stats, const DimConfig& dim_config,
                               const TrainConfig& config, const LossConfig& loss,
                               std::span<const ImagePair> val_pairs, const TrainHooks& hooks = {});

// Throws Error(kEmptyInput), Error(kShapeMismatch), Error(kNonFiniteLoss).
TrainResult finetune(const BrightNet& net, std::span<const ImagePair> pairs, const TrainConfig& config,
                     const LossConfig& loss, std::span<const ImagePair> val_pairs,
                     const TrainHooks& hooks = {});

// "# key=value" meta lines, then "iter loss mse perc lr [val_psnr]".
void write_history(const TrainHistory& history, std::ostream& out);
void save_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace dimma
