#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dimma/image.hpp"
#include "dimma/seed.hpp"

namespace dimma {

struct MDNConfig {
  int components = 4;
  std::vector<int> hidden_widths{64, 64};
  int epochs = 1000;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  // Pixels per optimization step; smaller datasets train full-batch.
  std::size_t batch_pixels = 65536;

  // Same as the default except for a 32-wide trunk.
  static MDNConfig toy();
  void validate() const;

  friend bool operator==(const MDNConfig&, const MDNConfig&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// 5 -> hidden... (tanh) trunk shared by all pixels, followed by a linear head.
// Head rows are grouped by color channel k: [logits(M) | offsets(M) |
// log-sigma(M)] at rows k*3M ... (k+1)*3M - 1, i.e. one head per channel.
struct MDNParams {
  MDNConfig config;
  std::vector<DenseLayer> trunk;
  DenseLayer head;

  std::size_t parameter_count() const;
};

inline constexpr int kMdnInputs = 5;
inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kReflectanceMax = 3.0;

// Activated mixture parameters per (pixel, channel, component).
struct MixtureField {
  int height = 0;
  int width = 0;
  int components = 0;
  std::vector<double> pi;
  std::vector<double> mu_offset;
  std::vector<double> sigma;

  MixtureField() = default;
  MixtureField(int h, int w, int m);

  std::size_t index(std::size_t pixel, int channel, int component) const noexcept {
    return (pixel * 3 + static_cast<std::size_t>(channel)) * static_cast<std::size_t>(components) +
           static_cast<std::size_t>(component);
  }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
};

// Column-per-pixel training tuples: inputs are [r, g, b, l, l_D], targets
// are the dark reflectance.
struct MDNSamples {
  Eigen::MatrixXd inputs;   // 5 x N
  Eigen::MatrixXd targets;  // 3 x N
};

MDNParams init_mdn(const MDNConfig& config);

MixtureField mdn_forward(const MDNParams& params, const Field& reflectance,
                         const Field& illumination, const Field& dark_illumination);

// Mean over elements of -log sum_m pi_m N(target; source + mu_m, sigma_m^2).
double mdn_nll(const MixtureField& field, const Field& source, const Field& target);

// Mean NLL of the samples under params. When gradient is non-null it
// receives dLoss/dparams with the same layout as params.
double mdn_loss(const MDNParams& params, const MDNSamples& samples, MDNParams* gradient = nullptr);

MDNSamples build_mdn_samples(std::span<const ImagePair> pairs);

struct MDNTrainResult {
  MDNParams params;                  // weights of the lowest-loss epoch
  std::vector<double> loss_history;  // one entry per epoch
  int best_epoch = 0;
};

// Adam on the mean NLL; returns the weights of the epoch with the lowest NLL.
// Weights are rounded to float32 at the end so the checkpoint is an exact
// image of the returned params.
MDNTrainResult train_mdn(std::span<const ImagePair> pairs, const MDNConfig& config);
MDNTrainResult train_mdn(const MDNSamples& samples, const MDNConfig& config);

// Element-wise draw: component m ~ Categorical(pi), then
// source + mu_m + sqrt(alpha) * sigma_m * z, clamped to [0, 3].
Field sample_reflectance(const MixtureField& field, const Field& source, double alpha, Rng& rng);

// sum_m pi_m (source + mu_m), clamped to [0, 3].
Field mixture_expectation(const MixtureField& field, const Field& source);

struct PdfPoint {
  double value;
  double density;
};

std::vector<PdfPoint> mdn_pdf_curve(const MDNParams& params, const std::array<double, kMdnInputs>& probe,
                                    int channel, std::span<const double> grid);

// Binary checkpoint: "DIMMA-MDN\0", u32 version, config echo, then float32
// blobs (trunk weight/bias pairs, head weight, head bias; row-major).
void write_mdn(const MDNParams& params, std::ostream& out);
MDNParams read_mdn(std::istream& in);
void save_mdn(const MDNParams& params, const std::filesystem::path& path);
MDNParams load_mdn(const std::filesystem::path& path);

}  // namespace dimma
