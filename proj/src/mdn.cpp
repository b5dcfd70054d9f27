#include "dimma/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "dimma/errors.hpp"
#include "dimma/retinex.hpp"

namespace dimma {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
constexpr char kMagic[] = "DIMMA-MDN";  // written with its terminating NUL
constexpr std::uint32_t kFormatVersion = 1;

int head_rows(int components) { return 3 * 3 * components; }

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = inputs
  Eigen::MatrixXd head;                      // raw head outputs
};

ForwardCache forward_raw(const MDNParams& p, const Eigen::MatrixXd& inputs) {
  ForwardCache cache;
  cache.activations.reserve(p.trunk.size() + 1);
  cache.activations.push_back(inputs);
  for (const DenseLayer& layer : p.trunk) {
    Eigen::MatrixXd z = layer.weight * cache.activations.back();
    z.colwise() += layer.bias;
    cache.activations.push_back(z.array().tanh().matrix());
  }
  cache.head = p.head.weight * cache.activations.back();
  cache.head.colwise() += p.head.bias;
  return cache;
}

// Activated parameters of one (column, channel) mixture.
struct Mixture {
  std::vector<double> log_pi;
  std::vector<double> offset;
  std::vector<double> sigma;
  std::vector<bool> floored;
};

void activate(const Eigen::MatrixXd& head, Eigen::Index col, int channel, int m, Mixture& out) {
  out.log_pi.resize(m);
  out.offset.resize(m);
  out.sigma.resize(m);
  out.floored.resize(m);
  const Eigen::Index base = static_cast<Eigen::Index>(channel) * 3 * m;
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) max_logit = std::max(max_logit, head(base + j, col));
  double sum = 0.0;
  for (int j = 0; j < m; ++j) sum += std::exp(head(base + j, col) - max_logit);
  const double lse = max_logit + std::log(sum);
  for (int j = 0; j < m; ++j) {
    out.log_pi[j] = head(base + j, col) - lse;
    out.offset[j] = head(base + m + j, col);
    const double s = std::exp(head(base + 2 * m + j, col));
    out.floored[j] = !(s > kSigmaFloor);
    out.sigma[j] = out.floored[j] ? kSigmaFloor : s;
  }
}

Eigen::MatrixXd pixel_inputs(const Field& r, const Field& l, const Field& ld) {
  if (r.channels() != 3 || l.channels() != 1 || ld.channels() != 1 || !r.same_extent(l) ||
      !r.same_extent(ld)) {
    throw Error(ErrorCode::kShapeMismatch, "MDN inputs must be HxWx3, HxWx1, HxWx1 of one extent");
  }
  const auto n = static_cast<Eigen::Index>(r.pixel_count());
  Eigen::MatrixXd x(kMdnInputs, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    x(0, i) = r[3 * u];
    x(1, i) = r[3 * u + 1];
    x(2, i) = r[3 * u + 2];
    x(3, i) = l[u];
    x(4, i) = ld[u];
  }
  return x;
}

double log_normal(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

double log_sum_exp(const std::vector<double>& a) {
  const double mx = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : a) s += std::exp(v - mx);
  return mx + std::log(s);
}

// Flattening used by the optimizer.
Eigen::VectorXd pack(const MDNParams& p) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(p.parameter_count()));
  Eigen::Index at = 0;
  auto put = [&](const auto& m) {
    const Eigen::Index n = m.size();
    v.segment(at, n) = Eigen::Map<const Eigen::VectorXd>(m.data(), n);
    at += n;
  };
  for (const DenseLayer& layer : p.trunk) {
    put(layer.weight);
    put(layer.bias);
  }
  put(p.head.weight);
  put(p.head.bias);
  return v;
}

void unpack(const Eigen::VectorXd& v, MDNParams& p) {
  Eigen::Index at = 0;
  auto take = [&](auto& m) {
    const Eigen::Index n = m.size();
    Eigen::Map<Eigen::VectorXd>(m.data(), n) = v.segment(at, n);
    at += n;
  };
  for (DenseLayer& layer : p.trunk) {
    take(layer.weight);
    take(layer.bias);
  }
  take(p.head.weight);
  take(p.head.bias);
}

MDNParams zeros_like(const MDNParams& p) {
  MDNParams z = p;
  for (DenseLayer& layer : z.trunk) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  z.head.weight.setZero();
  z.head.bias.setZero();
  return z;
}

void check_samples(const MDNSamples& s) {
  if (s.inputs.rows() != kMdnInputs || s.targets.rows() != 3 || s.inputs.cols() != s.targets.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "MDN samples must be 5xN inputs and 3xN targets");
  }
  if (s.inputs.cols() == 0) throw Error(ErrorCode::kEmptyInput, "no MDN training samples");
}

}  // namespace

MDNConfig MDNConfig::toy() {
  MDNConfig c;
  c.hidden_widths = {32, 32};
  return c;
}

void MDNConfig::validate() const {
  if (components < 1) throw Error(ErrorCode::kInvalidConfig, "MDN needs at least one component");
  if (hidden_widths.empty()) throw Error(ErrorCode::kInvalidConfig, "MDN hidden widths empty");
  for (int w : hidden_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidConfig, "MDN hidden width must be positive");
  }
  if (epochs < 1) throw Error(ErrorCode::kInvalidConfig, "MDN epochs must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidConfig, "MDN learning rate must be positive");
  if (batch_pixels < 1) throw Error(ErrorCode::kInvalidConfig, "MDN batch size must be positive");
}

std::size_t MDNParams::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : trunk) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n + static_cast<std::size_t>(head.weight.size() + head.bias.size());
}

MixtureField::MixtureField(int h, int w, int m)
    : height(h), width(w), components(m) {
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3 *
                        static_cast<std::size_t>(m);
  pi.assign(n, 0.0);
  mu_offset.assign(n, 0.0);
  sigma.assign(n, 1.0);
}

MDNParams init_mdn(const MDNConfig& config) {
  config.validate();
  MDNParams p;
  p.config = config;
  Rng rng(config.seed);
  int fan_in = kMdnInputs;
  for (int width : config.hidden_widths) {
    const double bound = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(width)};
    // Row-major fill order keeps the draw sequence independent of Eigen's storage.
    for (int r = 0; r < width; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = static_cast<double>(static_cast<float>(u(rng)));
    p.trunk.push_back(std::move(layer));
    fan_in = width;
  }
  p.head.weight = Eigen::MatrixXd::Zero(head_rows(config.components), fan_in);
  p.head.bias = Eigen::VectorXd::Zero(head_rows(config.components));
  return p;
}

MixtureField mdn_forward(const MDNParams& params, const Field& reflectance,
                         const Field& illumination, const Field& dark_illumination) {
  const Eigen::MatrixXd x = pixel_inputs(reflectance, illumination, dark_illumination);
  const ForwardCache cache = forward_raw(params, x);
  const int m = params.config.components;
  MixtureField out(reflectance.height(), reflectance.width(), m);
  Mixture mix;
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    for (int k = 0; k < 3; ++k) {
      activate(cache.head, col, k, m, mix);
      for (int j = 0; j < m; ++j) {
        const std::size_t at = out.index(static_cast<std::size_t>(col), k, j);
        out.pi[at] = std::exp(mix.log_pi[j]);
        out.mu_offset[at] = mix.offset[j];
        out.sigma[at] = mix.sigma[j];
      }
    }
  }
  return out;
}

double mdn_nll(const MixtureField& field, const Field& source, const Field& target) {
  if (source.channels() != 3 || !source.same_shape(target) || source.height() != field.height ||
      source.width() != field.width) {
    throw Error(ErrorCode::kShapeMismatch, "mixture field and reflectance shapes differ");
  }
  const int m = field.components;
  std::vector<double> terms(m);
  double total = 0.0;
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double r = source[3 * i + k];
      const double t = target[3 * i + k];
      for (int j = 0; j < m; ++j) {
        const std::size_t at = field.index(i, k, j);
        terms[j] = std::log(field.pi[at]) + log_normal(t, r + field.mu_offset[at], field.sigma[at]);
      }
      total -= log_sum_exp(terms);
    }
  }
  return total / static_cast<double>(field.pixel_count() * 3);
}

double mdn_loss(const MDNParams& params, const MDNSamples& samples, MDNParams* gradient) {
  check_samples(samples);
  const ForwardCache cache = forward_raw(params, samples.inputs);
  const int m = params.config.components;
  const Eigen::Index n = samples.inputs.cols();
  const double scale = 1.0 / static_cast<double>(n * 3);

  Eigen::MatrixXd d_head;
  if (gradient) d_head.setZero(cache.head.rows(), n);

  Mixture mix;
  std::vector<double> a(m);
  double total = 0.0;
  for (Eigen::Index col = 0; col < n; ++col) {
    for (int k = 0; k < 3; ++k) {
      activate(cache.head, col, k, m, mix);
      const double r = samples.inputs(k, col);
      const double t = samples.targets(k, col);
      for (int j = 0; j < m; ++j) a[j] = mix.log_pi[j] + log_normal(t, r + mix.offset[j], mix.sigma[j]);
      const double lse = log_sum_exp(a);
      total -= lse;
      if (!gradient) continue;
      const Eigen::Index base = static_cast<Eigen::Index>(k) * 3 * m;
      for (int j = 0; j < m; ++j) {
        const double resp = std::exp(a[j] - lse);
        const double z = (t - r - mix.offset[j]) / mix.sigma[j];
        d_head(base + j, col) = scale * (std::exp(mix.log_pi[j]) - resp);
        d_head(base + m + j, col) = -scale * resp * z / mix.sigma[j];
        d_head(base + 2 * m + j, col) = mix.floored[j] ? 0.0 : scale * resp * (1.0 - z * z);
      }
    }
  }

  if (gradient) {
    if (gradient->trunk.size() != params.trunk.size()) *gradient = zeros_like(params);
    gradient->config = params.config;
    gradient->head.weight = d_head * cache.activations.back().transpose();
    gradient->head.bias = d_head.rowwise().sum();
    Eigen::MatrixXd upstream = params.head.weight.transpose() * d_head;
    for (std::size_t l = params.trunk.size(); l-- > 0;) {
      const Eigen::MatrixXd& act = cache.activations[l + 1];
      const Eigen::MatrixXd dz = (upstream.array() * (1.0 - act.array().square())).matrix();
      gradient->trunk[l].weight = dz * cache.activations[l].transpose();
      gradient->trunk[l].bias = dz.rowwise().sum();
      if (l > 0) upstream = params.trunk[l].weight.transpose() * dz;
    }
  }
  return total * scale;
}

MDNSamples build_mdn_samples(std::span<const ImagePair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "MDN training needs at least one pair");
  std::size_t total = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& pr = pairs[p];
    if (pr.light.height() != pr.dark.height() || pr.light.width() != pr.dark.width()) {
      throw Error(ErrorCode::kShapeMismatch, "pair " + std::to_string(p) + " shapes differ");
    }
    total += pr.light.pixel_count();
  }
  MDNSamples s{Eigen::MatrixXd(kMdnInputs, static_cast<Eigen::Index>(total)),
               Eigen::MatrixXd(3, static_cast<Eigen::Index>(total))};
  Eigen::Index col = 0;
  for (const auto& pr : pairs) {
    const RetinexPair light = decompose(pr.light);
    const RetinexPair dark = decompose(pr.dark);
    for (std::size_t i = 0; i < pr.light.pixel_count(); ++i, ++col) {
      for (int k = 0; k < 3; ++k) {
        s.inputs(k, col) = light.reflectance[3 * i + k];
        s.targets(k, col) = dark.reflectance[3 * i + k];
      }
      s.inputs(3, col) = light.illumination[i];
      s.inputs(4, col) = dark.illumination[i];
    }
  }
  return s;
}

MDNTrainResult train_mdn(std::span<const ImagePair> pairs, const MDNConfig& config) {
  return train_mdn(build_mdn_samples(pairs), config);
}

MDNTrainResult train_mdn(const MDNSamples& samples, const MDNConfig& config) {
  check_samples(samples);
  MDNTrainResult result{init_mdn(config), {}};
  MDNParams& params = result.params;
  {
    // A zero head gives every component the same gradient forever; a small
    // seeded jitter lets them separate.
    Rng jitter(derive_seed(config.seed, "mdn-head"));
    std::normal_distribution<double> n(0.0, 1e-2 / std::sqrt(static_cast<double>(params.head.weight.cols())));
    for (Eigen::Index r = 0; r < params.head.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < params.head.weight.cols(); ++c) params.head.weight(r, c) = n(jitter);
  }
  Rng rng(derive_seed(config.seed, "mdn-batches"));

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  Eigen::VectorXd theta = pack(params);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  long step = 0;

  const Eigen::Index n = samples.inputs.cols();
  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(config.batch_pixels, static_cast<std::size_t>(n)));
  const bool full_batch = batch == n;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  MDNSamples chunk;
  MDNParams grad = zeros_like(params);

  result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
  Eigen::VectorXd best = theta;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (!full_batch) std::shuffle(order.begin(), order.end(), rng);
    const Eigen::VectorXd start_theta = theta;
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      const MDNSamples* current = &samples;
      if (!full_batch) {
        chunk.inputs.resize(kMdnInputs, len);
        chunk.targets.resize(3, len);
        for (Eigen::Index j = 0; j < len; ++j) {
          const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
          chunk.inputs.col(j) = samples.inputs.col(src);
          chunk.targets.col(j) = samples.targets.col(src);
        }
        current = &chunk;
      }
      const double loss = mdn_loss(params, *current, &grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kNonFiniteLoss, "MDN loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(len);

      ++step;
      const Eigen::VectorXd g = pack(grad);
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * g;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      theta.array() -= config.learning_rate * (m1.array() / c1) /
                       ((m2.array() / c2).sqrt() + kAdamEps);
      unpack(theta, params);
    }
    const double mean_loss = epoch_loss / static_cast<double>(n);
    result.loss_history.push_back(mean_loss);
    // Full batch: mean_loss is exactly the loss of start_theta. Minibatched:
    // the epoch-end weights stand in for the epoch.
    if (mean_loss < best_loss) {
      best_loss = mean_loss;
      best = full_batch ? start_theta : theta;
      result.best_epoch = epoch;
    }
  }
  for (Eigen::Index i = 0; i < best.size(); ++i) best[i] = static_cast<double>(static_cast<float>(best[i]));
  unpack(best, params);
  return result;
}

Field sample_reflectance(const MixtureField& field, const Field& source, double alpha, Rng& rng) {
  if (source.channels() != 3 || source.height() != field.height || source.width() != field.width) {
    throw Error(ErrorCode::kShapeMismatch, "mixture field and reflectance shapes differ");
  }
  const double scale = std::sqrt(std::clamp(alpha, 0.0, 1.0));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Field out(source.height(), source.width(), 3);
  const int m = field.components;
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double u = uniform(rng);
      int pick = m - 1;
      double acc = 0.0;
      for (int j = 0; j < m; ++j) {
        acc += field.pi[field.index(i, k, j)];
        if (u < acc) {
          pick = j;
          break;
        }
      }
      const std::size_t at = field.index(i, k, pick);
      double v = source[3 * i + k] + field.mu_offset[at];
      if (scale > 0.0) v += scale * field.sigma[at] * normal(rng);
      out[3 * i + k] = static_cast<float>(std::clamp(v, 0.0, kReflectanceMax));
    }
  }
  return out;
}

Field mixture_expectation(const MixtureField& field, const Field& source) {
  if (source.channels() != 3 || source.height() != field.height || source.width() != field.width) {
    throw Error(ErrorCode::kShapeMismatch, "mixture field and reflectance shapes differ");
  }
  Field out(source.height(), source.width(), 3);
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    for (int k = 0; k < 3; ++k) {
      double v = 0.0;
      for (int j = 0; j < field.components; ++j) {
        const std::size_t at = field.index(i, k, j);
        v += field.pi[at] * (source[3 * i + k] + field.mu_offset[at]);
      }
      out[3 * i + k] = static_cast<float>(std::clamp(v, 0.0, kReflectanceMax));
    }
  }
  return out;
}

std::vector<PdfPoint> mdn_pdf_curve(const MDNParams& params, const std::array<double, kMdnInputs>& probe,
                                    int channel, std::span<const double> grid) {
  if (channel < 0 || channel > 2) throw Error(ErrorCode::kRange, "channel must be 0, 1 or 2");
  if (grid.empty()) throw Error(ErrorCode::kEmptyInput, "pdf grid is empty");
  Eigen::MatrixXd x(kMdnInputs, 1);
  for (int i = 0; i < kMdnInputs; ++i) x(i, 0) = probe[static_cast<std::size_t>(i)];
  const ForwardCache cache = forward_raw(params, x);
  Mixture mix;
  const int m = params.config.components;
  activate(cache.head, 0, channel, m, mix);
  const double source = probe[static_cast<std::size_t>(channel)];
  std::vector<PdfPoint> curve;
  curve.reserve(grid.size());
  for (double v : grid) {
    double d = 0.0;
    for (int j = 0; j < m; ++j) d += std::exp(mix.log_pi[j] + log_normal(v, source + mix.offset[j], mix.sigma[j]));
    curve.push_back({v, d});
  }
  return curve;
}

namespace {

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) binio::put<float>(out, static_cast<float>(m(r, c)));
}

void get_matrix(std::istream& in, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = binio::get<float>(in);
}

void put_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) binio::put<float>(out, static_cast<float>(v[i]));
}

void get_vector(std::istream& in, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = binio::get<float>(in);
}

}  // namespace

void write_mdn(const MDNParams& params, std::ostream& out) {
  binio::put_bytes(out, std::string_view(kMagic, sizeof kMagic));
  binio::put<std::uint32_t>(out, kFormatVersion);
  const MDNConfig& c = params.config;
  binio::put<std::int32_t>(out, c.components);
  binio::put<std::int32_t>(out, static_cast<std::int32_t>(c.hidden_widths.size()));
  for (int w : c.hidden_widths) binio::put<std::int32_t>(out, w);
  binio::put<std::int32_t>(out, c.epochs);
  binio::put<double>(out, c.learning_rate);
  binio::put<std::uint64_t>(out, c.seed);
  binio::put<std::uint64_t>(out, c.batch_pixels);
  for (const DenseLayer& layer : params.trunk) {
    put_matrix(out, layer.weight);
    put_vector(out, layer.bias);
  }
  put_matrix(out, params.head.weight);
  put_vector(out, params.head.bias);
}

MDNParams read_mdn(std::istream& in) {
  binio::expect_bytes(in, std::string_view(kMagic, sizeof kMagic), "MDN checkpoint");
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kFormat, "unsupported MDN checkpoint version " + std::to_string(version));
  }
  MDNConfig c;
  c.components = binio::get<std::int32_t>(in);
  const auto depth = binio::get<std::int32_t>(in);
  if (depth < 1 || depth > 64) throw Error(ErrorCode::kFormat, "implausible MDN depth");
  c.hidden_widths.resize(static_cast<std::size_t>(depth));
  for (int& w : c.hidden_widths) w = binio::get<std::int32_t>(in);
  c.epochs = binio::get<std::int32_t>(in);
  c.learning_rate = binio::get<double>(in);
  c.seed = binio::get<std::uint64_t>(in);
  c.batch_pixels = binio::get<std::uint64_t>(in);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kFormat, std::string("MDN checkpoint config: ") + e.what());
  }
  MDNParams p = init_mdn(c);
  for (DenseLayer& layer : p.trunk) {
    get_matrix(in, layer.weight);
    get_vector(in, layer.bias);
  }
  get_matrix(in, p.head.weight);
  get_vector(in, p.head.bias);
  return p;
}

void save_mdn(const MDNParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
  write_mdn(params, out);
  if (!out) throw Error(ErrorCode::kIO, "write failed: " + path.string());
}

MDNParams load_mdn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  return read_mdn(in);
}

}  // namespace dimma
