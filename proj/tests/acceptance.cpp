// Acceptance criteria, one PASS/FAIL line each. Pass criterion ids to run a
// subset; exit status is nonzero when any selected criterion fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dimma/brightnet.hpp"
#include "dimma/dimmer.hpp"
#include "dimma/illumstats.hpp"
#include "dimma/image.hpp"
#include "dimma/mdn.hpp"
#include "dimma/metrics.hpp"
#include "dimma/retinex.hpp"
#include "dimma/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace dimma;
using namespace dimma::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Retinex exactness.
Outcome retinex_exactness() {
  Rng rng(101);
  std::uniform_int_distribution<int> side(8, 512);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Image x = random_image(rng, side(rng), side(rng));
    worst = std::max(worst, max_abs_diff(recompose(decompose(x)), x));
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-6 && dt < 30.0, fmt("max error %.3g (<= 1e-6), %.1f s (< 30 s)", worst, dt)};
}

// 2. MDN analytics.
Outcome mdn_analytics() {
  Rng rng(202);
  // M = 1, zero offset, unit sigma, target == source.
  MixtureField one(3, 3, 1);
  std::fill(one.pi.begin(), one.pi.end(), 1.0);
  std::fill(one.mu_offset.begin(), one.mu_offset.end(), 0.0);
  std::fill(one.sigma.begin(), one.sigma.end(), 1.0);
  const Field src = random_image(rng, 3, 3, 0.0f, 1.0f).field();
  const double identity_err = std::abs(mdn_nll(one, src, src) - 0.5 * std::log(2.0 * std::numbers::pi));

  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> side(1, 4);
  double nll_err = 0.0;
  double pdf_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    MDNConfig cfg = MDNConfig::toy();
    cfg.components = 1 + t % 5;
    const MDNParams p = randomized(cfg, rng);
    const int h = side(rng);
    const int w = side(rng);
    Field r(h, w, 3), l(h, w, 1), ld(h, w, 1), target(h, w, 3);
    for (auto& v : r.values()) v = 3.0f * u(rng);
    for (auto& v : l.values()) v = u(rng);
    for (auto& v : ld.values()) v = 0.5f * u(rng);
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = r[i] + 0.4f * (u(rng) - 0.5f);
    const MixtureField mix = mdn_forward(p, r, l, ld);
    double nll = 0.0;
    const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    for (std::size_t px = 0; px < n; ++px) {
      const double x[5] = {r[3 * px], r[3 * px + 1], r[3 * px + 2], l[px], ld[px]};
      for (int k = 0; k < 3; ++k) {
        const OracleMixture o = oracle_mixture(p, x, k);
        const double s = r[3 * px + static_cast<std::size_t>(k)];
        nll -= oracle_log_density(o, s, target[3 * px + static_cast<std::size_t>(k)]);
        if (px == 0) {
          std::vector<double> grid;
          for (int g = -50; g <= 50; ++g) grid.push_back(s + g / 25.0);
          const std::array<double, kMdnInputs> probe{x[0], x[1], x[2], x[3], x[4]};
          const auto curve = mdn_pdf_curve(p, probe, k, grid);
          for (std::size_t g = 0; g < grid.size(); ++g) {
            pdf_err = std::max(pdf_err, std::abs(curve[g].density - oracle_density(o, s, grid[g])));
          }
        }
      }
    }
    nll_err = std::max(nll_err, std::abs(mdn_nll(mix, r, target) - nll / static_cast<double>(3 * n)));
  }

  // Central differences over every parameter of a small net.
  MDNConfig cfg;
  cfg.hidden_widths = {6, 5};
  cfg.components = 3;
  MDNParams p = randomized(cfg, rng);
  std::normal_distribution<double> nd(0.0, 0.4);
  for (auto& layer : p.trunk)
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = nd(rng);
  MDNSamples s;
  s.inputs.resize(5, 6);
  s.targets.resize(3, 6);
  for (int px = 0; px < 6; ++px) {
    for (int c = 0; c < 3; ++c) {
      s.inputs(c, px) = 3.0 * u(rng);
      s.targets(c, px) = s.inputs(c, px) + 0.4 * (u(rng) - 0.5);
    }
    s.inputs(3, px) = u(rng);
    s.inputs(4, px) = 0.5 * u(rng);
  }
  MDNParams grad = p;
  mdn_loss(p, s, &grad);
  auto params = all_parameters(p);
  auto grads = all_parameters(grad);
  const double h = 1e-4;
  double grad_err = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = *params[i];
    *params[i] = keep + h;
    const double up = mdn_loss(p, s);
    *params[i] = keep - h;
    const double down = mdn_loss(p, s);
    *params[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(*grads[i]), 1e-8});
    grad_err = std::max(grad_err, std::abs(fd - *grads[i]) / scale);
  }
  const bool pass = identity_err <= 1e-6 && nll_err <= 1e-6 && pdf_err <= 1e-6 && grad_err <= 1e-3;
  return {pass, fmt("identity NLL error %.2g, oracle NLL error %.2g, pdf error %.2g (all <= 1e-6); "
                    "gradient rel error %.2g (<= 1e-3)",
                    identity_err, nll_err, pdf_err, grad_err)};
}

// 3. MDN recovery of a known offset and noise level.
Outcome mdn_recovery() {
  const double offset = 0.1;
  const double noise = 0.05;
  Rng rng(303);
  std::uniform_real_distribution<double> refl(0.6, 1.4);
  std::uniform_real_distribution<double> light(0.2, 0.8);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 4096;
  MDNSamples s;
  s.inputs.resize(5, n);
  s.targets.resize(3, n);
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      s.inputs(c, i) = refl(rng);
      s.targets(c, i) = s.inputs(c, i) + offset + noise * z(rng);
      const double d = s.targets(c, i) - s.inputs(c, i);
      sum += d;
      sq += d * d;
    }
    s.inputs(3, i) = light(rng);
    s.inputs(4, i) = 0.3 * s.inputs(3, i);
  }
  // Gaussian MLE on the synthetic data.
  const double mle_mean = sum / (3.0 * n);
  const double mle_std = std::sqrt(sq / (3.0 * n) - mle_mean * mle_mean);

  MDNConfig cfg = MDNConfig::toy();
  cfg.seed = 7;
  const auto t0 = std::chrono::steady_clock::now();
  const MDNTrainResult trained = train_mdn(s, cfg);
  const double dt = seconds_since(t0);

  const int side = 200;
  Field r(side, side, 3), l(side, side, 1), ld(side, side, 1);
  for (auto& v : r.values()) v = static_cast<float>(refl(rng));
  for (std::size_t i = 0; i < l.size(); ++i) {
    l[i] = static_cast<float>(light(rng));
    ld[i] = 0.3f * l[i];
  }
  const MixtureField mix = mdn_forward(trained.params, r, l, ld);
  const Field drawn = sample_reflectance(mix, r, 1.0, rng);
  double ms = 0.0;
  double mq = 0.0;
  for (std::size_t i = 0; i < drawn.size(); ++i) {
    const double d = static_cast<double>(drawn[i]) - r[i];
    ms += d;
    mq += d * d;
  }
  const double count = static_cast<double>(drawn.size());
  const double mean = ms / count;
  const double sd = std::sqrt(mq / count - mean * mean);
  const bool pass = std::abs(mean - offset) <= 0.02 && std::abs(sd - noise) <= 0.01 && dt < 300.0;
  return {pass, fmt("sampled offset %.4f (0.1 +- 0.02), std %.4f (0.05 +- 0.01); MLE oracle %.4f / %.4f; "
                    "%.0f samples; training %.1f s (< 300 s)",
                    mean, sd, mle_mean, mle_std, count, dt)};
}

// 4. Illumination statistics.
Outcome illumination_stats() {
  Rng rng(404);
  std::vector<ImagePair> linear;
  for (int i = 0; i < 5; ++i) {
    const Image light = random_image(rng, 64, 64);
    Field d = light.field();
    for (auto& v : d.values()) v *= 0.5f;
    linear.push_back({light, Image::from_field(std::move(d))});
  }
  const IlluminationStats lin = fit_stats(linear);
  double mu_err = 0.0;
  double sigma_max = 0.0;
  int observed = 0;
  for (int k = 0; k < IlluminationStats::kBins; ++k) {
    if (lin.interpolated[static_cast<std::size_t>(k)]) continue;
    ++observed;
    mu_err = std::max(mu_err, std::abs(lin.mu[static_cast<std::size_t>(k)] - 0.5));
    sigma_max = std::max(sigma_max, static_cast<double>(lin.sigma[static_cast<std::size_t>(k)]));
  }

  // Per-pixel ratio ~ N(0.4, 0.05^2), shared by the three channels.
  const double true_mu = 0.4;
  const double true_sigma = 0.05;
  std::normal_distribution<double> ratio(true_mu, true_sigma);
  std::uniform_real_distribution<double> gray(0.1, 0.9);
  std::uniform_real_distribution<double> tint(0.9, 1.1);
  std::vector<ImagePair> gauss;
  for (int i = 0; i < 10; ++i) {
    Field lf(256, 256, 3);
    Field df(256, 256, 3);
    for (std::size_t px = 0; px < lf.pixel_count(); ++px) {
      const double g = gray(rng);
      const double q = ratio(rng);
      for (int c = 0; c < 3; ++c) {
        const float v = static_cast<float>(std::min(1.0, g * tint(rng)));
        lf[3 * px + static_cast<std::size_t>(c)] = v;
        df[3 * px + static_cast<std::size_t>(c)] = static_cast<float>(v * q);
      }
    }
    gauss.push_back({Image::from_field(std::move(lf)), Image::from_field(std::move(df))});
  }
  const IlluminationStats gs = fit_stats(gauss);
  int checked = 0;
  int bad = 0;
  double worst_mu_se = 0.0;
  double worst_sigma_rel = 0.0;
  for (int k = 0; k < IlluminationStats::kBins; ++k) {
    const auto n = gs.count[static_cast<std::size_t>(k)];
    if (n < 2000) continue;
    ++checked;
    const double se = true_sigma / std::sqrt(static_cast<double>(n));
    const double mu_se = std::abs(gs.mu[static_cast<std::size_t>(k)] - true_mu) / se;
    const double sig_rel = std::abs(gs.sigma[static_cast<std::size_t>(k)] - true_sigma) / true_sigma;
    worst_mu_se = std::max(worst_mu_se, mu_se);
    worst_sigma_rel = std::max(worst_sigma_rel, sig_rel);
    if (mu_se > 3.0 || sig_rel > 0.05) ++bad;
  }
  const bool pass = observed > 0 && mu_err <= 1e-6 && sigma_max <= 1e-6 && checked > 0 && bad == 0;
  return {pass, fmt("linear 0.5: %d observed bins, max |mu-0.5| %.2g, max sigma %.2g; gaussian: %d bins, "
                    "worst mu %.2f SE (<= 3), worst sigma %.2f%% (<= 5%%)",
                    observed, mu_err, sigma_max, checked, worst_mu_se, 100.0 * worst_sigma_rel)};
}

// 5. Dimming fidelity against a known synthetic camera.
Outcome dimming_fidelity() {
  Rng rng(505);
  CameraModel cam;
  cam.noise = 0.005;
  std::vector<ImagePair> pairs;
  for (int i = 0; i < 4; ++i) pairs.push_back(camera_pair(smooth_scene(rng, 96, 128), cam, rng));
  const IlluminationStats stats = fit_stats(pairs);
  MDNConfig mcfg = MDNConfig::toy();
  mcfg.epochs = 300;
  mcfg.seed = 11;
  const MDNParams mdn = train_mdn(pairs, mcfg).params;

  DimConfig dcfg;
  dcfg.gamma_min = dcfg.gamma_max = 1.0;
  double ratio_sum = 0.0;
  double bias_sum = 0.0;
  std::size_t ratio_n = 0;
  std::size_t bias_n = 0;
  for (int i = 0; i < 10; ++i) {
    const Image light = smooth_scene(rng, 96, 128);
    Rng draw(derive_seed(99, static_cast<std::uint64_t>(i)));
    const DimmedSample s = dim_image(light, mdn, stats, dcfg, draw);
    const auto a = decompose(light);
    const auto b = decompose(s.dark);
    for (std::size_t px = 0; px < light.pixel_count(); ++px) {
      if (a.illumination[px] < 0.05f) continue;
      ratio_sum += static_cast<double>(b.illumination[px]) / a.illumination[px];
      ++ratio_n;
      bias_sum += static_cast<double>(b.reflectance[3 * px]) - a.reflectance[3 * px];
      ++bias_n;
    }
  }
  const double ratio = ratio_sum / static_cast<double>(ratio_n);
  const double bias = bias_sum / static_cast<double>(bias_n);
  const bool pass = std::abs(ratio - cam.ratio) <= 0.1 * cam.ratio && std::abs(bias - 0.05) <= 0.02;
  return {pass, fmt("illumination ratio %.4f (0.3 +- 10%%), red reflectance bias %.4f (0.05 +- 0.02)", ratio, bias)};
}

// 6. Brightening invariant.
Outcome brightening() {
  Rng rng(606);
  std::uniform_int_distribution<int> side(8, 40);
  std::uniform_real_distribution<double> dm(-1.0, 1.0);
  int violations = 0;
  int not_brighter = 0;
  for (int t = 0; t < 50; ++t) {
    NetConfig cfg = NetConfig::toy();
    cfg.seed = 1000 + static_cast<std::uint64_t>(t);
    const BrightNet net(cfg);
    const Image dark = random_image(rng, side(rng), side(rng), 0.0f, 0.8f);
    const EnhanceResult r = net.enhance(dark, dm(rng));
    for (std::size_t i = 0; i < dark.values().size(); ++i) {
      if (r.output.values()[i] < dark.values()[i]) ++violations;
    }
    if (!(mean_lightness(r.output) > mean_lightness(dark))) ++not_brighter;
  }
  return {violations == 0 && not_brighter == 0,
          fmt("50 nets: %d elements below input, %d outputs not brighter", violations, not_brighter)};
}

// 7. Conditioning plumbing.
Outcome conditioning() {
  Rng rng(707);
  NetConfig cfg = NetConfig::toy();
  cfg.seed = 77;
  const BrightNet net(cfg);
  const Image dark = random_image(rng, 32, 40, 0.0f, 0.5f);
  const double diff = max_abs_diff(net.enhance(dark, 0.1).output, net.enhance(dark, 0.9).output);
  std::vector<std::vector<float>> codes;
  for (int i = 0; i <= 100; ++i) codes.push_back(embed_lightness(i / 100.0, cfg.embed_dim));
  int collisions = 0;
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i + 1; j < codes.size(); ++j)
      if (codes[i] == codes[j]) ++collisions;
  return {diff > 1e-6 && collisions == 0,
          fmt("max |out(0.1) - out(0.9)| %.4g (> 1e-6); %d embedding collisions on 101 points", diff, collisions)};
}

struct Scores {
  double psnr = 0.0;
  double delta_e = 0.0;
};

// 8. Desk-scale end to end.
Outcome end_to_end() {
  Rng rng(808);
  CameraModel cam;
  cam.noise = 0.01;
  cam.quantize = true;
  std::vector<ImagePair> real;
  std::vector<ImagePair> held_out;
  for (int i = 0; i < 8; ++i) real.push_back(camera_pair(smooth_scene(rng, 100, 128), cam, rng));
  for (int i = 0; i < 4; ++i) held_out.push_back(camera_pair(smooth_scene(rng, 100, 128), cam, rng));
  std::vector<Image> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(quantize(smooth_scene(rng, 160, 160)));

  const auto t0 = std::chrono::steady_clock::now();
  const IlluminationStats stats = fit_stats(real);
  MDNConfig mcfg = MDNConfig::toy();
  mcfg.epochs = 200;
  mcfg.seed = derive_seed(8, "mdn");
  const MDNParams mdn = train_mdn(real, mcfg).params;

  NetConfig ncfg = NetConfig::toy();
  ncfg.seed = derive_seed(8, "net");
  DimConfig dcfg;
  dcfg.seed = derive_seed(8, "dim");
  LossConfig loss;
  loss.lambda = 0.0;

  TrainConfig un = TrainConfig::unsupervised();
  un.max_iters = 500;
  un.crop_size = 128;
  un.learning_rate = 1e-3;
  un.val_interval = 100;
  un.early_stop_patience = 100;
  un.seed = derive_seed(8, "train");
  const TrainResult stage1 = train_unsupervised(BrightNet(ncfg), ImageSource::from_images(corpus), mdn, stats,
                                                dcfg, un, loss, real);

  TrainConfig ft = TrainConfig::finetuning();
  ft.max_iters = 200;
  ft.crop_size = 96;
  ft.learning_rate = 5e-4;
  ft.val_interval = 50;
  ft.early_stop_patience = 100;
  ft.seed = derive_seed(8, "finetune");
  const TrainResult stage2 = finetune(stage1.best, real, ft, loss, real);
  const double dt = seconds_since(t0);

  Scores net, dark, heq;
  for (const auto& p : held_out) {
    const double dm = mean_lightness(p.light) - mean_lightness(p.dark);
    const Image out = stage2.best.enhance(p.dark, dm).output;
    const Image eq = hist_equalize(p.dark);
    net.psnr += psnr(out, p.light);
    net.delta_e += delta_e(out, p.light);
    dark.psnr += psnr(p.dark, p.light);
    dark.delta_e += delta_e(p.dark, p.light);
    heq.psnr += psnr(eq, p.light);
    heq.delta_e += delta_e(eq, p.light);
  }
  const double n = static_cast<double>(held_out.size());
  for (Scores* s : {&net, &dark, &heq}) {
    s->psnr /= n;
    s->delta_e /= n;
  }
  const bool pass = net.psnr > dark.psnr && net.psnr > heq.psnr && net.delta_e < dark.delta_e &&
                    net.delta_e < heq.delta_e;
  return {pass, fmt("held-out PSNR/DeltaE: net %.2f/%.2f, dark %.2f/%.2f, hist-eq %.2f/%.2f "
                    "(8 pairs, 500+200 iterations, %.0f s)",
                    net.psnr, net.delta_e, dark.psnr, dark.delta_e, heq.psnr, heq.delta_e, dt)};
}

// 9. Metric unit anchors.
Outcome metric_anchors() {
  Rng rng(909);
  const Image a = random_image(rng, 32, 32, 0.0f, 0.9f);
  Field shifted = a.field();
  for (auto& v : shifted.values()) v += 0.1f;
  const Image b = Image::from_field(std::move(shifted));
  const double p = psnr(a, b);
  const double same = ssim_gray(a, a);
  double ssim_err = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Image x = random_image(rng, 24, 30);
    const Image y = random_image(rng, 24, 30);
    ssim_err = std::max(ssim_err, std::abs(ssim_gray(x, y) - naive_ssim(luma(x), luma(y), 24, 30)));
  }
  const double de = delta_e(Image(4, 4, 1.0f), Image(4, 4, 0.0f));
  const bool pass = std::abs(p - 20.0) <= 1e-6 && std::abs(same - 1.0) <= 1e-12 && ssim_err <= 1e-6 &&
                    std::abs(de - 100.0) <= 1e-6;
  return {pass, fmt("psnr %.9f (20 +- 1e-6), ssim(x,x) %.12f, ssim vs oracle %.2g (<= 1e-6), "
                    "delta_e(white,black) %.9f (100 +- 1e-6)",
                    p, same, ssim_err, de)};
}

// CLI helpers for 10 and 11.
struct Run {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const fs::path& scratch, const std::string& args) {
  const fs::path out = scratch / "stdout.txt";
  const std::string cmd = std::string(DIMMA_CLI_PATH) + " " + args + " >" + out.string() + " 2>" +
                          (scratch / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

struct CliFixture {
  fs::path pairs, test, light, config;
};

CliFixture make_cli_fixture(const fs::path& root, const std::string& extra_config = "") {
  Rng rng(1111);
  CameraModel cam;
  cam.noise = 0.01;
  cam.quantize = true;
  CliFixture f{root / "pairs", root / "test", root / "light", root / "cfg.json"};
  for (int i = 0; i < 3; ++i) {
    const auto p = camera_pair(smooth_scene(rng, 48, 64), cam, rng);
    write_png(f.pairs / "high", "p" + std::to_string(i) + ".png", p.light);
    write_png(f.pairs / "low", "p" + std::to_string(i) + ".png", p.dark);
  }
  for (int i = 0; i < 2; ++i) {
    const auto p = camera_pair(smooth_scene(rng, 48, 64), cam, rng);
    write_png(f.test / "high", "t" + std::to_string(i) + ".png", p.light);
    write_png(f.test / "low", "t" + std::to_string(i) + ".png", p.dark);
  }
  for (int i = 0; i < 4; ++i) write_png(f.light, "l" + std::to_string(i) + ".png", smooth_scene(rng, 64, 64));
  std::ofstream(f.config) << R"({
    "preset": "toy",
    "mdn": {"epochs": 30},
    "train": {"crop_size": 32, "batch_size": 2, "max_iters": 6, "val_interval": 3, "learning_rate": 0.001},
    "finetune": {"crop_size": 32, "batch_size": 2, "max_iters": 6, "val_interval": 3, "learning_rate": 0.001},
    "loss": {"lambda": 0.0})" + extra_config + "}";
  return f;
}

std::string with_dim_mode(const CliFixture& f, const fs::path& target, const std::string& mode) {
  std::string text = slurp(f.config);
  text.insert(text.rfind('}'), ",\n    \"dim\": {\"mode\": \"" + mode + "\"}\n");
  std::ofstream(target) << text;
  return target.string();
}

// 10. Ablation harness.
Outcome ablations() {
  TempDir dir;
  const CliFixture f = make_cli_fixture(dir.path());
  const fs::path scratch = dir.path();
  const std::string seed = " --seed 5";
  double gap = 0.0;
  for (const auto& name : {"t0.png", "t1.png"}) {
    gap += mean_lightness(load_image(f.test / "high" / name)) - mean_lightness(load_image(f.test / "low" / name));
  }
  const std::string lightness = fmt("%.6f", gap / 2.0);

  std::vector<std::string> failures;
  auto step = [&](const std::string& what, const std::string& args) {
    if (cli(scratch, args).code != 0) failures.push_back(what);
  };
  const std::string base = " --config " + f.config.string() + seed;
  step("fit-dim", "fit-dim" + base + " --pairs " + f.pairs.string() + " --out " + (dir / "dim").string());
  step("build-corpus", "build-corpus --root " + f.light.string() + " --out " + (dir / "corpus.txt").string());

  std::map<std::string, fs::path> reports;
  for (const std::string mode : {"stochastic", "expectation"}) {
    const std::string cfg = " --config " + with_dim_mode(f, dir / (mode + ".json"), mode) + seed;
    const fs::path work = dir / mode;
    step(mode + " train", "train" + cfg + " --corpus " + (dir / "corpus.txt").string() + " --dim " +
                              (dir / "dim").string() + " --val " + f.pairs.string() + " --out " +
                              (work / "train").string());
    step(mode + " finetune", "finetune" + cfg + " --pairs " + f.pairs.string() + " --ckpt " +
                                 (work / "train" / "best.ckpt").string() + " --val " + f.pairs.string() +
                                 " --out " + (work / "ft").string());
    reports[mode] = work / "report.csv";
  }
  // Supervised only: no dimming, no unsupervised stage.
  const fs::path sup = dir / "supervised";
  step("supervised finetune", "finetune" + base + " --pairs " + f.pairs.string() + " --val " + f.pairs.string() +
                                  " --out " + (sup / "ft").string());
  reports["supervised"] = sup / "report.csv";

  std::string table;
  std::string header;
  std::size_t rows = 0;
  bool comparable = true;
  for (const auto& [mode, csv] : reports) {
    const fs::path work = csv.parent_path();
    step(mode + " enhance", "enhance" + base + " --input " + (f.test / "low").string() + " --ckpt " +
                                (work / "ft" / "best.ckpt").string() + " --lightness " + lightness + " --out " +
                                (work / "pred").string());
    const Run ev = cli(scratch, "eval" + base + " --pred " + (work / "pred").string() + " --gt " +
                                    (f.test / "high").string() + " --out " + csv.string());
    if (ev.code != 0) {
      failures.push_back(mode + " eval");
      continue;
    }
    std::istringstream text(slurp(csv));
    std::string first;
    std::getline(text, first);
    std::size_t n = 0;
    for (std::string line; std::getline(text, line);) {
      if (!line.empty() && line.rfind("mean,", 0) != 0 && line.rfind("std,", 0) != 0) ++n;
    }
    if (header.empty()) {
      header = first;
      rows = n;
    } else if (first != header || n != rows) {
      comparable = false;
    }
    if (!fs::exists(fs::path(csv).replace_extension(".md"))) comparable = false;
    std::string summary = ev.out;
    while (!summary.empty() && summary.back() == '\n') summary.pop_back();
    table += " | " + mode + ": " + summary;
  }
  std::string failed;
  for (const auto& s : failures) failed += " " + s;
  const bool pass = failures.empty() && comparable && rows == 2;
  return {pass, (failures.empty() ? std::string("all modes ran") : "failed:" + failed) +
                    (comparable ? ", reports comparable" : ", reports differ in shape") + table};
}

using Snapshot = std::map<std::string, std::string>;

Snapshot snapshot(const fs::path& p) {
  Snapshot s;
  if (fs::is_regular_file(p)) {
    s[p.filename().string()] = slurp(p);
  } else if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) s[fs::relative(e.path(), p).string()] = slurp(e.path());
    }
  }
  return s;
}

// 11. Reproducibility of every CLI command.
Outcome reproducibility() {
  TempDir dir;
  const CliFixture f = make_cli_fixture(dir.path());
  const fs::path scratch = dir.path();
  const std::string base = " --config " + f.config.string() + " --seed 9";
  const fs::path dim = dir / "dim";
  const fs::path corpus = dir / "corpus.txt";
  struct Step {
    std::string name;
    std::string args;
    fs::path artifact;
  };
  const std::vector<Step> steps = {
      {"fit-dim", "fit-dim" + base + " --pairs " + f.pairs.string() + " --out " + dim.string(), dim},
      {"dim", "dim" + base + " --input " + f.light.string() + " --dim " + dim.string() + " --out " +
                  (dir / "dark").string(),
       dir / "dark"},
      {"build-corpus", "build-corpus" + base + " --root " + f.light.string() + " --out " + corpus.string(), corpus},
      {"train", "train" + base + " --corpus " + corpus.string() + " --dim " + dim.string() + " --val " +
                    f.pairs.string() + " --out " + (dir / "train").string(),
       dir / "train"},
      {"finetune", "finetune" + base + " --pairs " + f.pairs.string() + " --ckpt " +
                       (dir / "train" / "best.ckpt").string() + " --val " + f.pairs.string() + " --out " +
                       (dir / "ft").string(),
       dir / "ft"},
      {"enhance", "enhance" + base + " --input " + (f.test / "low").string() + " --ckpt " +
                      (dir / "ft" / "best.ckpt").string() + " --lightness 0.2 --out " + (dir / "pred").string(),
       dir / "pred"},
      {"eval", "eval" + base + " --pred " + (dir / "pred").string() + " --gt " + (f.test / "high").string() +
                   " --out " + (dir / "report" / "m.csv").string(),
       dir / "report"},
      {"inspect-mdn", "inspect-mdn" + base + " --mdn " + (dim / "mdn.ckpt").string() +
                          " --probe 1,1,1,0.5,0.15 --out " + (dir / "pdf.csv").string(),
       dir / "pdf.csv"},
  };
  std::string failed;
  for (const Step& s : steps) {
    if (cli(scratch, s.args).code != 0) {
      failed += " " + s.name + "(exit)";
      continue;
    }
    const Snapshot first = snapshot(s.artifact);
    fs::remove_all(s.artifact);
    const bool rerun = cli(scratch, s.args).code == 0;
    const Snapshot second = snapshot(s.artifact);
    if (!rerun || first.empty() || first != second) failed += " " + s.name;
  }
  return {failed.empty(), failed.empty() ? fmt("%zu commands rerun, artifacts byte-identical", steps.size())
                                         : "differs or failed:" + failed};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"retinex exactness", retinex_exactness},
      {"MDN analytics", mdn_analytics},
      {"MDN recovery", mdn_recovery},
      {"illumination statistics", illumination_stats},
      {"dimming fidelity", dimming_fidelity},
      {"brightening invariant", brightening},
      {"conditioning plumbing", conditioning},
      {"desk-scale end-to-end", end_to_end},
      {"metric unit anchors", metric_anchors},
      {"ablation harness", ablations},
      {"CLI reproducibility", reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected.insert(id);
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
