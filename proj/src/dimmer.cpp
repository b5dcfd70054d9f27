#include "dimma/dimmer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "dimma/errors.hpp"
#include "dimma/retinex.hpp"
#include "parallel.hpp"

namespace dimma {

namespace fs = std::filesystem;

DimmedSample dim_image(const Image& light, const MDNParams& mdn, const IlluminationStats& stats,
                       const DimConfig& config, Rng& rng) {
  config.validate();
  const bool expectation = config.mode == DimMode::kExpectation;
  const double alpha = expectation ? 0.0 : config.alpha;

  const RetinexPair pair = decompose(light);
  std::uniform_real_distribution<double> gamma_dist(config.gamma_min, config.gamma_max);
  const double gamma = config.gamma_min == config.gamma_max ? config.gamma_min : gamma_dist(rng);

  Field dark_l = sample_dim_field(pair.illumination, stats, gamma, alpha, rng, config.ratio_clamp_max);
  const MixtureField mixture = mdn_forward(mdn, pair.reflectance, pair.illumination, dark_l);
  Field dark_r = expectation ? mixture_expectation(mixture, pair.reflectance)
                             : sample_reflectance(mixture, pair.reflectance, alpha, rng);

  DimmedSample out;
  out.dark = recompose(dark_r, dark_l);
  out.dark_reflectance = std::move(dark_r);
  out.dark_illumination = std::move(dark_l);
  out.delta_m = mean_lightness(light) - mean_lightness(out.dark);
  out.gamma_used = gamma;
  return out;
}

std::vector<DimRecord> dim_corpus(std::span<const CorpusImage> corpus, const MDNParams& mdn,
                                  const IlluminationStats& stats, const DimConfig& config,
                                  const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw Error(ErrorCode::kIO, "cannot create " + out_dir.string());

  std::vector<DimRecord> records(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const CorpusImage& item = corpus[i];
    const std::uint64_t seed = config.seed ^ static_cast<std::uint64_t>(i);
    Rng rng(seed);
    const DimmedSample sample = dim_image(item.image, mdn, stats, config, rng);
    const Image dark = quantize(sample.dark);

    DimRecord rec;
    rec.dark_path = out_dir / (item.name + ".png");
    rec.light_path = item.source;
    rec.delta_m = mean_lightness(item.image) - mean_lightness(dark);
    rec.gamma = sample.gamma_used;
    rec.seed = seed;
    save_image(dark, rec.dark_path);

    const nlohmann::ordered_json sidecar = {
        {"light", rec.light_path.string()}, {"dark", rec.dark_path.filename().string()},
        {"delta_m", rec.delta_m},           {"gamma", rec.gamma},
        {"seed", rec.seed}};
    std::ofstream side(out_dir / (item.name + ".json"), std::ios::trunc);
    side << sidecar.dump() << '\n';
    if (!side) throw Error(ErrorCode::kIO, "cannot write sidecar for " + item.name);
    records[i] = std::move(rec);
  });
  write_dim_manifest(records, out_dir / "manifest.txt");
  return records;
}

void write_dim_manifest(std::span<const DimRecord> records, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
  char nums[128];
  for (const DimRecord& r : records) {
    std::snprintf(nums, sizeof nums, "%.17g %.17g %llu", r.delta_m, r.gamma,
                  static_cast<unsigned long long>(r.seed));
    out << r.dark_path.string() << ' ' << r.light_path.string() << ' ' << nums << '\n';
  }
  if (!out) throw Error(ErrorCode::kIO, "write failed: " + path.string());
}

std::vector<DimRecord> read_dim_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::vector<DimRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string dark;
    std::string light;
    DimRecord r;
    unsigned long long seed = 0;
    if (!(row >> dark >> light >> r.delta_m >> r.gamma >> seed)) {
      throw Error(ErrorCode::kFormat, "bad manifest line: " + line);
    }
    r.dark_path = dark;
    r.light_path = light;
    r.seed = seed;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dimma
