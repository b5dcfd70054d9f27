// dimma: fit the dimming module, synthesize dark images, train and finetune
// the brightener, enhance, evaluate.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dimma/brightnet.hpp"
#include "dimma/config.hpp"
#include "dimma/dataingest.hpp"
#include "dimma/dimmer.hpp"
#include "dimma/errors.hpp"
#include "dimma/illumstats.hpp"
#include "dimma/mdn.hpp"
#include "dimma/metrics.hpp"
#include "dimma/trainer.hpp"

namespace fs = std::filesystem;
using namespace dimma;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "master seed (overrides the config)");
}

RunConfig resolve(const Common& common, const char* command) {
  RunConfig cfg = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  if (common.seed) cfg.seed = *common.seed;
  cfg.derive_seeds();
  cfg.validate();
  std::cerr << "[dimma " << command << "] resolved config:\n" << to_json(cfg) << '\n';
  return cfg;
}

std::string path_or(const std::string& flag, const RunConfig& cfg, const char* key) {
  if (!flag.empty()) return flag;
  const auto it = cfg.paths.find(key);
  if (it == cfg.paths.end()) throw UsageError(std::string("--") + key + " is required");
  return it->second;
}

std::vector<ImagePair> load_pairs(const std::string& root, const std::string& subset) {
  PairedDataset ds = load_paired(root);
  if (!subset.empty()) {
    const auto names = read_subset_file(subset);
    ds = select_subset(ds, names);
  }
  return load_pair_images(ds);
}

class Timer {
 public:
  explicit Timer(std::string what) : what_(std::move(what)), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    std::fprintf(stderr, "[dimma] %s took %.2f s\n", what_.c_str(), dt.count());
  }

 private:
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

// fit-dim
struct FitDimArgs {
  Common common;
  std::string pairs, subset, out;
};

int fit_dim(const FitDimArgs& a) {
  RunConfig cfg = resolve(a.common, "fit-dim");
  const fs::path out = path_or(a.out, cfg, "out");
  const auto pairs = load_pairs(path_or(a.pairs, cfg, "pairs"), a.subset.empty() ? (cfg.paths.contains("subset") ? cfg.paths.at("subset") : "") : a.subset);
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no pairs selected");
  std::cerr << "fitting on " << pairs.size() << " pairs\n";
  fs::create_directories(out);

  Timer timer("fit-dim");
  const IlluminationStats stats = fit_stats(pairs);
  const MDNTrainResult trained = train_mdn(pairs, cfg.mdn);
  save_stats(stats, out / "stats.txt");
  save_mdn(trained.params, out / "mdn.ckpt");
  std::printf("final NLL: %.6f\n", trained.loss_history.back());
  std::printf("best NLL: %.6f (epoch %d)\n", trained.loss_history[static_cast<std::size_t>(trained.best_epoch)],
              trained.best_epoch + 1);
  return 0;
}

// dim
struct DimArgs {
  Common common;
  std::string input, dim, out;
  std::optional<double> gamma, alpha;
};

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kFileNotFound, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (!has_image_extension(e.path())) {
      std::cerr << "warning: skipping non-image file " << e.path().string() << '\n';
      continue;
    }
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int dim(const DimArgs& a) {
  RunConfig cfg = resolve(a.common, "dim");
  if (a.gamma) cfg.dim.gamma_min = cfg.dim.gamma_max = *a.gamma;
  if (a.alpha) cfg.dim.alpha = *a.alpha;
  cfg.dim.validate();
  const fs::path dim_dir = path_or(a.dim, cfg, "dim");
  const IlluminationStats stats = load_stats(dim_dir / "stats.txt");
  const MDNParams mdn = load_mdn(dim_dir / "mdn.ckpt");

  std::vector<CorpusImage> corpus;
  for (const auto& f : image_files(path_or(a.input, cfg, "input"))) {
    corpus.push_back({f.stem().string(), f, load_image(f)});
  }
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "no images in input directory");
  const fs::path out = path_or(a.out, cfg, "out");
  fs::create_directories(out);
  Timer timer("dim");
  const auto records = dim_corpus(corpus, mdn, stats, cfg.dim, out);
  std::printf("dimmed %zu images\n", records.size());
  return 0;
}

// train / finetune
struct TrainArgs {
  Common common;
  std::string corpus, dim, pairs, subset, ckpt, val, out;
};

int train(const TrainArgs& a) {
  RunConfig cfg = resolve(a.common, "train");
  const fs::path dim_dir = path_or(a.dim, cfg, "dim");
  const IlluminationStats stats = load_stats(dim_dir / "stats.txt");
  const MDNParams mdn = load_mdn(dim_dir / "mdn.ckpt");
  const CorpusManifest manifest = read_corpus_manifest(path_or(a.corpus, cfg, "corpus"));
  if (manifest.entries.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus manifest has no entries");
  const auto val = load_pairs(path_or(a.val, cfg, "val"), "");
  const fs::path out = path_or(a.out, cfg, "out");
  fs::create_directories(out);

  ImageSource source{manifest.entries.size(),
                     [entries = manifest.entries](std::size_t i) { return load_corpus_entry(entries.at(i)); }};
  Timer timer("train");
  const BrightNet net = a.ckpt.empty() ? build_unet(cfg.net) : BrightNet::load(a.ckpt);
  TrainResult r = train_unsupervised(net, source, mdn, stats, cfg.dim, cfg.train, cfg.loss, val);
  r.best.save(out / "best.ckpt");
  save_history(r.history, out / "history.txt");
  std::printf("best iteration %d", r.history.best_iter);
  if (r.history.best_val_psnr) std::printf(", validation PSNR %.4f", *r.history.best_val_psnr);
  std::printf("\n");
  return 0;
}

int finetune_cmd(const TrainArgs& a) {
  RunConfig cfg = resolve(a.common, "finetune");
  const auto pairs = load_pairs(path_or(a.pairs, cfg, "pairs"), a.subset.empty() ? (cfg.paths.contains("subset") ? cfg.paths.at("subset") : "") : a.subset);
  const auto val = load_pairs(path_or(a.val, cfg, "val"), "");
  const fs::path out = path_or(a.out, cfg, "out");
  fs::create_directories(out);
  std::string ckpt = a.ckpt;
  if (ckpt.empty() && cfg.paths.contains("ckpt")) ckpt = cfg.paths.at("ckpt");
  if (ckpt.empty()) std::cerr << "no --ckpt given: finetuning a freshly initialized net (supervised only)\n";

  Timer timer("finetune");
  const BrightNet net = ckpt.empty() ? build_unet(cfg.net) : BrightNet::load(ckpt);
  TrainResult r = finetune(net, pairs, cfg.finetune, cfg.loss, val);
  r.best.save(out / "best.ckpt");
  save_history(r.history, out / "history.txt");
  std::printf("best iteration %d", r.history.best_iter);
  if (r.history.best_val_psnr) std::printf(", validation PSNR %.4f", *r.history.best_val_psnr);
  std::printf("\n");
  return 0;
}

// enhance
struct EnhanceArgs {
  Common common;
  std::string input, ckpt, out;
  double lightness = 0.0;
};

int enhance(const EnhanceArgs& a) {
  RunConfig cfg = resolve(a.common, "enhance");
  const fs::path input = path_or(a.input, cfg, "input");
  const BrightNet net = BrightNet::load(path_or(a.ckpt, cfg, "ckpt"));
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    files = image_files(input);
  } else if (fs::exists(input)) {
    files.push_back(input);
  } else {
    throw Error(ErrorCode::kFileNotFound, input.string());
  }
  const fs::path out = path_or(a.out, cfg, "out");
  fs::create_directories(out);
  Timer timer("enhance");
  for (const auto& f : files) {
    const Image dark = load_image(f);
    const EnhanceResult r = net.enhance(dark, a.lightness);
    fs::path target = out / f.filename();
    target.replace_extension(".png");
    save_image(r.output, target);
    std::cerr << f.string() << " -> " << target.string() << '\n';
  }
  return 0;
}

// eval
struct EvalArgs {
  Common common;
  std::string pred, gt, out;
};

int eval(const EvalArgs& a) {
  RunConfig cfg = resolve(a.common, "eval");
  const MetricReport report = evaluate_dir(path_or(a.pred, cfg, "pred"), path_or(a.gt, cfg, "gt"));
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  fs::path csv = path_or(a.out, cfg, "out");
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  {
    std::ofstream out(csv, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIO, "cannot write " + csv.string());
    write_csv(report, out);
  }
  fs::path md = csv;
  md.replace_extension(".md");
  {
    std::ofstream out(md, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIO, "cannot write " + md.string());
    write_markdown(report, out);
  }
  std::printf("%zu pairs: PSNR %.4f, SSIM %.4f, DeltaE %.4f\n", report.rows.size(), report.aggregate.at("psnr").mean,
              report.aggregate.at("ssim_gray").mean, report.aggregate.at("delta_e").mean);
  return 0;
}

// inspect-mdn
struct InspectArgs {
  Common common;
  std::string mdn, probe, out;
};

std::array<double, kMdnInputs> parse_probe(const std::string& text) {
  std::array<double, kMdnInputs> probe{};
  std::stringstream ss(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == probe.size()) throw UsageError("--probe takes exactly 5 comma-separated numbers");
    std::size_t used = 0;
    try {
      probe[n] = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(probe[n])) throw UsageError("bad --probe value '" + item + "'");
    ++n;
  }
  if (n != probe.size()) throw UsageError("--probe takes exactly 5 comma-separated numbers");
  return probe;
}

int inspect_mdn(const InspectArgs& a) {
  const auto probe = parse_probe(a.probe);
  RunConfig cfg = resolve(a.common, "inspect-mdn");
  const MDNParams params = load_mdn(path_or(a.mdn, cfg, "mdn"));
  std::vector<double> offsets;
  for (int i = 0; i <= 200; ++i) offsets.push_back((i - 100) / 100.0);
  const fs::path out = path_or(a.out, cfg, "out");
  std::ofstream csv(out, std::ios::trunc);
  if (!csv) throw Error(ErrorCode::kIO, "cannot write " + out.string());
  csv << "channel,offset,value,density\n";
  char buf[128];
  for (int c = 0; c < 3; ++c) {
    std::vector<double> grid;
    for (double o : offsets) grid.push_back(probe[static_cast<std::size_t>(c)] + o);
    const auto curve = mdn_pdf_curve(params, probe, c, grid);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%d,%.2f,%.9g,%.9g\n", c, offsets[i], curve[i].value, curve[i].density);
      csv << buf;
    }
  }
  return 0;
}

// build-corpus
struct CorpusArgs {
  Common common;
  std::vector<std::string> roots;
  std::string out, min_size, max_size, center_crop;
  std::optional<double> resize;
  bool reject_white = false;
};

Size2 parse_size(const std::string& text, const char* flag) {
  Size2 s;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> s.width >> x >> s.height) || x != 'x' || !in.eof() || s.width < 1 || s.height < 1) {
    throw UsageError(std::string(flag) + " expects WxH");
  }
  return s;
}

int build_corpus_cmd(const CorpusArgs& a) {
  resolve(a.common, "build-corpus");
  CorpusFilter filter;
  if (!a.min_size.empty()) {
    const Size2 s = parse_size(a.min_size, "--min-size");
    filter.min_width = s.width;
    filter.min_height = s.height;
  }
  if (!a.max_size.empty()) {
    const Size2 s = parse_size(a.max_size, "--max-size");
    filter.max_width = s.width;
    filter.max_height = s.height;
  }
  if (!a.center_crop.empty()) filter.center_crop = parse_size(a.center_crop, "--center-crop");
  filter.resize_factor = a.resize;
  filter.reject_white_background = a.reject_white;
  try {
    filter.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::vector<std::pair<fs::path, CorpusFilter>> roots;
  for (const auto& r : a.roots) roots.emplace_back(r, filter);
  const CorpusManifest manifest = build_corpus(roots);
  for (const auto& r : manifest.rejected) std::cerr << "rejected " << r.path.string() << ": " << r.reason << '\n';
  write_corpus_manifest(manifest, a.out);
  std::printf("%zu accepted, %zu rejected\n", manifest.entries.size(), manifest.rejected.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dimma: few-shot low-light enhancement"};
  app.require_subcommand(1);

  FitDimArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit-dim", "fit illumination statistics and the MDN on paired data");
  add_common(fit_cmd, fit_args.common);
  fit_cmd->add_option("--pairs", fit_args.pairs, "dataset root with low/ and high/");
  fit_cmd->add_option("--subset", fit_args.subset, "file listing the pair names to use")->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit_args.out, "output directory");

  DimArgs dim_args;
  auto* dim_cmd = app.add_subcommand("dim", "synthesize dark images from a folder of light images");
  add_common(dim_cmd, dim_args.common);
  dim_cmd->add_option("--input", dim_args.input, "folder of light images");
  dim_cmd->add_option("--dim", dim_args.dim, "directory written by fit-dim");
  dim_cmd->add_option("--out", dim_args.out, "output directory");
  dim_cmd->add_option("--gamma", dim_args.gamma, "fixed dimming factor")->check(CLI::PositiveNumber);
  dim_cmd->add_option("--alpha", dim_args.alpha, "sampling temperature")->check(CLI::Range(0.0, 1.0));

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "unsupervised training on a dimmed corpus");
  add_common(train_cmd, train_args.common);
  train_cmd->add_option("--corpus", train_args.corpus, "corpus manifest")->check(CLI::ExistingFile);
  train_cmd->add_option("--dim", train_args.dim, "directory written by fit-dim");
  train_cmd->add_option("--val", train_args.val, "validation pairs root");
  train_cmd->add_option("--ckpt", train_args.ckpt, "start from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "output directory");

  TrainArgs ft_args;
  auto* ft_cmd = app.add_subcommand("finetune", "finetune on real pairs");
  add_common(ft_cmd, ft_args.common);
  ft_cmd->add_option("--pairs", ft_args.pairs, "dataset root with low/ and high/");
  ft_cmd->add_option("--subset", ft_args.subset, "file listing the pair names to use")->check(CLI::ExistingFile);
  ft_cmd->add_option("--ckpt", ft_args.ckpt, "checkpoint from train (omit for supervised-only)")
      ->check(CLI::ExistingFile);
  ft_cmd->add_option("--val", ft_args.val, "validation pairs root");
  ft_cmd->add_option("--out", ft_args.out, "output directory");

  EnhanceArgs enh_args;
  auto* enh_cmd = app.add_subcommand("enhance", "brighten images at a requested lightness gain");
  add_common(enh_cmd, enh_args.common);
  enh_cmd->add_option("--input", enh_args.input, "image file or folder");
  enh_cmd->add_option("--ckpt", enh_args.ckpt, "UNet checkpoint");
  enh_cmd->add_option("--out", enh_args.out, "output directory");
  enh_cmd->add_option("--lightness", enh_args.lightness, "target lightness gain in [-1, 1]")
      ->required()
      ->check(CLI::Range(-1.0, 1.0));

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM / DeltaE report");
  add_common(eval_cmd, eval_args.common);
  eval_cmd->add_option("--pred", eval_args.pred, "predicted images");
  eval_cmd->add_option("--gt", eval_args.gt, "ground-truth images");
  eval_cmd->add_option("--out", eval_args.out, "CSV path; a .md report is written alongside");

  InspectArgs insp_args;
  auto* insp_cmd = app.add_subcommand("inspect-mdn", "dump MDN densities for a probe pixel");
  add_common(insp_cmd, insp_args.common);
  insp_cmd->add_option("--mdn", insp_args.mdn, "MDN checkpoint");
  insp_cmd->add_option("--probe", insp_args.probe, "r,g,b,l,ld")->required();
  insp_cmd->add_option("--out", insp_args.out, "CSV path");

  CorpusArgs corpus_args;
  auto* corpus_cmd = app.add_subcommand("build-corpus", "filter image folders into a corpus manifest");
  add_common(corpus_cmd, corpus_args.common);
  corpus_cmd->add_option("--root", corpus_args.roots, "image folder (repeatable)")->required();
  corpus_cmd->add_option("--out", corpus_args.out, "manifest path")->required();
  corpus_cmd->add_option("--min-size", corpus_args.min_size, "minimum WxH");
  corpus_cmd->add_option("--max-size", corpus_args.max_size, "maximum WxH");
  corpus_cmd->add_option("--resize", corpus_args.resize, "resize factor in (0, 1]");
  corpus_cmd->add_option("--center-crop", corpus_args.center_crop, "center crop WxH");
  corpus_cmd->add_flag("--reject-white", corpus_args.reject_white, "drop images with a white border frame");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit_cmd) return fit_dim(fit_args);
    if (*dim_cmd) return dim(dim_args);
    if (*train_cmd) return train(train_args);
    if (*ft_cmd) return finetune_cmd(ft_args);
    if (*enh_cmd) return enhance(enh_args);
    if (*eval_cmd) return eval(eval_args);
    if (*insp_cmd) return inspect_mdn(insp_args);
    if (*corpus_cmd) return build_corpus_cmd(corpus_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kInvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
