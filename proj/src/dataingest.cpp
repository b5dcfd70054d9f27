#include "dimma/dataingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "dimma/errors.hpp"

namespace dimma {

namespace fs = std::filesystem;

namespace {

std::set<std::string> image_files(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      out.insert(entry.path().filename().string());
    }
  }
  return out;
}

cv::Mat to_mat(const Image& img) {
  cv::Mat m(img.height(), img.width(), CV_32FC3);
  for (int y = 0; y < img.height(); ++y) {
    float* row = m.ptr<float>(y);
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) row[3 * x + c] = img.at(y, x, c);
  }
  return m;
}

Image from_mat(const cv::Mat& m) {
  Field f(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const float* row = m.ptr<float>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = row[3 * x + c];
  }
  return Image::clamped(std::move(f));
}

Size2 parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw Error(ErrorCode::kFormat, "bad size '" + s + "'");
  try {
    Size2 out{std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    if (out.width < 1 || out.height < 1) throw Error(ErrorCode::kFormat, "bad size '" + s + "'");
    return out;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kFormat, "bad size '" + s + "'");
  }
}

std::string size_string(const Size2& s) { return std::to_string(s.width) + "x" + std::to_string(s.height); }

}  // namespace

PairedDataset load_paired(const fs::path& root) {
  const fs::path low = root / "low";
  const fs::path high = root / "high";
  for (const fs::path& sub : {low, high}) {
    if (!fs::is_directory(sub)) throw Error(ErrorCode::kMissingSubdir, sub.string());
  }
  PairedDataset ds;
  ds.name = root.filename().string();
  if (ds.name.empty()) ds.name = root.parent_path().filename().string();
  const auto lows = image_files(low);
  const auto highs = image_files(high);
  std::vector<std::string> names;
  for (const auto& n : highs) {
    if (lows.contains(n)) {
      names.push_back(n);
    } else {
      ds.warnings.push_back("skipping " + (high / n).string() + ": no matching low/ file");
    }
  }
  for (const auto& n : lows) {
    if (!highs.contains(n)) ds.warnings.push_back("skipping " + (low / n).string() + ": no matching high/ file");
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw Error(ErrorCode::kEmptyDataset, root.string() + " has no matched pairs");
  for (const auto& n : names) {
    PairPaths p{high / n, low / n, n};
    const Image light = load_image(p.light);
    const Image dark = load_image(p.dark);
    if (light.height() != dark.height() || light.width() != dark.width()) {
      throw Error(ErrorCode::kDimensionMismatch, n + ": high and low sizes differ");
    }
    ds.pairs.push_back(std::move(p));
  }
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
  return ds;
}

PairedDataset select_subset(const PairedDataset& ds, std::span<const std::string> filenames) {
  PairedDataset out;
  out.name = ds.name;
  for (const auto& name : filenames) {
    const auto it = std::find_if(ds.pairs.begin(), ds.pairs.end(),
                                 [&](const PairPaths& p) { return p.filename == name; });
    if (it == ds.pairs.end()) throw Error(ErrorCode::kUnknownFilename, name);
    out.pairs.push_back(*it);
  }
  return out;
}

std::vector<std::string> read_subset_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

std::vector<ImagePair> load_pair_images(const PairedDataset& ds) {
  std::vector<ImagePair> out;
  out.reserve(ds.pairs.size());
  for (const auto& p : ds.pairs) out.push_back({load_image(p.light), load_image(p.dark)});
  return out;
}

void CorpusFilter::validate() const {
  if (min_width < 0 || min_height < 0) throw Error(ErrorCode::kInvalidConfig, "negative minimum size");
  if (max_width && *max_width < min_width) throw Error(ErrorCode::kInvalidConfig, "max_width < min_width");
  if (max_height && *max_height < min_height) throw Error(ErrorCode::kInvalidConfig, "max_height < min_height");
  if (resize_factor && !(*resize_factor > 0.0 && *resize_factor <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "resize_factor outside (0,1]");
  }
  if (center_crop && (center_crop->width < 1 || center_crop->height < 1)) {
    throw Error(ErrorCode::kInvalidConfig, "center crop must be positive");
  }
  if (white_frame < 1) throw Error(ErrorCode::kInvalidConfig, "white_frame must be positive");
}

std::string Transform::to_string() const {
  std::string out;
  if (resize) out += "resize=" + size_string(*resize);
  if (crop) out += (out.empty() ? "" : ";") + std::string("crop=") + size_string(*crop);
  return out.empty() ? "none" : out;
}

Transform Transform::parse(const std::string& spec) {
  Transform t;
  if (spec == "none") return t;
  std::istringstream parts(spec);
  std::string part;
  while (std::getline(parts, part, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kFormat, "bad transform '" + spec + "'");
    const std::string key = part.substr(0, eq);
    const Size2 size = parse_size(part.substr(eq + 1));
    if (key == "resize") {
      t.resize = size;
    } else if (key == "crop") {
      t.crop = size;
    } else {
      throw Error(ErrorCode::kFormat, "unknown transform '" + key + "'");
    }
  }
  return t;
}

bool has_white_background(const Image& img, int frame, double threshold) {
  const int fh = std::min(frame, img.height());
  const int fw = std::min(frame, img.width());
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y) {
    const bool band = y < fh || y >= img.height() - fh;
    for (int x = 0; x < img.width(); ++x) {
      if (!band && x >= fw && x < img.width() - fw) continue;
      sum += 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      ++n;
    }
  }
  return n > 0 && sum / static_cast<double>(n) > threshold;
}

CorpusManifest build_corpus(std::span<const std::pair<fs::path, CorpusFilter>> roots) {
  CorpusManifest manifest;
  for (const auto& [root, filter] : roots) {
    filter.validate();
    std::vector<fs::path> files;
    if (fs::is_directory(root)) {
      for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& file : files) {
      auto reject = [&](std::string reason) { manifest.rejected.push_back({file, std::move(reason)}); };
      Image img;
      try {
        img = load_image(file);
      } catch (const Error& e) {
        reject(e.what());
        continue;
      }
      const int w = img.width();
      const int h = img.height();
      if (w < filter.min_width || h < filter.min_height) {
        reject("smaller than minimum size");
        continue;
      }
      if ((filter.max_width && w > *filter.max_width) || (filter.max_height && h > *filter.max_height)) {
        reject("larger than maximum size");
        continue;
      }
      Transform t;
      Size2 current{w, h};
      if (filter.resize_factor && *filter.resize_factor != 1.0) {
        current = {std::max(1, static_cast<int>(std::lround(w * *filter.resize_factor))),
                   std::max(1, static_cast<int>(std::lround(h * *filter.resize_factor)))};
        t.resize = current;
      }
      if (filter.center_crop) {
        if (current.width < filter.center_crop->width || current.height < filter.center_crop->height) {
          reject("smaller than the center crop");
          continue;
        }
        t.crop = filter.center_crop;
      }
      if (filter.reject_white_background &&
          has_white_background(img, filter.white_frame, filter.white_threshold)) {
        reject("white background");
        continue;
      }
      manifest.entries.push_back({file, t});
    }
  }
  return manifest;
}

void write_corpus_manifest(const CorpusManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIO, "cannot write " + path.string());
  for (const auto& e : manifest.entries) out << e.path.string() << ' ' << e.transform.to_string() << '\n';
  if (!out) throw Error(ErrorCode::kIO, "write failed: " + path.string());
}

CorpusManifest read_corpus_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  CorpusManifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.rfind(' ');
    if (sp == std::string::npos) {
      manifest.entries.push_back({line, Transform{}});
    } else {
      manifest.entries.push_back({line.substr(0, sp), Transform::parse(line.substr(sp + 1))});
    }
  }
  return manifest;
}

Image apply_transform(const Image& img, const Transform& t) {
  Image out = img;
  if (t.resize && (t.resize->width != out.width() || t.resize->height != out.height())) {
    cv::Mat resized;
    cv::resize(to_mat(out), resized, cv::Size(t.resize->width, t.resize->height), 0, 0, cv::INTER_AREA);
    out = from_mat(resized);
  }
  if (t.crop) {
    if (t.crop->width > out.width() || t.crop->height > out.height()) {
      throw Error(ErrorCode::kTooSmall, "center crop larger than image");
    }
    out = crop(out, (out.height() - t.crop->height) / 2, (out.width() - t.crop->width) / 2, t.crop->height,
               t.crop->width);
  }
  return out;
}

Image load_corpus_entry(const CorpusEntry& entry) {
  return apply_transform(load_image(entry.path), entry.transform);
}

}  // namespace dimma
