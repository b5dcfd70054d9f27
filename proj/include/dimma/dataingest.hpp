#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dimma/image.hpp"

namespace dimma {

struct PairPaths {
  std::filesystem::path light;
  std::filesystem::path dark;
  std::string filename;
};

// LOL / FS-Dark layout: root/high/<name> (light) and root/low/<name> (dark).
struct PairedDataset {
  std::string name;
  std::vector<PairPaths> pairs;
  std::vector<std::string> warnings;
};

// Throws Error(kMissingSubdir), Error(kDimensionMismatch), Error(kEmptyDataset).
PairedDataset load_paired(const std::filesystem::path& root);

// Ordered subset by file name. Throws Error(kUnknownFilename).
PairedDataset select_subset(const PairedDataset& ds, std::span<const std::string> filenames);

// One file name per line; blank lines and '#' comments ignored.
std::vector<std::string> read_subset_file(const std::filesystem::path& path);

std::vector<ImagePair> load_pair_images(const PairedDataset& ds);

struct Size2 {
  int width = 0;
  int height = 0;
  friend bool operator==(const Size2&, const Size2&) = default;
};

struct CorpusFilter {
  int min_width = 0;
  int min_height = 0;
  std::optional<int> max_width;
  std::optional<int> max_height;
  std::optional<double> resize_factor;  // (0, 1]
  std::optional<Size2> center_crop;
  bool reject_white_background = false;
  double white_threshold = 0.95;
  int white_frame = 16;

  // Throws Error(kInvalidConfig).
  void validate() const;
};

// Applied in order: resize, then center crop.
struct Transform {
  std::optional<Size2> resize;
  std::optional<Size2> crop;

  // "none", "resize=WxH", "crop=WxH" or "resize=WxH;crop=WxH".
  std::string to_string() const;
  static Transform parse(const std::string& spec);
  friend bool operator==(const Transform&, const Transform&) = default;
};

struct CorpusEntry {
  std::filesystem::path path;
  Transform transform;
};

struct CorpusRejection {
  std::filesystem::path path;
  std::string reason;
};

struct CorpusManifest {
  std::vector<CorpusEntry> entries;
  std::vector<CorpusRejection> rejected;
};

// True when the mean Rec.601 luma of the border frame exceeds the threshold.
bool has_white_background(const Image& img, int frame, double threshold);

// Walks each root recursively in sorted order and keeps the images that pass
// the root's filter (dimension gates, then transforms, then white-background
// rejection). Dimension gates are inclusive.
CorpusManifest build_corpus(std::span<const std::pair<std::filesystem::path, CorpusFilter>> roots);

// Lines "path transform-spec".
void write_corpus_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_corpus_manifest(const std::filesystem::path& path);

Image apply_transform(const Image& img, const Transform& t);
Image load_corpus_entry(const CorpusEntry& entry);

}  // namespace dimma
