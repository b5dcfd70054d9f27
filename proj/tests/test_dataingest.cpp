#include <fstream>
#include <functional>

#include "doctest.h"
#include "dimma/dataingest.hpp"
#include "dimma/errors.hpp"
#include "support.hpp"

using namespace dimma;
using dimma::testing::TempDir;
using dimma::testing::write_png;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kFormat;
}

}  // namespace

TEST_CASE("load_paired matching rule") {
  TempDir dir;
  for (const char* n : {"2.png", "1.png", "10.png"}) {
    write_png(dir / "low", n, Image(4, 5, 0.1f));
    write_png(dir / "high", n, Image(4, 5, 0.7f));
  }
  write_png(dir / "high", "3.png", Image(4, 5, 0.7f));
  std::ofstream(dir / "low" / "notes.txt") << "ignored";
  const PairedDataset ds = load_paired(dir.path());
  REQUIRE(ds.pairs.size() == 3);
  CHECK(ds.pairs[0].filename == "1.png");
  CHECK(ds.pairs[1].filename == "10.png");
  CHECK(ds.pairs[2].filename == "2.png");
  CHECK(ds.pairs[0].light == dir / "high" / "1.png");
  CHECK(ds.pairs[0].dark == dir / "low" / "1.png");
  REQUIRE(ds.warnings.size() == 1);
  CHECK(ds.warnings[0].find("3.png") != std::string::npos);
  const auto imgs = load_pair_images(ds);
  CHECK(imgs.size() == 3);
  CHECK(imgs[0].light.at(0, 0, 0) == doctest::Approx(quantize_u8(0.7f) / 255.0));
}

TEST_CASE("load_paired errors") {
  TempDir dir;
  CHECK(code_of([&] { load_paired(dir.path()); }) == ErrorCode::kMissingSubdir);
  std::filesystem::create_directories(dir / "low");
  std::filesystem::create_directories(dir / "high");
  CHECK(code_of([&] { load_paired(dir.path()); }) == ErrorCode::kEmptyDataset);
  write_png(dir / "low", "a.png", Image(4, 5, 0.1f));
  write_png(dir / "high", "a.png", Image(5, 5, 0.1f));
  CHECK(code_of([&] { load_paired(dir.path()); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("select_subset") {
  TempDir dir;
  for (int i = 1; i <= 8; ++i) {
    write_png(dir / "low", std::to_string(i) + ".png", Image(2, 2, 0.1f));
    write_png(dir / "high", std::to_string(i) + ".png", Image(2, 2, 0.5f));
  }
  const PairedDataset ds = load_paired(dir.path());
  std::ofstream(dir / "subset.txt") << "2.png\n5.png\n\n# comment\n6.png\n";
  const auto names = read_subset_file(dir / "subset.txt");
  const PairedDataset sub = select_subset(ds, names);
  REQUIRE(sub.pairs.size() == 3);
  CHECK(sub.pairs[0].filename == "2.png");
  CHECK(sub.pairs[1].filename == "5.png");
  CHECK(sub.pairs[2].filename == "6.png");
  CHECK(select_subset(ds, {}).pairs.empty());
  const std::vector<std::string> bad{"1.png", "nope.png"};
  try {
    (void)select_subset(ds, bad);
    FAIL("expected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownFilename);
    CHECK(std::string(e.what()).find("nope.png") != std::string::npos);
  }
}

TEST_CASE("transform specs") {
  CHECK(Transform{}.to_string() == "none");
  Transform t;
  t.resize = Size2{300, 240};
  t.crop = Size2{256, 200};
  CHECK(t.to_string() == "resize=300x240;crop=256x200");
  CHECK(Transform::parse(t.to_string()) == t);
  CHECK(Transform::parse("none") == Transform{});
  CHECK_THROWS_AS(Transform::parse("resize=abc"), Error);
}

TEST_CASE("build_corpus gates, transforms and white rejection") {
  TempDir dir;
  Rng rng(3);
  write_png(dir / "a", "small.png", Image(600, 499, 0.4f));
  write_png(dir / "a", "big.png", dimma::testing::smooth_scene(rng, 800, 1000));
  write_png(dir / "a", "white.png", Image(600, 600, 1.0f));
  write_png(dir / "a" / "nested", "edge.png", dimma::testing::smooth_scene(rng, 500, 500));

  CorpusFilter f;
  f.min_width = 500;
  f.min_height = 500;
  f.resize_factor = 0.3;
  f.reject_white_background = true;
  const std::vector<std::pair<std::filesystem::path, CorpusFilter>> roots{{dir / "a", f}};
  const CorpusManifest m = build_corpus(roots);
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].path.filename() == "big.png");
  REQUIRE(m.entries[0].transform.resize.has_value());
  CHECK(*m.entries[0].transform.resize == Size2{300, 240});
  CHECK(m.entries[1].path.filename() == "edge.png");
  CHECK(m.rejected.size() == 2);

  // Byte-identical manifests on reruns.
  write_corpus_manifest(m, dir / "m1.txt");
  write_corpus_manifest(build_corpus(roots), dir / "m2.txt");
  std::ifstream a(dir / "m1.txt");
  std::ifstream b(dir / "m2.txt");
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
  const CorpusManifest back = read_corpus_manifest(dir / "m1.txt");
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].transform == m.entries[0].transform);

  const Image loaded = load_corpus_entry(back.entries[0]);
  CHECK(loaded.width() == 300);
  CHECK(loaded.height() == 240);

  CorpusFilter crop;
  crop.center_crop = Size2{512, 512};
  const std::vector<std::pair<std::filesystem::path, CorpusFilter>> r2{{dir / "a", crop}};
  const CorpusManifest cm = build_corpus(r2);
  for (const auto& e : cm.entries) {
    const Image img = load_corpus_entry(e);
    CHECK(img.width() == 512);
    CHECK(img.height() == 512);
  }
  CHECK(build_corpus(std::span<const std::pair<std::filesystem::path, CorpusFilter>>{}).entries.empty());
}

TEST_CASE("filter soundness on random entries") {
  TempDir dir;
  Rng rng(9);
  std::uniform_int_distribution<int> side(20, 90);
  for (int i = 0; i < 100; ++i) {
    write_png(dir / "r", "img" + std::to_string(i) + ".png", dimma::testing::random_image(rng, side(rng), side(rng)));
  }
  CorpusFilter f;
  f.min_width = 40;
  f.min_height = 30;
  f.max_width = 80;
  f.max_height = 85;
  const std::vector<std::pair<std::filesystem::path, CorpusFilter>> roots{{dir / "r", f}};
  const CorpusManifest m = build_corpus(roots);
  CHECK(m.entries.size() + m.rejected.size() == 100);
  for (const auto& e : m.entries) {
    const Image img = load_image(e.path);
    CHECK(img.width() >= 40);
    CHECK(img.height() >= 30);
    CHECK(img.width() <= 80);
    CHECK(img.height() <= 85);
  }
}

TEST_CASE("CorpusFilter validation") {
  CorpusFilter f;
  f.min_width = 100;
  f.max_width = 50;
  CHECK_THROWS_AS(f.validate(), Error);
  f = CorpusFilter{};
  f.resize_factor = 1.5;
  CHECK_THROWS_AS(f.validate(), Error);
  f = CorpusFilter{};
  f.resize_factor = 0.0;
  CHECK_THROWS_AS(f.validate(), Error);
}

TEST_CASE("has_white_background") {
  CHECK(has_white_background(Image(40, 40, 1.0f), 16, 0.95));
  CHECK_FALSE(has_white_background(Image(40, 40, 0.5f), 16, 0.95));
}
