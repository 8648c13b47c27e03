#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "xmh/data.hpp"
#include "xmh/errors.hpp"
#include "xmh/mask_stats.hpp"

using namespace xmh;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small(std::size_t n = 200) {
  SyntheticConfig c;
  c.n = n;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xmh_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("generator invariants") {
  const PairedDataset d = generate_synthetic(small(1000));
  CHECK(d.size() == 1000);
  CHECK(d.images.size() == 1000 * 16 * 16 * 3);
  CHECK(d.bow.size() == 1000 * 256);
  CHECK(d.masks.size() == 1000 * 64);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.labels[i].size() >= 1);
    CHECK(d.labels[i].size() <= 3);
    std::size_t on = 0;
    for (auto b : d.mask_at(i)) on += b;
    CHECK(on * 4 >= 64);
    CHECK(on * 2 <= 64);
  }
  CHECK(generate_synthetic(small()) == generate_synthetic(small()));
  SyntheticConfig other = small();
  other.seed = 2;
  CHECK_FALSE(generate_synthetic(other) == generate_synthetic(small()));
}

TEST_CASE("generator at zero noise") {
  SyntheticConfig c = small(300);
  c.noise = 0.0;
  c.classes = 2;
  const PairedDataset d = generate_synthetic(c);
  // Images of the same label set agree on every foreground cell and on the
  // background value.
  const std::size_t patch = 2, cells = 64, per_cell = patch * patch * 3;
  auto cell_values = [&](std::size_t i, std::size_t cell) {
    std::vector<float> v;
    const std::size_t gy = cell / 8, gx = cell % 8;
    for (std::size_t py = 0; py < patch; ++py) {
      for (std::size_t px = 0; px < patch; ++px) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          v.push_back(d.image_at(i)[((gy * patch + py) * 16 + gx * patch + px) * 3 + ch]);
        }
      }
    }
    return v;
  };
  std::vector<float> reference_fg, reference_bg;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] != LabelSet{0}) continue;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const auto v = cell_values(i, cell);
      REQUIRE(v.size() == per_cell);
      auto& ref = d.mask_at(i)[cell] ? reference_fg : reference_bg;
      if (ref.empty()) ref = v;
      CHECK(v == ref);
    }
  }
  CHECK_FALSE(reference_fg.empty());

  // Sharing a label implies sharing class vocabulary.
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 40; ++j) {
      const auto& a = d.labels[i];
      const auto& b = d.labels[j];
      std::vector<std::uint32_t> common;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
      if (common.empty()) continue;
      bool overlap = false;
      for (std::size_t w = 0; w < d.vocab; ++w) overlap = overlap || (d.bow_at(i)[w] > 0 && d.bow_at(j)[w] > 0);
      CHECK(overlap);
    }
  }
}

TEST_CASE("generator validation") {
  SyntheticConfig c = small();
  c.classes = 1;
  CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
  c = small();
  c.grid_size = 5;
  CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
  c = small();
  c.n = 0;
  CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
}

TEST_CASE("similarity") {
  const std::vector<LabelSet> disjoint{{0}, {1}, {2}};
  const SimilarityMatrix id = build_similarity(disjoint);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(id(i, j) == (i == j));
  }
  const std::vector<LabelSet> pair{{1, 2}, {2, 3}};
  CHECK(build_similarity(pair)(0, 1));

  const PairedDataset d = generate_synthetic(small(150));
  const SimilarityMatrix s = build_similarity(d.labels);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      bool shared = false;
      for (auto a : d.labels[i]) {
        for (auto b : d.labels[j]) shared = shared || a == b;
      }
      CHECK(s(i, j) == shared);
      CHECK(s(i, j) == s(j, i));
    }
  }
}

TEST_CASE("splits") {
  const Splits s = make_splits(2400, 200, 1000, 3);
  CHECK(s.test.size() == 200);
  CHECK(s.retrieval.size() == 2200);
  CHECK(s.train.size() == 1000);
  std::vector<std::uint32_t> both;
  std::set_intersection(s.test.begin(), s.test.end(), s.retrieval.begin(), s.retrieval.end(),
                        std::back_inserter(both));
  CHECK(both.empty());
  CHECK(std::includes(s.retrieval.begin(), s.retrieval.end(), s.train.begin(), s.train.end()));
  CHECK(make_splits(2400, 200, 1000, 3) == s);
  CHECK_THROWS_AS(make_splits(10, 10, 0, 1), ConfigError);
  CHECK_THROWS_AS(make_splits(10, 5, 6, 1), ConfigError);
}

TEST_CASE("dataset round trip and errors") {
  PairedDataset d = generate_synthetic(small(60));
  d.splits = make_splits(d.size(), 10, 30, 1);
  const fs::path dir = scratch("data");
  save_dataset(d, dir);
  CHECK(load_dataset(dir) == d);

  CHECK_THROWS_AS(load_dataset(dir / "nope"), NotFoundError);

  const fs::path copy = scratch("data_version");
  fs::copy(dir, copy);
  std::ifstream in(copy / "manifest");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("version = 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 11, "version = 9");
  std::ofstream(copy / "manifest") << text;
  CHECK_THROWS_AS(load_dataset(copy), VersionError);

  fs::resize_file(dir / "bow.f32", 12);
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  fs::remove_all(dir);
  fs::remove_all(copy);
}

TEST_CASE("mask iou and rectangle baseline") {
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{0, 1, 1, 0}, none{0, 0, 0, 0};
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(none, none) == 1.0);
  CHECK(mask_iou(a, none) == 0.0);

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto m = random_rectangle_mask(8, 8, rng);
    std::size_t on = 0;
    for (auto v : m) on += v;
    CHECK(on >= 16);
    CHECK(on <= 32);
  }
  const PairedDataset d = generate_synthetic(small(100));
  std::vector<std::uint32_t> ids(100);
  for (std::uint32_t i = 0; i < 100; ++i) ids[i] = i;
  const double base = random_rectangle_iou_baseline(d, ids, 64, 1);
  CHECK(base > 0.1);
  CHECK(base < 0.5);
}
