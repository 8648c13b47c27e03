#pragma once

// Paired image/text instances with multi-label annotations, the label-derived
// similarity matrix, query/retrieval/train splits, and the on-disk layout.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "xmh/encoders.hpp"
#include "xmh/rng.hpp"
#include "xmh/tensor.hpp"

namespace xmh {

using IndexList = std::vector<std::uint32_t>;
using LabelSet = std::vector<std::uint32_t>;

struct Splits {
  IndexList test;       // queries
  IndexList retrieval;  // database; everything not in test
  IndexList train;      // subset of retrieval

  friend bool operator==(const Splits&, const Splits&) = default;
};

struct SyntheticConfig {
  std::size_t n = 2400;
  std::size_t classes = 4;
  std::size_t image_size = 16;
  std::size_t grid_size = 8;
  std::size_t channels = 3;
  std::size_t vocab = 256;
  double noise = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PairedDataset {
  static constexpr int kFormatVersion = 1;

  ImageGeometry image;
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  std::size_t vocab = 0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  double noise = 0.0;

  std::vector<float> images;  // n * H0 * W0 * C0, row-major (y, x, c)
  std::vector<float> bow;     // n * V raw counts
  std::vector<LabelSet> labels;
  std::vector<std::uint8_t> masks;  // n * grid cells; empty unless synthetic
  Splits splits;

  std::size_t size() const { return labels.size(); }
  std::size_t image_values() const { return image.height * image.width * image.channels; }
  std::size_t grid_cells() const { return grid_height * grid_width; }
  bool has_masks() const { return !masks.empty(); }

  std::span<const float> image_at(std::size_t i) const;
  std::span<const float> bow_at(std::size_t i) const;
  std::span<const std::uint8_t> mask_at(std::size_t i) const;

  /// [B, H0, W0, C0] and [B, V] double tensors for a list of instances.
  Tensor image_batch(std::span<const std::uint32_t> ids) const;
  Tensor bow_batch(std::span<const std::uint32_t> ids) const;

  /// Throws FormatError when array lengths disagree with the header fields.
  void validate() const;

  friend bool operator==(const PairedDataset&, const PairedDataset&) = default;
};

/// Planted-foreground generator. Each instance draws 1-3 labels; the image
/// carries the label patterns inside a cell-aligned rectangle covering
/// 25%-50% of the grid over a noisy gray background; the text carries the
/// words of each label's vocabulary block plus uniformly drawn noise words.
/// Splits are left empty.
PairedDataset generate_synthetic(const SyntheticConfig& config);

/// One draw from the planted-rectangle distribution: a shape chosen uniformly
/// among those covering 25%-50% of the grid, at a uniform position.
std::vector<std::uint8_t> random_rectangle_mask(std::size_t grid_height, std::size_t grid_width, Rng& rng);

/// Binary similarity, S(i, j) = 1 iff the label sets intersect.
/// Stored as sorted positive lists per row.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  explicit SimilarityMatrix(std::vector<IndexList> positives);

  std::size_t size() const { return positives_.size(); }
  bool operator()(std::size_t i, std::size_t j) const;
  const IndexList& positives(std::size_t i) const { return positives_.at(i); }

 private:
  std::vector<IndexList> positives_;
};

SimilarityMatrix build_similarity(std::span<const LabelSet> labels);

/// test drawn uniformly, retrieval = the rest, train drawn uniformly from
/// retrieval. Lists are sorted. Throws ConfigError when infeasible.
Splits make_splits(std::size_t n, std::size_t n_test, std::size_t n_train, std::uint64_t seed);

/// Directory layout: manifest, images.f32, bow.f32, labels.txt,
/// masks.u8 (when present), splits.txt. Floats are little-endian.
void save_dataset(const PairedDataset& data, const std::filesystem::path& dir);
PairedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace xmh
