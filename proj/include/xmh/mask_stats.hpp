#pragma once

// Learned image-mask diagnostics against planted synthetic masks.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmh/data.hpp"
#include "xmh/model.hpp"

namespace xmh {

/// |a & b| / |a | b|; two empty masks score 1.
double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Mean IoU between each planted mask and independent random rectangles
/// drawn from the planted-rectangle distribution.
double random_rectangle_iou_baseline(const PairedDataset& data, std::span<const std::uint32_t> ids,
                                     std::size_t samples_per_image, std::uint64_t seed);

struct MaskStatsRow {
  std::uint64_t id = 0;
  double occupancy = 0.0;
  std::optional<double> iou;
};

struct MaskStats {
  std::vector<MaskStatsRow> rows;
  double mean_occupancy = 0.0;
  std::optional<double> mean_iou;
  std::optional<double> baseline_iou;
};

struct MaskStatsOptions {
  std::size_t baseline_samples = 64;
  std::uint64_t baseline_seed = 7;
};

/// Per-image occupancy of the learned mask and, when the dataset carries
/// planted masks, IoU against them.
MaskStats compute_mask_stats(const PairedDataset& data, std::span<const std::uint32_t> ids, const Model& model,
                             const MaskStatsOptions& options = {});

/// `id,occupancy,iou` rows (iou left blank without planted masks), then
/// `# mean_occupancy`, `# mean_iou` and `# baseline_iou` comment lines.
std::string format_mask_stats_csv(const MaskStats& stats);

}  // namespace xmh
