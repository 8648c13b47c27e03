#include "xmh/mask_stats.hpp"

#include <sstream>

#include "binary_io.hpp"
#include "xmh/errors.hpp"
#include "xmh/retrieval.hpp"

namespace xmh {

double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw DimensionError("mask_iou: masks of " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                         " cells");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double random_rectangle_iou_baseline(const PairedDataset& data, std::span<const std::uint32_t> ids,
                                     std::size_t samples_per_image, std::uint64_t seed) {
  if (!data.has_masks()) throw ConfigError("dataset has no planted masks");
  if (ids.empty() || samples_per_image == 0) return 0.0;
  Rng rng(seed);
  double total = 0.0;
  for (auto id : ids) {
    for (std::size_t s = 0; s < samples_per_image; ++s) {
      total += mask_iou(random_rectangle_mask(data.grid_height, data.grid_width, rng), data.mask_at(id));
    }
  }
  return total / static_cast<double>(ids.size() * samples_per_image);
}

MaskStats compute_mask_stats(const PairedDataset& data, std::span<const std::uint32_t> ids, const Model& model,
                             const MaskStatsOptions& options) {
  EncodeOptions eo;
  eo.keep_masks = true;
  const EncodedCorpus corpus = encode_corpus(data, ids, model, Modality::Image, eo);
  MaskStats stats;
  double occ = 0.0, iou = 0.0;
  for (const auto& m : corpus.masks) {
    MaskStatsRow row;
    row.id = m.id;
    std::size_t on = 0;
    for (auto b : m.bits) on += b ? 1 : 0;
    row.occupancy = m.bits.empty() ? 0.0 : static_cast<double>(on) / static_cast<double>(m.bits.size());
    occ += row.occupancy;
    if (data.has_masks()) {
      row.iou = mask_iou(m.bits, data.mask_at(m.id));
      iou += *row.iou;
    }
    stats.rows.push_back(row);
  }
  if (!stats.rows.empty()) stats.mean_occupancy = occ / static_cast<double>(stats.rows.size());
  if (data.has_masks()) {
    stats.mean_iou = stats.rows.empty() ? 0.0 : iou / static_cast<double>(stats.rows.size());
    stats.baseline_iou = random_rectangle_iou_baseline(data, ids, options.baseline_samples, options.baseline_seed);
  }
  return stats;
}

std::string format_mask_stats_csv(const MaskStats& stats) {
  std::ostringstream os;
  os << "id,occupancy,iou\n";
  for (const auto& r : stats.rows) {
    os << r.id << ',' << io::format_double(r.occupancy) << ',';
    if (r.iou) os << io::format_double(*r.iou);
    os << '\n';
  }
  os << "# mean_occupancy," << io::format_double(stats.mean_occupancy) << '\n';
  if (stats.mean_iou) os << "# mean_iou," << io::format_double(*stats.mean_iou) << '\n';
  if (stats.baseline_iou) os << "# baseline_iou," << io::format_double(*stats.baseline_iou) << '\n';
  return os.str();
}

}  // namespace xmh
