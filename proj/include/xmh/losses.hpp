#pragma once

// Triplet ranking losses over relaxed codes: the four cross-modal/intra-modal
// retrieval terms and the two adversarial background terms.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "xmh/data.hpp"
#include "xmh/rng.hpp"
#include "xmh/tensor.hpp"

namespace xmh {

/// Query modality -> database modality. The last two use background codes on
/// the database side.
enum class Direction : std::uint8_t {
  TextToImage = 0,
  ImageToText = 1,
  ImageToImage = 2,
  TextToText = 3,
  TextToImageBackground = 4,
  ImageToTextBackground = 5,
};

inline constexpr std::size_t kDirectionCount = 6;
inline constexpr std::array<Direction, kDirectionCount> kAllDirections{
    Direction::TextToImage,  Direction::ImageToText,           Direction::ImageToImage,
    Direction::TextToText,   Direction::TextToImageBackground, Direction::ImageToTextBackground};

std::string_view direction_name(Direction d);
/// Intra-modal directions exclude the anchor itself as a positive.
bool is_intra_modal(Direction d);

/// Indices are positions inside the current batch.
struct Triplet {
  std::uint32_t anchor;
  std::uint32_t positive;
  std::uint32_t negative;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletBatch {
  Direction direction = Direction::TextToImage;
  std::vector<Triplet> triples;

  friend bool operator==(const TripletBatch&, const TripletBatch&) = default;
};

/// One batch per direction, indexed by the enum value.
using TripletSet = std::array<TripletBatch, kDirectionCount>;

enum class DistanceKind : std::uint8_t { SquaredEuclidean, Euclidean };

struct LossConfig {
  double margin = 4.0;
  DistanceKind distance = DistanceKind::SquaredEuclidean;
  std::array<double, kDirectionCount> weights{1, 1, 1, 1, 1, 1};

  /// margin = q / 4.
  static LossConfig for_bits(std::size_t q);
  void validate() const;
};

struct HingeResult {
  double value = 0.0;
  std::vector<double> grad_anchor;
  std::vector<double> grad_positive;
  std::vector<double> grad_negative;
};

/// max{0, margin + d(a, p) - d(a, n)}. Gradients are zero when the hinge is
/// inactive (including exactly at the kink).
HingeResult triplet_hinge(std::span<const double> anchor, std::span<const double> positive,
                          std::span<const double> negative, const LossConfig& config);

double code_distance(std::span<const double> a, std::span<const double> b, DistanceKind kind);

/// Relaxed codes for one batch, each [B, q].
struct BatchCodes {
  Tensor image;             // foreground H^I
  Tensor text;              // foreground H^T
  Tensor image_background;  // \hat H^I
  Tensor text_background;   // \hat H^T
};

struct LossBreakdown {
  std::array<double, kDirectionCount> terms{};

  double cross_modal() const { return terms[0] + terms[1] + terms[2] + terms[3]; }
  double adversarial() const { return terms[4] + terms[5]; }
  double total() const { return cross_modal() + adversarial(); }
};

/// Cross-modal retrieval loss: the four foreground terms. Gradients w.r.t.
/// the code tables are added into *grads when non-null (background tables of
/// grads are left untouched).
LossBreakdown cross_modal_loss(const BatchCodes& codes, const TripletSet& triplets, const LossConfig& config,
                               BatchCodes* grads = nullptr);

/// Adversarial retrieval loss: foreground anchors of one modality against
/// background positives/negatives of the other.
LossBreakdown adversarial_loss(const BatchCodes& codes, const TripletSet& triplets, const LossConfig& config,
                               BatchCodes* grads = nullptr);

/// Zero-filled gradient tables matching codes.
BatchCodes zero_grads_like(const BatchCodes& codes);

/// For each anchor in the batch, draws `per_anchor` (positive, negative)
/// pairs uniformly from its in-batch positives and negatives. Anchors
/// without a positive or without a negative are skipped. S is indexed by the
/// global ids in `batch`; the emitted triples hold batch positions.
TripletBatch sample_triplets(const SimilarityMatrix& similarity, std::span<const std::uint32_t> batch,
                             std::size_t per_anchor, Rng& rng, Direction direction = Direction::TextToImage);

TripletSet sample_all_directions(const SimilarityMatrix& similarity, std::span<const std::uint32_t> batch,
                                 std::size_t per_anchor, Rng& rng);

}  // namespace xmh
