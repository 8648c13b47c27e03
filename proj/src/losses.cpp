#include "xmh/losses.hpp"

#include <cmath>

#include "xmh/errors.hpp"

namespace xmh {

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::TextToImage: return "T->I";
    case Direction::ImageToText: return "I->T";
    case Direction::ImageToImage: return "I->I";
    case Direction::TextToText: return "T->T";
    case Direction::TextToImageBackground: return "T->bgI";
    case Direction::ImageToTextBackground: return "I->bgT";
  }
  return "?";
}

bool is_intra_modal(Direction d) { return d == Direction::ImageToImage || d == Direction::TextToText; }

LossConfig LossConfig::for_bits(std::size_t q) {
  LossConfig c;
  c.margin = static_cast<double>(q) / 4.0;
  return c;
}

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

double code_distance(std::span<const double> a, std::span<const double> b, DistanceKind kind) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return kind == DistanceKind::SquaredEuclidean ? s : std::sqrt(s);
}

namespace {

// d/da of d(a, b); the d/db part is its negation.
void distance_grad(std::span<const double> a, std::span<const double> b, DistanceKind kind, double scale,
                   std::vector<double>& out) {
  out.assign(a.size(), 0.0);
  if (kind == DistanceKind::SquaredEuclidean) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = scale * 2.0 * (a[i] - b[i]);
    return;
  }
  const double norm = code_distance(a, b, DistanceKind::Euclidean);
  if (norm == 0.0) return;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = scale * (a[i] - b[i]) / norm;
}

}  // namespace

HingeResult triplet_hinge(std::span<const double> anchor, std::span<const double> positive,
                          std::span<const double> negative, const LossConfig& config) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw DimensionError("triplet_hinge: code lengths " + std::to_string(anchor.size()) + ", " +
                         std::to_string(positive.size()) + ", " + std::to_string(negative.size()));
  }
  const std::size_t q = anchor.size();
  HingeResult r;
  r.grad_anchor.assign(q, 0.0);
  r.grad_positive.assign(q, 0.0);
  r.grad_negative.assign(q, 0.0);
  const double arg = config.margin + code_distance(anchor, positive, config.distance) -
                     code_distance(anchor, negative, config.distance);
  if (!(arg > 0.0)) return r;
  r.value = arg;
  std::vector<double> gp, gn;
  distance_grad(anchor, positive, config.distance, 1.0, gp);
  distance_grad(anchor, negative, config.distance, 1.0, gn);
  for (std::size_t i = 0; i < q; ++i) {
    r.grad_anchor[i] = gp[i] - gn[i];
    r.grad_positive[i] = -gp[i];
    r.grad_negative[i] = gn[i];
  }
  return r;
}

BatchCodes zero_grads_like(const BatchCodes& codes) {
  auto zeros = [](const Tensor& t) { return t.rank() == 0 ? Tensor() : Tensor(t.shape()); };
  return {zeros(codes.image), zeros(codes.text), zeros(codes.image_background), zeros(codes.text_background)};
}

namespace {

struct TermTables {
  const Tensor* anchors;
  const Tensor* database;
  Tensor* grad_anchors;
  Tensor* grad_database;
};

TermTables tables_for(Direction d, const BatchCodes& codes, BatchCodes* grads) {
  auto g = [grads](Tensor BatchCodes::*member) { return grads ? &(grads->*member) : nullptr; };
  switch (d) {
    case Direction::TextToImage: return {&codes.text, &codes.image, g(&BatchCodes::text), g(&BatchCodes::image)};
    case Direction::ImageToText: return {&codes.image, &codes.text, g(&BatchCodes::image), g(&BatchCodes::text)};
    case Direction::ImageToImage: return {&codes.image, &codes.image, g(&BatchCodes::image), g(&BatchCodes::image)};
    case Direction::TextToText: return {&codes.text, &codes.text, g(&BatchCodes::text), g(&BatchCodes::text)};
    case Direction::TextToImageBackground:
      return {&codes.text, &codes.image_background, g(&BatchCodes::text), g(&BatchCodes::image_background)};
    case Direction::ImageToTextBackground:
      return {&codes.image, &codes.text_background, g(&BatchCodes::image), g(&BatchCodes::text_background)};
  }
  throw Error("unknown direction");
}

double term_loss(Direction d, const BatchCodes& codes, const TripletBatch& batch, const LossConfig& config,
                 BatchCodes* grads) {
  const TermTables t = tables_for(d, codes, grads);
  if (batch.triples.empty()) return 0.0;
  if (t.anchors->rank() != 2 || t.database->rank() != 2 || t.anchors->extent(1) != t.database->extent(1)) {
    throw DimensionError(std::string("loss term ") + std::string(direction_name(d)) + ": code tables " +
                         shape_string(t.anchors->shape()) + " and " + shape_string(t.database->shape()));
  }
  const double weight = config.weights[static_cast<std::size_t>(d)];
  const std::size_t q = t.anchors->extent(1);
  double total = 0.0;
  for (const auto& tr : batch.triples) {
    if (tr.anchor >= t.anchors->extent(0) || tr.positive >= t.database->extent(0) ||
        tr.negative >= t.database->extent(0)) {
      throw DimensionError("triplet index outside the batch");
    }
    HingeResult h = triplet_hinge(t.anchors->row(tr.anchor), t.database->row(tr.positive),
                                  t.database->row(tr.negative), config);
    total += h.value;
    if (t.grad_anchors && h.value > 0.0) {
      auto ga = t.grad_anchors->row(tr.anchor);
      auto gp = t.grad_database->row(tr.positive);
      auto gn = t.grad_database->row(tr.negative);
      for (std::size_t i = 0; i < q; ++i) {
        ga[i] += weight * h.grad_anchor[i];
        gp[i] += weight * h.grad_positive[i];
        gn[i] += weight * h.grad_negative[i];
      }
    }
  }
  return weight * total;
}

LossBreakdown sum_terms(std::span<const Direction> directions, const BatchCodes& codes, const TripletSet& triplets,
                        const LossConfig& config, BatchCodes* grads) {
  config.validate();
  LossBreakdown out;
  for (Direction d : directions) {
    const auto idx = static_cast<std::size_t>(d);
    out.terms[idx] = term_loss(d, codes, triplets[idx], config, grads);
  }
  return out;
}

constexpr std::array<Direction, 4> kCrossModal{Direction::TextToImage, Direction::ImageToText,
                                               Direction::ImageToImage, Direction::TextToText};
constexpr std::array<Direction, 2> kAdversarial{Direction::TextToImageBackground,
                                                Direction::ImageToTextBackground};

}  // namespace

LossBreakdown cross_modal_loss(const BatchCodes& codes, const TripletSet& triplets, const LossConfig& config,
                               BatchCodes* grads) {
  return sum_terms(kCrossModal, codes, triplets, config, grads);
}

LossBreakdown adversarial_loss(const BatchCodes& codes, const TripletSet& triplets, const LossConfig& config,
                               BatchCodes* grads) {
  return sum_terms(kAdversarial, codes, triplets, config, grads);
}

TripletBatch sample_triplets(const SimilarityMatrix& similarity, std::span<const std::uint32_t> batch,
                             std::size_t per_anchor, Rng& rng, Direction direction) {
  TripletBatch out;
  out.direction = direction;
  const bool skip_self = is_intra_modal(direction);
  std::vector<std::uint32_t> pos, neg;
  for (std::uint32_t a = 0; a < batch.size(); ++a) {
    pos.clear();
    neg.clear();
    for (std::uint32_t j = 0; j < batch.size(); ++j) {
      if (skip_self && j == a) continue;
      (similarity(batch[a], batch[j]) ? pos : neg).push_back(j);
    }
    if (pos.empty() || neg.empty()) continue;
    for (std::size_t k = 0; k < per_anchor; ++k) {
      const auto p = pos[rng.below(pos.size())];
      const auto n = neg[rng.below(neg.size())];
      out.triples.push_back({a, p, n});
    }
  }
  return out;
}

TripletSet sample_all_directions(const SimilarityMatrix& similarity, std::span<const std::uint32_t> batch,
                                 std::size_t per_anchor, Rng& rng) {
  TripletSet set;
  for (Direction d : kAllDirections) {
    set[static_cast<std::size_t>(d)] = sample_triplets(similarity, batch, per_anchor, rng, d);
  }
  return set;
}

}  // namespace xmh
