#include "xmh/attention.hpp"

#include "xmh/errors.hpp"
#include "xmh/numkernel.hpp"

namespace xmh {

double AttentionMask::occupancy() const {
  if (binary.empty()) return 0.0;
  return binary.sum() / static_cast<double>(binary.size());
}

std::size_t AttentionMask::empty_rows() const {
  std::size_t count = 0;
  for (std::size_t b = 0; b < binary.extent(0); ++b) {
    bool any = false;
    for (double v : binary.row(b)) any = any || v != 0.0;
    if (!any) ++count;
  }
  return count;
}

ImageMaskParams ImageMaskParams::init(std::size_t channels, Rng& rng) {
  return ImageMaskParams{AffineParams::init_uniform(channels, 1, rng)};
}

TextMaskParams TextMaskParams::init(std::size_t features, Rng& rng) {
  return TextMaskParams{AffineParams::init_uniform(features, features, rng)};
}

namespace {

// Softmax + threshold over rows of m, where m is already shaped as the mask.
AttentionMask finish_mask(Tensor m, double alpha, bool identity) {
  AttentionMask mask;
  mask.alpha = alpha;
  mask.distribution = softmax_rows_forward(m);
  mask.binary = identity ? mask.distribution : threshold_ste_forward(mask.distribution, alpha);
  mask.pre_mask = std::move(m);
  return mask;
}

void require_cache(const AttentionCache& cache) {
  if (cache.features.empty() && cache.mask.binary.empty()) {
    throw Error("attention backward called without a forward cache");
  }
}

// Cotangent at z from the split products, plus the direct gating path.
void split_backward(const Tensor& features, const Tensor& z, const Tensor& grad_fg, const Tensor& grad_bg,
                    Tensor& grad_features, Tensor& grad_z) {
  if (grad_fg.size() != features.size() || grad_bg.size() != features.size()) {
    throw DimensionError("attention backward: cotangent size does not match features");
  }
  const std::size_t channels = features.size() / z.size();
  grad_features = Tensor(features.shape());
  grad_z = Tensor(z.shape());
  for (std::size_t cell = 0; cell < z.size(); ++cell) {
    const double on = z[cell];
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = cell * channels + c;
      grad_features[i] = on * grad_fg[i] + (1.0 - on) * grad_bg[i];
      acc += (grad_fg[i] - grad_bg[i]) * features[i];
    }
    grad_z[cell] = acc;
  }
}

}  // namespace

AttentionMask image_mask(const Tensor& features, const ImageMaskParams& params, const AttentionOptions& options,
                         AttentionCache* cache) {
  const bool single = features.rank() == 3;
  if (!single && features.rank() != 4) {
    throw DimensionError("image_mask expects [B,H,W,C] or [H,W,C], got " + shape_string(features.shape()));
  }
  const Tensor grid = single ? features.reshaped({1, features.extent(0), features.extent(1), features.extent(2)})
                             : features;
  const std::size_t batch = grid.extent(0), h = grid.extent(1), w = grid.extent(2), c = grid.extent(3);
  if (c != params.proj.in()) {
    throw DimensionError("image_mask: " + std::to_string(c) + " channels but projection expects " +
                         std::to_string(params.proj.in()));
  }
  const double alpha = options.alpha > 0.0 ? options.alpha : 1.0 / static_cast<double>(h * w);
  Tensor m = affine_forward(grid.reshaped({batch * h * w, c}), params.proj).reshaped({batch, h, w});
  AttentionMask mask = finish_mask(std::move(m), alpha, options.identity_threshold);
  if (cache) {
    cache->features = grid;
    cache->projected = mask.pre_mask;
    cache->mask = mask;
    cache->identity_threshold = options.identity_threshold;
  }
  if (single) {
    mask.pre_mask = std::move(mask.pre_mask).reshaped({h, w});
    mask.distribution = std::move(mask.distribution).reshaped({h, w});
    mask.binary = std::move(mask.binary).reshaped({h, w});
  }
  return mask;
}

AttentionMask text_mask(const Tensor& features, const TextMaskParams& params, const AttentionOptions& options,
                        AttentionCache* cache) {
  const bool single = features.rank() == 1;
  if (!single && features.rank() != 2) {
    throw DimensionError("text_mask expects [B,C] or [C], got " + shape_string(features.shape()));
  }
  const Tensor rows = single ? features.reshaped({1, features.extent(0)}) : features;
  const std::size_t width = rows.extent(1);
  const double alpha = options.alpha > 0.0 ? options.alpha : 1.0 / static_cast<double>(width);
  Tensor projected = affine_forward(rows, params.proj);
  AttentionMask mask = finish_mask(relu_forward(projected), alpha, options.identity_threshold);
  if (cache) {
    cache->features = rows;
    cache->projected = std::move(projected);
    cache->mask = mask;
    cache->identity_threshold = options.identity_threshold;
  }
  if (single) {
    mask.pre_mask = std::move(mask.pre_mask).reshaped({width});
    mask.distribution = std::move(mask.distribution).reshaped({width});
    mask.binary = std::move(mask.binary).reshaped({width});
  }
  return mask;
}

SplitFeatures split(const Tensor& features, const Tensor& z) {
  if (z.empty() && features.empty()) return {features, features};
  if (z.empty() || features.size() % z.size() != 0) {
    throw DimensionError("split: mask " + shape_string(z.shape()) + " does not tile features " +
                         shape_string(features.shape()));
  }
  const std::size_t channels = features.size() / z.size();
  SplitFeatures out{Tensor(features.shape()), Tensor(features.shape())};
  for (std::size_t cell = 0; cell < z.size(); ++cell) {
    const double on = z[cell];
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = cell * channels + c;
      out.foreground[i] = on * features[i];
      out.background[i] = (1.0 - on) * features[i];
    }
  }
  return out;
}

AttentionGrads image_attention_backward(const AttentionCache& cache, ImageMaskParams& params,
                                        const Tensor& grad_foreground, const Tensor& grad_background,
                                        bool through_mask) {
  require_cache(cache);
  AttentionGrads g;
  split_backward(cache.features, cache.mask.binary, grad_foreground, grad_background, g.features, g.mask);
  g.distribution = cache.identity_threshold ? g.mask : threshold_ste_backward(g.mask);
  if (!through_mask) return g;

  const std::size_t batch = cache.features.extent(0);
  const std::size_t cells = cache.mask.cells_per_row();
  const std::size_t channels = cache.features.extent(3);
  const Tensor grad_m = softmax_rows_backward(cache.mask.distribution.reshaped({batch, cells}),
                                              g.distribution.reshaped({batch, cells}));
  const Tensor rows = cache.features.reshaped({batch * cells, channels});
  const Tensor grad_rows = affine_backward_accumulate(rows, params.proj, grad_m.reshaped({batch * cells, 1}));
  g.features.add_(grad_rows.reshaped(g.features.shape()));
  return g;
}

AttentionGrads text_attention_backward(const AttentionCache& cache, TextMaskParams& params,
                                       const Tensor& grad_foreground, const Tensor& grad_background,
                                       bool through_mask) {
  require_cache(cache);
  AttentionGrads g;
  split_backward(cache.features, cache.mask.binary, grad_foreground.reshaped(cache.features.shape()),
                 grad_background.reshaped(cache.features.shape()), g.features, g.mask);
  g.distribution = cache.identity_threshold ? g.mask : threshold_ste_backward(g.mask);
  if (!through_mask) return g;

  const Tensor grad_m = softmax_rows_backward(cache.mask.distribution, g.distribution);
  const Tensor grad_projected = relu_backward(cache.projected, grad_m);
  g.features.add_(affine_backward_accumulate(cache.features, params.proj, grad_projected));
  return g;
}

}  // namespace xmh
