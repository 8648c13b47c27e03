#pragma once

// Generative attention: score each cell (image) or feature (text), normalize
// with a softmax, threshold into a binary mask, and split the features into a
// foreground (mask on) and background (mask off) part.

#include <cstddef>

#include "xmh/params.hpp"
#include "xmh/tensor.hpp"

namespace xmh {

struct AttentionOptions {
  /// Threshold on the softmax output; <= 0 selects 1/(number of cells).
  double alpha = 0.0;
  /// Test hook: replace the threshold by the identity (z = p) so the whole
  /// chain becomes differentiable and can be checked by finite differences.
  bool identity_threshold = false;
};

/// All tensors share one shape: [B, H, W] for images, [B, C_T] for text.
struct AttentionMask {
  Tensor pre_mask;      // m
  Tensor distribution;  // p, each row sums to 1
  Tensor binary;        // z in {0, 1} (equals p under the identity hook)
  double alpha = 0.0;

  std::size_t cells_per_row() const { return distribution.row_size(); }
  /// Fraction of mask entries equal to one.
  double occupancy() const;
  /// Rows whose mask selects nothing.
  std::size_t empty_rows() const;
};

struct SplitFeatures {
  Tensor foreground;
  Tensor background;
};

/// 1x1 convolution over the grid, i.e. a shared per-cell C -> 1 projection.
struct ImageMaskParams {
  AffineParams proj;

  static ImageMaskParams init(std::size_t channels, Rng& rng);
  void append_to(ParamList& out, const std::string& prefix) { append_affine(out, prefix + ".proj", proj); }
};

/// C_T -> C_T fully-connected layer followed by relu.
struct TextMaskParams {
  AffineParams proj;

  static TextMaskParams init(std::size_t features, Rng& rng);
  void append_to(ParamList& out, const std::string& prefix) { append_affine(out, prefix + ".proj", proj); }
};

struct AttentionCache {
  Tensor features;
  Tensor projected;  // pre-relu text scores; same as pre_mask for images
  AttentionMask mask;
  bool identity_threshold = false;
};

/// features: [B, H, W, C] or a single [H, W, C]. Default alpha is 1/(H*W).
AttentionMask image_mask(const Tensor& features, const ImageMaskParams& params, const AttentionOptions& options = {},
                         AttentionCache* cache = nullptr);

/// features: [B, C_T] or a single [C_T]. Default alpha is 1/C_T.
AttentionMask text_mask(const Tensor& features, const TextMaskParams& params, const AttentionOptions& options = {},
                        AttentionCache* cache = nullptr);

/// Every mask entry gates features.size() / z.size() consecutive values
/// (the channel column of a grid cell, or one text feature).
SplitFeatures split(const Tensor& features, const Tensor& z);

struct AttentionGrads {
  Tensor features;      // total cotangent w.r.t. the input features
  Tensor mask;          // cotangent at z
  Tensor distribution;  // cotangent at p (straight-through: equal to mask)
};

/// Backward pass for image_mask + split. With through_mask = false the mask
/// is treated as a constant: only the direct gating path reaches the
/// features and the projection receives no gradient.
AttentionGrads image_attention_backward(const AttentionCache& cache, ImageMaskParams& params,
                                        const Tensor& grad_foreground, const Tensor& grad_background,
                                        bool through_mask = true);

AttentionGrads text_attention_backward(const AttentionCache& cache, TextMaskParams& params,
                                       const Tensor& grad_foreground, const Tensor& grad_background,
                                       bool through_mask = true);

}  // namespace xmh
