#pragma once

// Feature learners: a patch-embedding grid encoder for images and a two-layer
// perceptron over bag-of-words counts for text.

#include <cstddef>

#include "xmh/params.hpp"
#include "xmh/tensor.hpp"

namespace xmh {

struct ImageGeometry {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;

  friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

/// Each non-overlapping patch x patch block is projected to `features`
/// channels, then passed through one more per-cell affine + relu.
struct ImageEncoderParams {
  ImageGeometry input;
  std::size_t patch = 2;
  AffineParams patch_proj;  // patch*patch*channels -> features
  AffineParams hidden;      // features -> features

  static ImageEncoderParams init(ImageGeometry input, std::size_t patch, std::size_t features, Rng& rng);

  std::size_t grid_height() const { return input.height / patch; }
  std::size_t grid_width() const { return input.width / patch; }
  std::size_t features() const { return hidden.out(); }

  void append_to(ParamList& out, const std::string& prefix);
};

struct ImageEncoderCache {
  Tensor patches;    // [B*H*W, patch*patch*C0]
  Tensor projected;  // [B*H*W, C]
  Tensor hidden;     // pre-relu, [B*H*W, C]
  std::size_t batch = 0;
};

/// images: [B, H0, W0, C0] (or a single [H0, W0, C0]); returns [B, H, W, C]
/// (or [H, W, C]). Throws ConfigError when the patch does not divide the
/// image and DimensionError on a shape mismatch.
Tensor encode_image(const Tensor& images, const ImageEncoderParams& params, ImageEncoderCache* cache = nullptr);

/// Accumulates parameter gradients from grad_features ([B, H, W, C]).
void image_encoder_backward(const ImageEncoderCache& cache, ImageEncoderParams& params, const Tensor& grad_features);

/// Rearranges [B, H0, W0, C0] pixels into one row per grid cell.
Tensor patchify(const Tensor& images, std::size_t patch);

struct TextEncoderParams {
  AffineParams fc1;  // V -> hidden
  AffineParams fc2;  // hidden -> C_T

  static TextEncoderParams init(std::size_t vocab, std::size_t hidden, std::size_t features, Rng& rng);

  std::size_t vocab() const { return fc1.in(); }
  std::size_t features() const { return fc2.out(); }

  void append_to(ParamList& out, const std::string& prefix);
};

struct TextEncoderCache {
  Tensor bow;
  Tensor hidden;  // pre-relu
  Tensor activated;
};

/// bow: [B, V] or [V]; returns [B, C_T] or [C_T].
Tensor encode_text(const Tensor& bow, const TextEncoderParams& params, TextEncoderCache* cache = nullptr);

/// Accumulates parameter gradients and returns the gradient w.r.t. the input
/// counts.
Tensor text_encoder_backward(const TextEncoderCache& cache, TextEncoderParams& params, const Tensor& grad_features);

}  // namespace xmh
