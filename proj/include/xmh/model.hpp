#pragma once

// The full network: encoders (E), attention generators (G) and hash heads (D)
// for both modalities, with a batched forward pass and scoped backward pass.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "xmh/attention.hpp"
#include "xmh/encoders.hpp"
#include "xmh/hashcoder.hpp"
#include "xmh/losses.hpp"
#include "xmh/params.hpp"

namespace xmh {

struct ModelConfig {
  ImageGeometry image;
  std::size_t patch = 2;
  std::size_t features = 32;        // C
  std::size_t vocab = 256;          // V
  std::size_t text_hidden = 128;
  std::size_t text_features = 64;   // C_T
  std::size_t hash_hidden = 256;    // d_h
  std::size_t bits = 16;            // q

  std::size_t grid_height() const { return image.height / patch; }
  std::size_t grid_width() const { return image.width / patch; }
  std::size_t grid_cells() const { return grid_height() * grid_width(); }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Model {
  ModelConfig config;
  ImageEncoderParams image_encoder;
  TextEncoderParams text_encoder;
  ImageMaskParams image_mask;
  TextMaskParams text_mask;
  ImageHashParams image_hash;
  TextHashParams text_hash;

  /// Uniform(+-1/sqrt(fan_in)) initialization from a fixed seed.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  /// E and D parameters (updated on discriminator steps).
  ParamList encoder_discriminator_params();
  /// G parameters (updated on generator steps).
  ParamList generator_params();
  /// Stable order used by checkpoints.
  ParamList all_params();
};

struct ForwardOptions {
  AttentionOptions image_attention;
  AttentionOptions text_attention;
  bool with_background = true;
};

struct ForwardState {
  ImageEncoderCache image_encoder;
  TextEncoderCache text_encoder;
  AttentionCache image_attention;
  AttentionCache text_attention;
  SplitFeatures image_split;
  SplitFeatures text_split;
  HashCache image_foreground;
  HashCache image_background;
  HashCache text_foreground;
  HashCache text_background;
  BatchCodes codes;
};

/// images: [B, H0, W0, C0]; bow: [B, V]. Either may have B = 0 only if both do.
ForwardState forward(const Model& model, const Tensor& images, const Tensor& bow, const ForwardOptions& options = {});

/// Image-only or text-only pipelines for encoding a corpus.
ForwardState forward_image(const Model& model, const Tensor& images, const ForwardOptions& options = {});
ForwardState forward_text(const Model& model, const Tensor& bow, const ForwardOptions& options = {});

struct BackwardScope {
  /// Accumulate gradients into E and D parameters.
  bool encoder_discriminator = true;
  /// Propagate through the mask (straight-through) into G parameters; when
  /// false the mask is a constant.
  bool generator = true;
};

/// Accumulates parameter gradients for the code cotangents in code_grads.
void backward(Model& model, const ForwardState& state, const BatchCodes& code_grads, const BackwardScope& scope);

/// Text header line (architecture + tensor names and shapes) followed by the
/// parameters as a flat little-endian float64 stream. Written atomically.
void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_header(Model& model);

}  // namespace xmh
