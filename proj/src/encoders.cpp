#include "xmh/encoders.hpp"

#include "xmh/errors.hpp"
#include "xmh/numkernel.hpp"

namespace xmh {

ImageEncoderParams ImageEncoderParams::init(ImageGeometry input, std::size_t patch, std::size_t features, Rng& rng) {
  if (patch == 0 || input.height % patch != 0 || input.width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide image " +
                      std::to_string(input.height) + "x" + std::to_string(input.width));
  }
  ImageEncoderParams p;
  p.input = input;
  p.patch = patch;
  p.patch_proj = AffineParams::init_uniform(patch * patch * input.channels, features, rng);
  p.hidden = AffineParams::init_uniform(features, features, rng);
  return p;
}

void ImageEncoderParams::append_to(ParamList& out, const std::string& prefix) {
  append_affine(out, prefix + ".patch_proj", patch_proj);
  append_affine(out, prefix + ".hidden", hidden);
}

Tensor patchify(const Tensor& images, std::size_t patch) {
  const std::size_t batch = images.extent(0);
  const std::size_t h0 = images.extent(1);
  const std::size_t w0 = images.extent(2);
  const std::size_t c0 = images.extent(3);
  if (patch == 0 || h0 % patch != 0 || w0 % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide image " + std::to_string(h0) +
                      "x" + std::to_string(w0));
  }
  const std::size_t gh = h0 / patch;
  const std::size_t gw = w0 / patch;
  const std::size_t width = patch * patch * c0;
  Tensor out({batch * gh * gw, width});
  auto src = images.data();
  auto dst = out.data();
  std::size_t k = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t gy = 0; gy < gh; ++gy) {
      for (std::size_t gx = 0; gx < gw; ++gx) {
        for (std::size_t py = 0; py < patch; ++py) {
          const std::size_t y = gy * patch + py;
          for (std::size_t px = 0; px < patch; ++px) {
            const std::size_t x = gx * patch + px;
            const std::size_t base = ((b * h0 + y) * w0 + x) * c0;
            for (std::size_t c = 0; c < c0; ++c) dst[k++] = src[base + c];
          }
        }
      }
    }
  }
  return out;
}

Tensor encode_image(const Tensor& images, const ImageEncoderParams& params, ImageEncoderCache* cache) {
  const bool single = images.rank() == 3;
  if (!single && images.rank() != 4) {
    throw DimensionError("encode_image expects [B,H,W,C] or [H,W,C], got " + shape_string(images.shape()));
  }
  const Tensor batched = single ? images.reshaped({1, images.extent(0), images.extent(1), images.extent(2)}) : images;
  const auto& in = params.input;
  if (batched.extent(1) != in.height || batched.extent(2) != in.width || batched.extent(3) != in.channels) {
    throw DimensionError("encode_image: image " + shape_string(images.shape()) + " does not match encoder " +
                         std::to_string(in.height) + "x" + std::to_string(in.width) + "x" +
                         std::to_string(in.channels));
  }
  const std::size_t batch = batched.extent(0);
  Tensor patches = patchify(batched, params.patch);
  Tensor projected = affine_forward(patches, params.patch_proj);
  Tensor hidden = affine_forward(projected, params.hidden);
  Tensor features = relu_forward(hidden);

  Shape grid{batch, params.grid_height(), params.grid_width(), params.features()};
  if (single) grid.erase(grid.begin());
  Tensor out = std::move(features).reshaped(grid);
  if (cache) {
    cache->patches = std::move(patches);
    cache->projected = std::move(projected);
    cache->hidden = std::move(hidden);
    cache->batch = batch;
  }
  return out;
}

void image_encoder_backward(const ImageEncoderCache& cache, ImageEncoderParams& params, const Tensor& grad_features) {
  if (grad_features.size() != cache.hidden.size()) {
    throw DimensionError("image encoder backward: cotangent " + shape_string(grad_features.shape()) +
                         " does not match cached activations");
  }
  const Tensor g = grad_features.reshaped(cache.hidden.shape());
  const Tensor g_hidden = relu_backward(cache.hidden, g);
  const Tensor g_projected = affine_backward_accumulate(cache.projected, params.hidden, g_hidden);
  // Pixels are not trainable, so the input gradient is dropped.
  AffineGrads last = affine_backward(cache.patches, params.patch_proj, g_projected);
  params.patch_proj.weight.grad.add_(last.weight);
  params.patch_proj.bias.grad.add_(last.bias);
}

TextEncoderParams TextEncoderParams::init(std::size_t vocab, std::size_t hidden, std::size_t features, Rng& rng) {
  TextEncoderParams p;
  p.fc1 = AffineParams::init_uniform(vocab, hidden, rng);
  p.fc2 = AffineParams::init_uniform(hidden, features, rng);
  return p;
}

void TextEncoderParams::append_to(ParamList& out, const std::string& prefix) {
  append_affine(out, prefix + ".fc1", fc1);
  append_affine(out, prefix + ".fc2", fc2);
}

Tensor encode_text(const Tensor& bow, const TextEncoderParams& params, TextEncoderCache* cache) {
  const std::size_t width = bow.rank() == 1 ? bow.extent(0) : bow.extent(1);
  if (bow.rank() > 2 || width != params.vocab()) {
    throw DimensionError("encode_text: bag-of-words " + shape_string(bow.shape()) + " but vocabulary is " +
                         std::to_string(params.vocab()));
  }
  Tensor hidden = affine_forward(bow, params.fc1);
  Tensor activated = relu_forward(hidden);
  Tensor out = affine_forward(activated, params.fc2);
  if (cache) {
    cache->bow = bow;
    cache->hidden = std::move(hidden);
    cache->activated = std::move(activated);
  }
  return out;
}

Tensor text_encoder_backward(const TextEncoderCache& cache, TextEncoderParams& params, const Tensor& grad_features) {
  const Tensor g_act = affine_backward_accumulate(cache.activated, params.fc2, grad_features);
  const Tensor g_hidden = relu_backward(cache.hidden, g_act);
  return affine_backward_accumulate(cache.bow, params.fc1, g_hidden);
}

}  // namespace xmh
