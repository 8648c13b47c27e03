#include "xmh/hashcoder.hpp"

#include "xmh/errors.hpp"
#include "xmh/numkernel.hpp"

namespace xmh {

ImageHashParams ImageHashParams::init(std::size_t input, std::size_t hidden, std::size_t bits, Rng& rng) {
  ImageHashParams p;
  p.fc1 = AffineParams::init_uniform(input, hidden, rng);
  p.fc2 = AffineParams::init_uniform(hidden, bits, rng);
  return p;
}

void ImageHashParams::append_to(ParamList& out, const std::string& prefix) {
  append_affine(out, prefix + ".fc1", fc1);
  append_affine(out, prefix + ".fc2", fc2);
}

TextHashParams TextHashParams::init(std::size_t input, std::size_t bits, Rng& rng) {
  return TextHashParams{AffineParams::init_uniform(input, bits, rng)};
}

namespace {

Tensor flatten_rows(const Tensor& x, std::size_t single_rank, bool& single) {
  single = x.rank() == single_rank;
  if (single) return x.reshaped({1, x.size()});
  return x.reshaped({x.extent(0), x.row_size()});
}

}  // namespace

Tensor hash_image(const Tensor& features, const ImageHashParams& params, HashCache* cache) {
  if (features.rank() != 3 && features.rank() != 4) {
    throw DimensionError("hash_image expects [B,H,W,C] or [H,W,C], got " + shape_string(features.shape()));
  }
  bool single = false;
  Tensor input = flatten_rows(features, 3, single);
  if (input.extent(1) != params.fc1.in()) {
    throw DimensionError("hash_image: grid of " + std::to_string(input.extent(1)) + " values but head expects " +
                         std::to_string(params.fc1.in()));
  }
  Tensor hidden = affine_forward(input, params.fc1);
  Tensor activated = relu_forward(hidden);
  Tensor code = tanh_forward(affine_forward(activated, params.fc2));
  if (cache) {
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
    cache->activated = std::move(activated);
    cache->code = code;
  }
  return single ? std::move(code).reshaped({params.bits()}) : code;
}

Tensor hash_text(const Tensor& features, const TextHashParams& params, HashCache* cache) {
  if (features.rank() != 1 && features.rank() != 2) {
    throw DimensionError("hash_text expects [B,C] or [C], got " + shape_string(features.shape()));
  }
  bool single = false;
  Tensor input = flatten_rows(features, 1, single);
  Tensor code = tanh_forward(affine_forward(input, params.fc));
  if (cache) {
    cache->input = std::move(input);
    cache->code = code;
  }
  return single ? std::move(code).reshaped({params.bits()}) : code;
}

Tensor hash_image_backward(const HashCache& cache, ImageHashParams& params, const Tensor& grad_code,
                           bool accumulate_params) {
  const Tensor g = tanh_backward(cache.code, grad_code.reshaped(cache.code.shape()));
  Tensor g_act;
  if (accumulate_params) {
    g_act = affine_backward_accumulate(cache.activated, params.fc2, g);
  } else {
    g_act = affine_backward_input(params.fc2, g);
  }
  const Tensor g_hidden = relu_backward(cache.hidden, g_act);
  if (accumulate_params) return affine_backward_accumulate(cache.input, params.fc1, g_hidden);
  return affine_backward_input(params.fc1, g_hidden);
}

Tensor hash_text_backward(const HashCache& cache, TextHashParams& params, const Tensor& grad_code,
                          bool accumulate_params) {
  const Tensor g = tanh_backward(cache.code, grad_code.reshaped(cache.code.shape()));
  if (accumulate_params) return affine_backward_accumulate(cache.input, params.fc, g);
  return affine_backward_input(params.fc, g);
}

BinaryCode binarize(std::span<const double> relaxed) {
  BinaryCode code;
  code.bits.reserve(relaxed.size());
  for (double v : relaxed) code.bits.push_back(v >= 0.0 ? 1 : -1);
  return code;
}

BinaryCode binarize(const BinaryCode& code) {
  BinaryCode out = code;
  for (auto& b : out.bits) b = b >= 0 ? 1 : -1;
  return out;
}

std::string to_bit_string(const BinaryCode& code) {
  std::string s;
  s.reserve(code.size());
  for (auto b : code.bits) s.push_back(b > 0 ? '1' : '0');
  return s;
}

BinaryCode from_bit_string(std::string_view bits) {
  BinaryCode code;
  code.bits.reserve(bits.size());
  for (char ch : bits) {
    if (ch != '0' && ch != '1') throw FormatError("bit string contains '" + std::string(1, ch) + "'");
    code.bits.push_back(ch == '1' ? 1 : -1);
  }
  return code;
}

}  // namespace xmh
