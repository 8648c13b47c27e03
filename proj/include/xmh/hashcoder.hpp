#pragma once

// Discriminative hash heads: features -> q-dim relaxed code in (-1, 1), and
// the sign quantizer that turns relaxed codes into {-1, +1} bits.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmh/params.hpp"
#include "xmh/tensor.hpp"

namespace xmh {

/// Flattened grid -> hidden (relu) -> q (tanh).
struct ImageHashParams {
  AffineParams fc1;
  AffineParams fc2;

  static ImageHashParams init(std::size_t input, std::size_t hidden, std::size_t bits, Rng& rng);
  std::size_t bits() const { return fc2.out(); }
  void append_to(ParamList& out, const std::string& prefix);
};

/// C_T -> q (tanh).
struct TextHashParams {
  AffineParams fc;

  static TextHashParams init(std::size_t input, std::size_t bits, Rng& rng);
  std::size_t bits() const { return fc.out(); }
  void append_to(ParamList& out, const std::string& prefix) { append_affine(out, prefix + ".fc", fc); }
};

struct HashCache {
  Tensor input;      // flattened [B, D]
  Tensor hidden;     // image only, pre-relu
  Tensor activated;  // image only
  Tensor code;       // tanh output [B, q]
};

/// features: [B, H, W, C] or [H, W, C]. Returns [B, q] or [q].
Tensor hash_image(const Tensor& features, const ImageHashParams& params, HashCache* cache = nullptr);
/// features: [B, C_T] or [C_T].
Tensor hash_text(const Tensor& features, const TextHashParams& params, HashCache* cache = nullptr);

/// Returns the cotangent w.r.t. the (flattened) input features. Parameter
/// gradients are accumulated only when accumulate_params is set.
Tensor hash_image_backward(const HashCache& cache, ImageHashParams& params, const Tensor& grad_code,
                           bool accumulate_params = true);
Tensor hash_text_backward(const HashCache& cache, TextHashParams& params, const Tensor& grad_code,
                          bool accumulate_params = true);

/// q sign bits; +1 where the relaxed value is >= 0 (so exact zero maps to +1).
struct BinaryCode {
  std::vector<std::int8_t> bits;

  std::size_t size() const { return bits.size(); }
  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;
};

BinaryCode binarize(std::span<const double> relaxed);
BinaryCode binarize(const BinaryCode& code);

/// Display form using bit = (1 + sign) / 2, e.g. "0110".
std::string to_bit_string(const BinaryCode& code);
BinaryCode from_bit_string(std::string_view bits);

}  // namespace xmh
