#include <doctest.h>

#include <cmath>

#include "xmh/attention.hpp"
#include "xmh/encoders.hpp"
#include "xmh/errors.hpp"
#include "xmh/hashcoder.hpp"
#include "xmh/numkernel.hpp"
#include "xmh/rng.hpp"

using namespace xmh;

namespace {

void zero_affine(AffineParams& a) {
  a.weight.value.fill(0.0);
  a.bias.value.fill(0.0);
}

}  // namespace

TEST_CASE("image encoder shapes and zero input") {
  Rng rng(1);
  ImageEncoderParams p = ImageEncoderParams::init({8, 8, 3}, 2, 5, rng);
  const Tensor images = Tensor::uniform({2, 8, 8, 3}, 1.0, rng);
  const Tensor grid = encode_image(images, p);
  CHECK(grid.shape() == Shape{2, 4, 4, 5});
  CHECK(encode_image(images, p) == grid);

  zero_affine(p.patch_proj);
  zero_affine(p.hidden);
  CHECK(encode_image(Tensor({8, 8, 3}), p).sum() == 0.0);

  CHECK_THROWS_AS(ImageEncoderParams::init({8, 8, 3}, 3, 5, rng), ConfigError);
}

TEST_CASE("patchify order") {
  Tensor img({1, 4, 4, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  const Tensor rows = patchify(img, 2);
  CHECK(rows.shape() == Shape{4, 4});
  CHECK(rows.row(0)[0] == 0.0);
  CHECK(rows.row(0)[1] == 1.0);
  CHECK(rows.row(0)[2] == 4.0);
  CHECK(rows.row(0)[3] == 5.0);
  CHECK(rows.row(1)[0] == 2.0);
}

TEST_CASE("text encoder") {
  Rng rng(2);
  TextEncoderParams p = TextEncoderParams::init(12, 7, 5, rng);
  CHECK(encode_text(Tensor::uniform({3, 12}, 1.0, rng), p).shape() == Shape{3, 5});
  zero_affine(p.fc1);
  zero_affine(p.fc2);
  CHECK(encode_text(Tensor({12}), p).sum() == 0.0);
}

TEST_CASE("encoder backward accumulation and zero cotangent") {
  Rng rng(3);
  TextEncoderParams p = TextEncoderParams::init(6, 4, 3, rng);
  const Tensor bow = Tensor::uniform({2, 6}, 1.0, rng);
  TextEncoderCache cache;
  encode_text(bow, p, &cache);
  text_encoder_backward(cache, p, Tensor({2, 3}));
  CHECK(p.fc1.weight.grad.sum() == 0.0);
  CHECK(p.fc2.bias.grad.sum() == 0.0);

  const Tensor g = Tensor::uniform({2, 3}, 1.0, rng);
  text_encoder_backward(cache, p, g);
  const Tensor once = p.fc2.weight.grad;
  text_encoder_backward(cache, p, g);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(p.fc2.weight.grad[i] == 2.0 * once[i]);
}

TEST_CASE("image mask boundary cases") {
  Rng rng(4);
  ImageMaskParams p = ImageMaskParams::init(3, rng);
  const Tensor features = Tensor::uniform({2, 4, 4, 3}, 1.0, rng);

  ImageMaskParams zero = p;
  zero_affine(zero.proj);
  const AttentionMask all = image_mask(features, zero);
  CHECK(all.alpha == 1.0 / 16.0);
  for (double v : all.binary.data()) CHECK(v == 1.0);

  // One cell dominating by +100 gives a one-hot mask.
  ImageMaskParams pick = zero;
  pick.proj.weight.value = Tensor({1, 3}, {1, 0, 0});
  Tensor f(Shape{4, 4, 3});
  f[(2 * 4 + 1) * 3] = 100.0;
  const AttentionMask one = image_mask(f, pick);
  CHECK(one.binary.shape() == Shape{4, 4});
  CHECK(one.binary.sum() == 1.0);
  CHECK(one.binary[2 * 4 + 1] == 1.0);

  const AttentionMask m = image_mask(features, p);
  for (double v : m.binary.data()) CHECK((v == 0.0 || v == 1.0));
  for (std::size_t b = 0; b < 2; ++b) {
    double s = 0.0;
    for (double v : m.distribution.row(b)) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("text mask boundary cases") {
  Rng rng(5);
  TextMaskParams p = TextMaskParams::init(6, rng);
  TextMaskParams zero = p;
  zero_affine(zero.proj);
  const AttentionMask all = text_mask(Tensor::uniform({6}, 1.0, rng), zero);
  CHECK(all.alpha == 1.0 / 6.0);
  for (double v : all.binary.data()) CHECK(v == 1.0);

  TextMaskParams pick = zero;
  pick.proj.bias.value = Tensor({6}, {0, 0, 0, 50, 0, 0});
  const AttentionMask one = text_mask(Tensor({6}), pick);
  CHECK(one.binary == Tensor({6}, {0, 0, 0, 1, 0, 0}));

  const AttentionMask r = text_mask(Tensor::uniform({3, 6}, 2.0, rng), p);
  for (std::size_t b = 0; b < 3; ++b) {
    double s = 0.0;
    for (double v : r.distribution.row(b)) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("split") {
  Rng rng(6);
  const Tensor f = Tensor::uniform({2, 2, 3}, 1.0, rng);
  const SplitFeatures on = split(f, Tensor({2, 2}, 1.0));
  CHECK(on.foreground == f);
  CHECK(on.background.sum() == 0.0);
  const SplitFeatures off = split(f, Tensor({2, 2}, 0.0));
  CHECK(off.foreground.sum() == 0.0);
  CHECK(off.background == f);

  const SplitFeatures mixed = split(f, Tensor({2, 2}, {1, 0, 0, 1}));
  Tensor sum = mixed.foreground;
  sum.add_(mixed.background);
  CHECK(sum == f);

  CHECK_THROWS_AS(split(f, Tensor({5}, 1.0)), DimensionError);
}

TEST_CASE("attention backward") {
  Rng rng(7);
  ImageMaskParams p = ImageMaskParams::init(3, rng);
  const Tensor f = Tensor::uniform({2, 4, 4, 3}, 1.0, rng);
  AttentionCache cache;
  image_mask(f, p, {}, &cache);

  AttentionGrads zero = image_attention_backward(cache, p, Tensor(f.shape()), Tensor(f.shape()), true);
  CHECK(zero.features.sum() == 0.0);
  CHECK(p.proj.weight.grad.sum() == 0.0);

  const Tensor gf = Tensor::uniform(f.shape(), 1.0, rng);
  const Tensor gb = Tensor::uniform(f.shape(), 1.0, rng);
  AttentionGrads g = image_attention_backward(cache, p, gf, gb, true);
  // Straight-through: the cotangent at p is the cotangent at z, bit for bit.
  CHECK(g.distribution == g.mask);
}

TEST_CASE("hash heads") {
  Rng rng(8);
  for (std::size_t q : {16u, 32u, 64u}) {
    ImageHashParams ih = ImageHashParams::init(4 * 4 * 3, 8, q, rng);
    TextHashParams th = TextHashParams::init(5, q, rng);
    CHECK(hash_image(Tensor::uniform({2, 4, 4, 3}, 1.0, rng), ih).shape() == Shape{2, q});
    CHECK(hash_text(Tensor::uniform({5}, 1.0, rng), th).shape() == Shape{q});
  }
  ImageHashParams ih = ImageHashParams::init(12, 8, 16, rng);
  zero_affine(ih.fc1);
  zero_affine(ih.fc2);
  CHECK(hash_image(Tensor({2, 2, 3}), ih).sum() == 0.0);

  TextHashParams th = TextHashParams::init(5, 16, rng);
  th.fc.weight.value.scale_(5.0);
  const Tensor code = hash_text(Tensor::uniform({3, 5}, 1.0, rng), th);
  for (double v : code.data()) CHECK(std::abs(v) < 1.0);
  CHECK(hash_text(Tensor({5}, 0.5), th) == hash_text(Tensor({5}, 0.5), th));
}

TEST_CASE("binarize") {
  const std::vector<double> v{0.3, -0.7, 0.0};
  const BinaryCode c = binarize(v);
  CHECK(c.bits == std::vector<std::int8_t>{1, -1, 1});
  CHECK(binarize(c) == c);
  CHECK(to_bit_string(c) == "101");
  CHECK(from_bit_string("101") == c);
  CHECK_THROWS(from_bit_string("10x"));
}
