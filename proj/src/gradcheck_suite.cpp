#include "xmh/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "xmh/attention.hpp"
#include "xmh/encoders.hpp"
#include "xmh/errors.hpp"
#include "xmh/gradcheck.hpp"
#include "xmh/hashcoder.hpp"
#include "xmh/losses.hpp"
#include "xmh/model.hpp"
#include "xmh/numkernel.hpp"

namespace xmh {

bool GradcheckSuiteReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

namespace {

// Distance from a kink (relu at 0, hinge at 0) below which an instance is
// redrawn, so that central differences never straddle one.
constexpr double kKinkGuard = 3e-4;
constexpr std::size_t kMaxRedraws = 1000;

// Feature grid H = W = 4 with C = 3 channels from 8x8x3 images, q = 8.
constexpr std::size_t kGrid = 4;
constexpr std::size_t kChannels = 3;
constexpr std::size_t kPatch = 2;
constexpr std::size_t kBits = 8;
constexpr std::size_t kVocab = 10;
constexpr std::size_t kTextHidden = 6;
constexpr std::size_t kTextFeatures = 5;
constexpr std::size_t kHashHidden = 8;

struct Problem {
  std::shared_ptr<void> state;
  std::vector<Tensor*> slots;
  std::function<double()> loss;
  std::function<std::vector<Tensor>()> gradient;
  bool near_kink = false;
};

using Builder = std::function<Problem(Rng&)>;

bool near_zero(const Tensor& t) {
  return std::any_of(t.data().begin(), t.data().end(), [](double v) { return std::abs(v) < kKinkGuard; });
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double weighted_sum(const Tensor& w, const Tensor& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
  return s;
}

void add_affine_slots(Problem& p, AffineParams& a) {
  p.slots.push_back(&a.weight.value);
  p.slots.push_back(&a.bias.value);
}

void push_affine_grads(std::vector<Tensor>& out, const AffineParams& a) {
  out.push_back(a.weight.grad);
  out.push_back(a.bias.grad);
}

// --- primitives -------------------------------------------------------------

Problem affine_problem(Rng& rng) {
  struct S {
    Tensor x, w;
    AffineParams params;
  };
  auto s = std::make_shared<S>();
  s->x = random_tensor({3, 5}, rng);
  s->params = AffineParams::init_uniform(5, 4, rng);
  s->w = random_tensor({3, 4}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->x};
  add_affine_slots(p, s->params);
  p.loss = [s] { return weighted_sum(s->w, affine_forward(s->x, s->params)); };
  p.gradient = [s] {
    AffineGrads g = affine_backward(s->x, s->params, s->w);
    return std::vector<Tensor>{g.x, g.weight, g.bias};
  };
  return p;
}

Problem relu_problem(Rng& rng) {
  struct S {
    Tensor x, w;
  };
  auto s = std::make_shared<S>();
  s->x = random_tensor({3, 6}, rng);
  s->w = random_tensor({3, 6}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->x};
  p.near_kink = near_zero(s->x);
  p.loss = [s] { return weighted_sum(s->w, relu_forward(s->x)); };
  p.gradient = [s] { return std::vector<Tensor>{relu_backward(s->x, s->w)}; };
  return p;
}

Problem tanh_problem(Rng& rng) {
  struct S {
    Tensor x, w;
  };
  auto s = std::make_shared<S>();
  s->x = random_tensor({3, 6}, rng, -2.0, 2.0);
  s->w = random_tensor({3, 6}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->x};
  p.loss = [s] { return weighted_sum(s->w, tanh_forward(s->x)); };
  p.gradient = [s] { return std::vector<Tensor>{tanh_backward(tanh_forward(s->x), s->w)}; };
  return p;
}

Problem grid_softmax_problem(Rng& rng) {
  struct S {
    Tensor m, w;
  };
  auto s = std::make_shared<S>();
  s->m = random_tensor({kGrid, kGrid}, rng, -2.0, 2.0);
  s->w = random_tensor({kGrid, kGrid}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->m};
  p.loss = [s] { return weighted_sum(s->w, grid_softmax_forward(s->m)); };
  p.gradient = [s] { return std::vector<Tensor>{grid_softmax_backward(grid_softmax_forward(s->m), s->w)}; };
  return p;
}

Problem row_softmax_problem(Rng& rng) {
  struct S {
    Tensor m, w;
  };
  auto s = std::make_shared<S>();
  s->m = random_tensor({3, 5}, rng, -2.0, 2.0);
  s->w = random_tensor({3, 5}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->m};
  p.loss = [s] { return weighted_sum(s->w, softmax_rows_forward(s->m)); };
  p.gradient = [s] { return std::vector<Tensor>{softmax_rows_backward(softmax_rows_forward(s->m), s->w)}; };
  return p;
}

// --- encoders ---------------------------------------------------------------

Problem image_encoder_problem(Rng& rng) {
  struct S {
    Tensor images, w;
    ImageEncoderParams params;
  };
  auto s = std::make_shared<S>();
  const ImageGeometry geom{kGrid * kPatch, kGrid * kPatch, kChannels};
  s->images = random_tensor({2, geom.height, geom.width, geom.channels}, rng, 0.0, 1.0);
  s->params = ImageEncoderParams::init(geom, kPatch, kChannels, rng);
  s->w = random_tensor({2, kGrid, kGrid, kChannels}, rng);
  Problem p;
  p.state = s;
  add_affine_slots(p, s->params.patch_proj);
  add_affine_slots(p, s->params.hidden);
  ImageEncoderCache cache;
  encode_image(s->images, s->params, &cache);
  p.near_kink = near_zero(cache.hidden);
  p.loss = [s] { return weighted_sum(s->w, encode_image(s->images, s->params)); };
  p.gradient = [s] {
    ImageEncoderCache c;
    encode_image(s->images, s->params, &c);
    s->params.patch_proj.zero_grad();
    s->params.hidden.zero_grad();
    image_encoder_backward(c, s->params, s->w);
    std::vector<Tensor> out;
    push_affine_grads(out, s->params.patch_proj);
    push_affine_grads(out, s->params.hidden);
    return out;
  };
  return p;
}

Problem text_encoder_problem(Rng& rng) {
  struct S {
    Tensor bow, w;
    TextEncoderParams params;
  };
  auto s = std::make_shared<S>();
  s->bow = random_tensor({2, kVocab}, rng, 0.0, 2.0);
  s->params = TextEncoderParams::init(kVocab, kTextHidden, kTextFeatures, rng);
  s->w = random_tensor({2, kTextFeatures}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->bow};
  add_affine_slots(p, s->params.fc1);
  add_affine_slots(p, s->params.fc2);
  TextEncoderCache cache;
  encode_text(s->bow, s->params, &cache);
  p.near_kink = near_zero(cache.hidden);
  p.loss = [s] { return weighted_sum(s->w, encode_text(s->bow, s->params)); };
  p.gradient = [s] {
    TextEncoderCache c;
    encode_text(s->bow, s->params, &c);
    s->params.fc1.zero_grad();
    s->params.fc2.zero_grad();
    std::vector<Tensor> out{text_encoder_backward(c, s->params, s->w)};
    push_affine_grads(out, s->params.fc1);
    push_affine_grads(out, s->params.fc2);
    return out;
  };
  return p;
}

// --- attention --------------------------------------------------------------

AttentionOptions identity_hook() {
  AttentionOptions o;
  o.identity_threshold = true;
  return o;
}

Problem image_attention_problem(Rng& rng) {
  struct S {
    Tensor features, wf, wb;
    ImageMaskParams params;
  };
  auto s = std::make_shared<S>();
  s->features = random_tensor({2, kGrid, kGrid, kChannels}, rng);
  s->params = ImageMaskParams::init(kChannels, rng);
  s->wf = random_tensor(s->features.shape(), rng);
  s->wb = random_tensor(s->features.shape(), rng);
  Problem p;
  p.state = s;
  p.slots = {&s->features};
  add_affine_slots(p, s->params.proj);
  p.loss = [s] {
    const AttentionMask m = image_mask(s->features, s->params, identity_hook());
    const SplitFeatures f = split(s->features, m.binary);
    return weighted_sum(s->wf, f.foreground) + weighted_sum(s->wb, f.background);
  };
  p.gradient = [s] {
    AttentionCache cache;
    image_mask(s->features, s->params, identity_hook(), &cache);
    s->params.proj.zero_grad();
    AttentionGrads g = image_attention_backward(cache, s->params, s->wf, s->wb, true);
    std::vector<Tensor> out{g.features};
    push_affine_grads(out, s->params.proj);
    return out;
  };
  return p;
}

Problem text_attention_problem(Rng& rng) {
  struct S {
    Tensor features, wf, wb;
    TextMaskParams params;
  };
  auto s = std::make_shared<S>();
  s->features = random_tensor({2, kTextFeatures}, rng);
  s->params = TextMaskParams::init(kTextFeatures, rng);
  s->wf = random_tensor(s->features.shape(), rng);
  s->wb = random_tensor(s->features.shape(), rng);
  Problem p;
  p.state = s;
  p.slots = {&s->features};
  add_affine_slots(p, s->params.proj);
  AttentionCache probe;
  text_mask(s->features, s->params, identity_hook(), &probe);
  p.near_kink = near_zero(probe.projected);
  p.loss = [s] {
    const AttentionMask m = text_mask(s->features, s->params, identity_hook());
    const SplitFeatures f = split(s->features, m.binary);
    return weighted_sum(s->wf, f.foreground) + weighted_sum(s->wb, f.background);
  };
  p.gradient = [s] {
    AttentionCache cache;
    text_mask(s->features, s->params, identity_hook(), &cache);
    s->params.proj.zero_grad();
    AttentionGrads g = text_attention_backward(cache, s->params, s->wf, s->wb, true);
    std::vector<Tensor> out{g.features};
    push_affine_grads(out, s->params.proj);
    return out;
  };
  return p;
}

// --- hash heads -------------------------------------------------------------

Problem image_hash_problem(Rng& rng) {
  struct S {
    Tensor features, w;
    ImageHashParams params;
  };
  auto s = std::make_shared<S>();
  s->features = random_tensor({2, kGrid, kGrid, kChannels}, rng);
  s->params = ImageHashParams::init(kGrid * kGrid * kChannels, kHashHidden, kBits, rng);
  s->w = random_tensor({2, kBits}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->features};
  add_affine_slots(p, s->params.fc1);
  add_affine_slots(p, s->params.fc2);
  HashCache cache;
  hash_image(s->features, s->params, &cache);
  p.near_kink = near_zero(cache.hidden);
  p.loss = [s] { return weighted_sum(s->w, hash_image(s->features, s->params)); };
  p.gradient = [s] {
    HashCache c;
    hash_image(s->features, s->params, &c);
    s->params.fc1.zero_grad();
    s->params.fc2.zero_grad();
    std::vector<Tensor> out{hash_image_backward(c, s->params, s->w, true).reshaped(s->features.shape())};
    push_affine_grads(out, s->params.fc1);
    push_affine_grads(out, s->params.fc2);
    return out;
  };
  return p;
}

Problem text_hash_problem(Rng& rng) {
  struct S {
    Tensor features, w;
    TextHashParams params;
  };
  auto s = std::make_shared<S>();
  s->features = random_tensor({2, kTextFeatures}, rng);
  s->params = TextHashParams::init(kTextFeatures, kBits, rng);
  s->w = random_tensor({2, kBits}, rng);
  Problem p;
  p.state = s;
  p.slots = {&s->features};
  add_affine_slots(p, s->params.fc);
  p.loss = [s] { return weighted_sum(s->w, hash_text(s->features, s->params)); };
  p.gradient = [s] {
    HashCache c;
    hash_text(s->features, s->params, &c);
    s->params.fc.zero_grad();
    std::vector<Tensor> out{hash_text_backward(c, s->params, s->w, true).reshaped(s->features.shape())};
    push_affine_grads(out, s->params.fc);
    return out;
  };
  return p;
}

// --- losses -----------------------------------------------------------------

double hinge_argument(std::span<const double> a, std::span<const double> pos, std::span<const double> neg,
                      const LossConfig& cfg) {
  return cfg.margin + code_distance(a, pos, cfg.distance) - code_distance(a, neg, cfg.distance);
}

Problem hinge_problem(Rng& rng, DistanceKind kind) {
  struct S {
    Tensor a, pos, neg;
    LossConfig cfg;
  };
  auto s = std::make_shared<S>();
  s->a = random_tensor({kBits}, rng);
  s->pos = random_tensor({kBits}, rng);
  s->neg = random_tensor({kBits}, rng);
  s->cfg.margin = rng.uniform(0.5, 3.0);
  s->cfg.distance = kind;
  Problem p;
  p.state = s;
  p.slots = {&s->a, &s->pos, &s->neg};
  p.near_kink = std::abs(hinge_argument(s->a.data(), s->pos.data(), s->neg.data(), s->cfg)) < kKinkGuard;
  p.loss = [s] { return triplet_hinge(s->a.data(), s->pos.data(), s->neg.data(), s->cfg).value; };
  p.gradient = [s] {
    HingeResult h = triplet_hinge(s->a.data(), s->pos.data(), s->neg.data(), s->cfg);
    return std::vector<Tensor>{Tensor({kBits}, h.grad_anchor), Tensor({kBits}, h.grad_positive),
                               Tensor({kBits}, h.grad_negative)};
  };
  return p;
}

const Tensor& anchor_table(Direction d, const BatchCodes& c) {
  switch (d) {
    case Direction::ImageToText:
    case Direction::ImageToImage:
    case Direction::ImageToTextBackground: return c.image;
    default: return c.text;
  }
}

const Tensor& database_table(Direction d, const BatchCodes& c) {
  switch (d) {
    case Direction::TextToImage:
    case Direction::ImageToImage: return c.image;
    case Direction::ImageToText:
    case Direction::TextToText: return c.text;
    case Direction::TextToImageBackground: return c.image_background;
    case Direction::ImageToTextBackground: return c.text_background;
  }
  return c.image;
}

bool any_hinge_near_kink(const BatchCodes& codes, const TripletSet& triplets, const LossConfig& cfg) {
  for (Direction d : kAllDirections) {
    const Tensor& a = anchor_table(d, codes);
    const Tensor& db = database_table(d, codes);
    if (a.empty() || db.empty()) continue;
    for (const auto& t : triplets[static_cast<std::size_t>(d)].triples) {
      if (std::abs(hinge_argument(a.row(t.anchor), db.row(t.positive), db.row(t.negative), cfg)) < kKinkGuard) {
        return true;
      }
    }
  }
  return false;
}

struct LabelledBatch {
  SimilarityMatrix similarity;
  std::vector<std::uint32_t> ids;
};

LabelledBatch random_labels(std::size_t batch, Rng& rng) {
  std::vector<LabelSet> labels(batch);
  for (auto& l : labels) {
    l.push_back(static_cast<std::uint32_t>(rng.below(3)));
    if (rng.bernoulli(0.3)) l.push_back(static_cast<std::uint32_t>(3 + rng.below(2)));
  }
  LabelledBatch out{build_similarity(labels), std::vector<std::uint32_t>(batch)};
  std::iota(out.ids.begin(), out.ids.end(), 0u);
  return out;
}

Problem loss_problem(Rng& rng, bool adversarial) {
  struct S {
    BatchCodes codes;
    TripletSet triplets;
    LossConfig cfg;
    bool adversarial;
  };
  auto s = std::make_shared<S>();
  const std::size_t batch = 6;
  for (Tensor* t : {&s->codes.image, &s->codes.text, &s->codes.image_background, &s->codes.text_background}) {
    *t = random_tensor({batch, kBits}, rng);
  }
  const LabelledBatch lb = random_labels(batch, rng);
  s->triplets = sample_all_directions(lb.similarity, lb.ids, 2, rng);
  s->cfg = LossConfig::for_bits(kBits);
  s->cfg.distance = rng.bernoulli(0.5) ? DistanceKind::SquaredEuclidean : DistanceKind::Euclidean;
  s->adversarial = adversarial;
  Problem p;
  p.state = s;
  p.slots = {&s->codes.image, &s->codes.text};
  if (adversarial) {
    p.slots.push_back(&s->codes.image_background);
    p.slots.push_back(&s->codes.text_background);
  }
  p.near_kink = any_hinge_near_kink(s->codes, s->triplets, s->cfg);
  p.loss = [s] {
    return s->adversarial ? adversarial_loss(s->codes, s->triplets, s->cfg).total()
                          : cross_modal_loss(s->codes, s->triplets, s->cfg).total();
  };
  p.gradient = [s] {
    BatchCodes g = zero_grads_like(s->codes);
    if (s->adversarial) {
      adversarial_loss(s->codes, s->triplets, s->cfg, &g);
      return std::vector<Tensor>{g.image, g.text, g.image_background, g.text_background};
    }
    cross_modal_loss(s->codes, s->triplets, s->cfg, &g);
    return std::vector<Tensor>{g.image, g.text};
  };
  return p;
}

// --- composed objective -----------------------------------------------------

Problem composed_problem(Rng& rng) {
  struct S {
    Model model;
    Tensor images, bow;
    TripletSet triplets;
    LossConfig cfg;
    ForwardOptions options;
  };
  auto s = std::make_shared<S>();
  ModelConfig mc;
  mc.image = {kGrid * kPatch, kGrid * kPatch, kChannels};
  mc.patch = kPatch;
  mc.features = kChannels;
  mc.vocab = kVocab;
  mc.text_hidden = kTextHidden;
  mc.text_features = kTextFeatures;
  mc.hash_hidden = kHashHidden;
  mc.bits = kBits;
  s->model = Model::init(mc, rng.next());
  const std::size_t batch = 4;
  s->images = random_tensor({batch, mc.image.height, mc.image.width, mc.image.channels}, rng, 0.0, 1.0);
  s->bow = random_tensor({batch, kVocab}, rng, 0.0, 2.0);
  const LabelledBatch lb = random_labels(batch, rng);
  s->triplets = sample_all_directions(lb.similarity, lb.ids, 2, rng);
  s->cfg = LossConfig::for_bits(kBits);
  s->options.image_attention = identity_hook();
  s->options.text_attention = identity_hook();

  Problem p;
  p.state = s;
  for (const auto& np : s->model.all_params()) p.slots.push_back(&np.tensor->value);
  const ForwardState st = forward(s->model, s->images, s->bow, s->options);
  p.near_kink = near_zero(st.image_encoder.hidden) || near_zero(st.text_encoder.hidden) ||
                near_zero(st.text_attention.projected) || near_zero(st.image_foreground.hidden) ||
                near_zero(st.image_background.hidden) || any_hinge_near_kink(st.codes, s->triplets, s->cfg);
  p.loss = [s] {
    const ForwardState f = forward(s->model, s->images, s->bow, s->options);
    return cross_modal_loss(f.codes, s->triplets, s->cfg).total() +
           adversarial_loss(f.codes, s->triplets, s->cfg).total();
  };
  p.gradient = [s] {
    const ForwardState f = forward(s->model, s->images, s->bow, s->options);
    BatchCodes g = zero_grads_like(f.codes);
    cross_modal_loss(f.codes, s->triplets, s->cfg, &g);
    adversarial_loss(f.codes, s->triplets, s->cfg, &g);
    const ParamList params = s->model.all_params();
    zero_grads(params);
    backward(s->model, f, g, BackwardScope{true, true});
    std::vector<Tensor> out;
    for (const auto& np : params) out.push_back(np.tensor->grad);
    return out;
  };
  return p;
}

// --- driver -----------------------------------------------------------------

void check_problem(Problem& p, const GradcheckSuiteOptions& options, GradcheckEntry& entry) {
  const std::vector<Tensor> analytic = p.gradient();
  if (analytic.size() != p.slots.size()) throw Error("gradient check: slot count mismatch in " + entry.name);
  for (std::size_t i = 0; i < p.slots.size(); ++i) {
    Tensor* slot = p.slots[i];
    const Tensor origin = *slot;
    const Tensor& expected = analytic[i];
    auto f = [&](const Tensor& x) {
      *slot = x;
      const double v = p.loss();
      *slot = origin;
      return v;
    };
    auto g = [&](const Tensor&) { return expected.reshaped(origin.shape()); };
    const GradCheckReport r = finite_diff_check(f, g, origin, options.tol, options.step);
    entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
    entry.coordinates += origin.size();
  }
}

class FaultScope {
 public:
  explicit FaultScope(bool on) : previous_(tanh_backward_sign_fault()) { set_tanh_backward_sign_fault(on); }
  ~FaultScope() { set_tanh_backward_sign_fault(previous_); }
  FaultScope(const FaultScope&) = delete;
  FaultScope& operator=(const FaultScope&) = delete;

 private:
  bool previous_;
};

}  // namespace

GradcheckSuiteReport run_gradcheck_suite(const GradcheckSuiteOptions& options) {
  if (!(options.tol > 0.0)) throw ConfigError("gradient check tolerance must be positive");
  if (options.instances == 0) throw ConfigError("gradient check needs at least one instance");
  const auto start = std::chrono::steady_clock::now();
  FaultScope fault(options.inject_tanh_sign_fault);

  const std::vector<std::pair<std::string, Builder>> builders{
      {"affine", affine_problem},
      {"relu", relu_problem},
      {"tanh", tanh_problem},
      {"grid_softmax", grid_softmax_problem},
      {"row_softmax", row_softmax_problem},
      {"image_encoder", image_encoder_problem},
      {"text_encoder", text_encoder_problem},
      {"image_attention", image_attention_problem},
      {"text_attention", text_attention_problem},
      {"image_hash", image_hash_problem},
      {"text_hash", text_hash_problem},
      {"triplet_hinge_squared", [](Rng& r) { return hinge_problem(r, DistanceKind::SquaredEuclidean); }},
      {"triplet_hinge_euclidean", [](Rng& r) { return hinge_problem(r, DistanceKind::Euclidean); }},
      {"cross_modal_loss", [](Rng& r) { return loss_problem(r, false); }},
      {"adversarial_loss", [](Rng& r) { return loss_problem(r, true); }},
      {"composed_objective", composed_problem},
  };

  GradcheckSuiteReport report;
  report.tol = options.tol;
  Rng root(options.seed);
  for (const auto& [name, build] : builders) {
    GradcheckEntry entry;
    entry.name = name;
    Rng rng = root.split();
    for (std::size_t i = 0; i < options.instances; ++i) {
      Problem p = build(rng);
      for (std::size_t redraw = 0; p.near_kink; ++redraw) {
        if (redraw == kMaxRedraws) throw NumericError("gradient check: could not draw a kink-free " + name);
        p = build(rng);
      }
      check_problem(p, options, entry);
      ++entry.instances;
    }
    entry.passed = entry.max_rel_error <= options.tol;
    report.entries.push_back(entry);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_gradcheck_report(const GradcheckSuiteReport& report) {
  std::ostringstream os;
  for (const auto& e : report.entries) {
    os << e.name << '\t' << e.instances << '\t' << io::format_double(e.max_rel_error) << '\t'
       << (e.passed ? "PASS" : "FAIL") << '\n';
  }
  return os.str();
}

}  // namespace xmh
