#include "xmh/model.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "xmh/errors.hpp"

namespace xmh {

namespace fs = std::filesystem;

void ModelConfig::validate() const {
  if (patch == 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide the " + std::to_string(image.height) +
                      "x" + std::to_string(image.width) + " image");
  }
  if (image.channels == 0 || features == 0 || vocab == 0 || text_hidden == 0 || text_features == 0 ||
      hash_hidden == 0 || bits == 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m;
  m.config = config;
  m.image_encoder = ImageEncoderParams::init(config.image, config.patch, config.features, rng);
  m.text_encoder = TextEncoderParams::init(config.vocab, config.text_hidden, config.text_features, rng);
  m.image_mask = ImageMaskParams::init(config.features, rng);
  m.text_mask = TextMaskParams::init(config.text_features, rng);
  m.image_hash = ImageHashParams::init(config.grid_cells() * config.features, config.hash_hidden, config.bits, rng);
  m.text_hash = TextHashParams::init(config.text_features, config.bits, rng);
  return m;
}

ParamList Model::encoder_discriminator_params() {
  ParamList out;
  image_encoder.append_to(out, "image_encoder");
  text_encoder.append_to(out, "text_encoder");
  image_hash.append_to(out, "image_hash");
  text_hash.append_to(out, "text_hash");
  return out;
}

ParamList Model::generator_params() {
  ParamList out;
  image_mask.append_to(out, "image_mask");
  text_mask.append_to(out, "text_mask");
  return out;
}

ParamList Model::all_params() {
  ParamList out = encoder_discriminator_params();
  for (auto& p : generator_params()) out.push_back(p);
  return out;
}

ForwardState forward_image(const Model& model, const Tensor& images, const ForwardOptions& options) {
  ForwardState s;
  const Tensor features = encode_image(images, model.image_encoder, &s.image_encoder);
  const AttentionMask mask = image_mask(features, model.image_mask, options.image_attention, &s.image_attention);
  s.image_split = split(features, mask.binary);
  s.codes.image = hash_image(s.image_split.foreground, model.image_hash, &s.image_foreground);
  if (options.with_background) {
    s.codes.image_background = hash_image(s.image_split.background, model.image_hash, &s.image_background);
  }
  return s;
}

ForwardState forward_text(const Model& model, const Tensor& bow, const ForwardOptions& options) {
  ForwardState s;
  const Tensor features = encode_text(bow, model.text_encoder, &s.text_encoder);
  const AttentionMask mask = text_mask(features, model.text_mask, options.text_attention, &s.text_attention);
  s.text_split = split(features, mask.binary);
  s.codes.text = hash_text(s.text_split.foreground, model.text_hash, &s.text_foreground);
  if (options.with_background) {
    s.codes.text_background = hash_text(s.text_split.background, model.text_hash, &s.text_background);
  }
  return s;
}

ForwardState forward(const Model& model, const Tensor& images, const Tensor& bow, const ForwardOptions& options) {
  if (images.extent(0) != bow.extent(0)) {
    throw DimensionError("forward: " + std::to_string(images.extent(0)) + " images but " +
                         std::to_string(bow.extent(0)) + " texts");
  }
  ForwardState s = forward_image(model, images, options);
  ForwardState t = forward_text(model, bow, options);
  s.text_encoder = std::move(t.text_encoder);
  s.text_attention = std::move(t.text_attention);
  s.text_split = std::move(t.text_split);
  s.text_foreground = std::move(t.text_foreground);
  s.text_background = std::move(t.text_background);
  s.codes.text = std::move(t.codes.text);
  s.codes.text_background = std::move(t.codes.text_background);
  return s;
}

namespace {

bool all_zero(const Tensor& t) {
  for (double v : t.data()) {
    if (v != 0.0) return false;
  }
  return true;
}

template <typename Params, typename Backward>
Tensor head_backward(const HashCache& cache, Params& params, const Tensor& grad, bool accumulate, Backward fn) {
  if (cache.code.rank() == 0 || grad.rank() == 0) return Tensor();
  if (all_zero(grad)) return Tensor(cache.input.shape());
  return fn(cache, params, grad, accumulate);
}

Tensor or_zeros(Tensor t, const Tensor& like) { return t.rank() == 0 ? Tensor(like.shape()) : std::move(t); }

}  // namespace

void backward(Model& model, const ForwardState& state, const BatchCodes& code_grads, const BackwardScope& scope) {
  const bool ed = scope.encoder_discriminator;
  if (state.codes.image.rank() != 0 && state.codes.image.extent(0) > 0) {
    const auto& feats = state.image_attention.features;
    Tensor g_fg = or_zeros(head_backward(state.image_foreground, model.image_hash, code_grads.image, ed,
                                         &hash_image_backward),
                           feats);
    Tensor g_bg = or_zeros(head_backward(state.image_background, model.image_hash, code_grads.image_background, ed,
                                         &hash_image_backward),
                           feats);
    const AttentionGrads ag =
        image_attention_backward(state.image_attention, model.image_mask, g_fg, g_bg, scope.generator);
    if (ed) image_encoder_backward(state.image_encoder, model.image_encoder, ag.features);
  }
  if (state.codes.text.rank() != 0 && state.codes.text.extent(0) > 0) {
    const auto& feats = state.text_attention.features;
    Tensor g_fg = or_zeros(
        head_backward(state.text_foreground, model.text_hash, code_grads.text, ed, &hash_text_backward), feats);
    Tensor g_bg = or_zeros(head_backward(state.text_background, model.text_hash, code_grads.text_background, ed,
                                         &hash_text_backward),
                           feats);
    const AttentionGrads ag = text_attention_backward(state.text_attention, model.text_mask, g_fg, g_bg, scope.generator);
    if (ed) text_encoder_backward(state.text_encoder, model.text_encoder, ag.features);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kCheckpointMagic = "XMHCKPT";
constexpr int kCheckpointVersion = 1;

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("checkpoint: bad value for " + what + ": " + s);
  return value;
}

}  // namespace

std::string checkpoint_header(Model& model) {
  const auto& c = model.config;
  std::ostringstream os;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << " image_height=" << c.image.height
     << " image_width=" << c.image.width << " image_channels=" << c.image.channels << " patch=" << c.patch
     << " features=" << c.features << " vocab=" << c.vocab << " text_hidden=" << c.text_hidden
     << " text_features=" << c.text_features << " hash_hidden=" << c.hash_hidden << " bits=" << c.bits
     << " tensors=";
  bool first = true;
  for (const auto& p : model.all_params()) {
    if (!first) os << ';';
    first = false;
    os << p.name << ':' << shape_string(p.tensor->value.shape());
  }
  return os.str();
}

void save_checkpoint(Model& model, const fs::path& path) {
  const std::string header = checkpoint_header(model);
  const ParamList params = model.all_params();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_atomically(path, [&](std::ostream& os) {
    os << header << '\n';
    for (const auto& p : params) io::write_le(os, std::span<const double>(p.tensor->value.data()));
  });
}

Model load_checkpoint(const fs::path& path) {
  auto is = io::open_input(path, true);
  std::string header;
  if (!std::getline(is, header)) throw FormatError("checkpoint " + path.string() + " is empty");
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  hs >> magic >> version;
  if (magic != kCheckpointMagic) throw FormatError(path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  std::map<std::string, std::string> fields;
  std::string token;
  while (hs >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint header: malformed field '" + token + "'");
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  auto field = [&](const std::string& key) {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("checkpoint header is missing '" + key + "'");
    return parse_number<std::size_t>(it->second, key);
  };
  ModelConfig c;
  c.image = {field("image_height"), field("image_width"), field("image_channels")};
  c.patch = field("patch");
  c.features = field("features");
  c.vocab = field("vocab");
  c.text_hidden = field("text_hidden");
  c.text_features = field("text_features");
  c.hash_hidden = field("hash_hidden");
  c.bits = field("bits");

  Model model = Model::init(c, 0);
  if (checkpoint_header(model) != header) {
    throw FormatError("checkpoint tensor table does not match its architecture fields");
  }
  for (const auto& p : model.all_params()) {
    io::read_le(is, p.tensor->value.data(), path.string());
    if (!p.tensor->value.all_finite()) throw NumericError("checkpoint tensor " + p.name + " holds non-finite values");
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return model;
}

}  // namespace xmh
