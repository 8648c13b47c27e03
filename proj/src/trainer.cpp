#include "xmh/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "xmh/errors.hpp"

namespace xmh {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be positive");
  };
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (lr_decay_every == 0) throw ConfigError("lr_decay_every must be positive");
  if (d_steps_per_g_step == 0) throw ConfigError("d_steps_per_g_step must be at least 1");
  if (q == 0) throw ConfigError("q must be positive");
  if (triplets_per_anchor == 0) throw ConfigError("triplets_per_anchor must be positive");
  if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
  if (features == 0 || text_hidden == 0 || text_features == 0 || hash_hidden == 0) {
    throw ConfigError("layer widths must be positive");
  }
  // A zero step size is allowed (used to freeze training in tests).
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be non-negative");
  if (!(adam_alpha >= 0.0)) throw ConfigError("adam_alpha must be non-negative");
  positive(lr_decay, "lr_decay");
  positive(adam_epsilon, "adam_epsilon");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (margin) positive(*margin, "margin");
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c = LossConfig::for_bits(q);
  if (margin) c.margin = *margin;
  c.distance = distance;
  return c;
}

double TrainConfig::lr_for_epoch(std::size_t epoch) const {
  const std::size_t drops = epoch == 0 ? 0 : (epoch - 1) / lr_decay_every;
  return base_lr * std::pow(lr_decay, static_cast<double>(drops));
}

ModelConfig TrainConfig::model_config(const PairedDataset& data) const {
  if (data.grid_height == 0 || data.image.height % data.grid_height != 0 ||
      data.image.width % data.grid_width != 0 || data.image.height / data.grid_height != data.image.width / data.grid_width) {
    throw ConfigError("dataset grid does not tile its images with square patches");
  }
  ModelConfig m;
  m.image = data.image;
  m.patch = data.image.height / data.grid_height;
  m.features = features;
  m.vocab = data.vocab;
  m.text_hidden = text_hidden;
  m.text_features = text_features;
  m.hash_hidden = hash_hidden;
  m.bits = q;
  return m;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_value(const std::string& text, const std::string& key, const std::string& where) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(where + ": invalid value '" + text + "' for key '" + key + "'");
  }
  return value;
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v, const std::string& where) {
            c.*member = parse_value<T>(v, "", where);
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return io::format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"epochs", number_field(&TrainConfig::epochs)},
      {"base_lr", number_field(&TrainConfig::base_lr)},
      {"lr_decay", number_field(&TrainConfig::lr_decay)},
      {"lr_decay_every", number_field(&TrainConfig::lr_decay_every)},
      {"adam_alpha", number_field(&TrainConfig::adam_alpha)},
      {"adam_beta1", number_field(&TrainConfig::adam_beta1)},
      {"adam_beta2", number_field(&TrainConfig::adam_beta2)},
      {"adam_epsilon", number_field(&TrainConfig::adam_epsilon)},
      {"d_steps_per_g_step", number_field(&TrainConfig::d_steps_per_g_step)},
      {"seed", number_field(&TrainConfig::seed)},
      {"q", number_field(&TrainConfig::q)},
      {"triplets_per_anchor", number_field(&TrainConfig::triplets_per_anchor)},
      {"checkpoint_every", number_field(&TrainConfig::checkpoint_every)},
      {"features", number_field(&TrainConfig::features)},
      {"text_hidden", number_field(&TrainConfig::text_hidden)},
      {"text_features", number_field(&TrainConfig::text_features)},
      {"hash_hidden", number_field(&TrainConfig::hash_hidden)},
      {"margin",
       {[](TrainConfig& c, const std::string& v, const std::string& where) {
          if (v == "auto") {
            c.margin.reset();
          } else {
            c.margin = parse_value<double>(v, "margin", where);
          }
        },
        [](const TrainConfig& c) { return c.margin ? io::format_double(*c.margin) : std::string("auto"); }}},
      {"distance",
       {[](TrainConfig& c, const std::string& v, const std::string& where) {
          if (v == "squared") {
            c.distance = DistanceKind::SquaredEuclidean;
          } else if (v == "euclidean") {
            c.distance = DistanceKind::Euclidean;
          } else {
            throw ConfigError(where + ": distance must be 'squared' or 'euclidean', got '" + v + "'");
          }
        },
        [](const TrainConfig& c) {
          return std::string(c.distance == DistanceKind::SquaredEuclidean ? "squared" : "euclidean");
        }}},
  };
  return table;
}

}  // namespace

TrainConfig TrainConfig::parse(std::istream& in, const std::string& source) {
  TrainConfig config;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' given twice");
    try {
      it->second.set(config, value, where);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (key '" + key + "')");
    }
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  auto is = io::open_input(path);
  return parse(is, path.string());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [key, field] : fields()) os << key << " = " << field.get(*this) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Log records

std::string log_header() {
  return "# epoch\tstep\tphase\tT->I\tI->T\tI->I\tT->T\tT->bgI\tI->bgT\timage_occupancy\ttext_occupancy\tlr";
}

std::string format_log_line(const TrainLogRecord& r) {
  std::ostringstream os;
  os << r.epoch << '\t' << r.step << '\t' << (r.phase == Phase::Discriminator ? 'D' : 'G');
  for (double v : r.losses) os << '\t' << io::format_double(v);
  os << '\t' << io::format_double(r.image_occupancy) << '\t' << io::format_double(r.text_occupancy) << '\t'
     << io::format_double(r.lr);
  return os.str();
}

TrainLogRecord parse_log_line(const std::string& line) {
  std::istringstream is(line);
  TrainLogRecord r;
  char phase = 0;
  is >> r.epoch >> r.step >> phase;
  if (phase != 'D' && phase != 'G') throw FormatError("log line has unknown phase: " + line);
  r.phase = phase == 'D' ? Phase::Discriminator : Phase::Generator;
  for (auto& v : r.losses) is >> v;
  is >> r.image_occupancy >> r.text_occupancy >> r.lr;
  if (!is) throw FormatError("malformed log line: " + line);
  return r;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const PairedDataset& data, TrainConfig config)
    : Trainer(data, config, Model::init(config.model_config(data), config.seed)) {}

Trainer::Trainer(const PairedDataset& data, TrainConfig config, Model model)
    : data_(data),
      config_(std::move(config)),
      loss_(config_.loss_config()),
      adam_{config_.adam_beta1, config_.adam_beta2, config_.adam_epsilon},
      similarity_(build_similarity(data.labels)),
      model_(std::move(model)),
      rng_(config_.seed ^ 0x5851f42d4c957f2dULL) {
  config_.validate();
  if (!(model_.config == config_.model_config(data))) {
    throw ConfigError("model architecture does not match the config and dataset");
  }
  ed_params_ = model_.encoder_discriminator_params();
  g_params_ = model_.generator_params();
  ed_state_ = make_adam_state(ed_params_);
  g_state_ = make_adam_state(g_params_);
}

TrainLogRecord Trainer::finish_record(Phase phase, const ForwardState& state, const LossBreakdown& losses, double lr) {
  TrainLogRecord r;
  r.epoch = epoch_ + 1;
  r.step = step_;
  r.phase = phase;
  r.losses = losses.terms;
  r.image_occupancy = state.image_attention.mask.occupancy();
  r.text_occupancy = state.text_attention.mask.occupancy();
  r.empty_image_masks = state.image_attention.mask.empty_rows();
  r.empty_text_masks = state.text_attention.mask.empty_rows();
  r.lr = lr;
  for (double v : r.losses) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite loss at epoch " << r.epoch << " step " << r.step << " phase "
         << (phase == Phase::Discriminator ? 'D' : 'G') << ": " << format_log_line(r);
      throw NumericError(os.str());
    }
  }
  return r;
}

namespace {

LossBreakdown combine(const LossBreakdown& a, const LossBreakdown& b) {
  LossBreakdown out;
  for (std::size_t i = 0; i < kDirectionCount; ++i) out.terms[i] = a.terms[i] + b.terms[i];
  return out;
}

}  // namespace

TrainLogRecord Trainer::d_step(std::span<const std::uint32_t> batch, double lr) {
  zero_grads(ed_params_);
  zero_grads(g_params_);
  const ForwardState state = forward(model_, data_.image_batch(batch), data_.bow_batch(batch));
  const TripletSet triplets = sample_all_directions(similarity_, batch, config_.triplets_per_anchor, rng_);
  BatchCodes grads = zero_grads_like(state.codes);
  const LossBreakdown losses = combine(cross_modal_loss(state.codes, triplets, loss_, &grads),
                                       adversarial_loss(state.codes, triplets, loss_, &grads));
  TrainLogRecord record = finish_record(Phase::Discriminator, state, losses, lr);
  backward(model_, state, grads, BackwardScope{.encoder_discriminator = true, .generator = false});
  adam_update(ed_params_, ed_state_, lr, adam_, false);
  ++step_;
  return record;
}

TrainLogRecord Trainer::g_step(std::span<const std::uint32_t> batch) {
  zero_grads(ed_params_);
  zero_grads(g_params_);
  const ForwardState state = forward(model_, data_.image_batch(batch), data_.bow_batch(batch));
  const TripletSet triplets = sample_all_directions(similarity_, batch, config_.triplets_per_anchor, rng_);
  BatchCodes grads = zero_grads_like(state.codes);
  const LossBreakdown losses = combine(cross_modal_loss(state.codes, triplets, loss_, nullptr),
                                       adversarial_loss(state.codes, triplets, loss_, &grads));
  TrainLogRecord record = finish_record(Phase::Generator, state, losses, config_.adam_alpha);
  // Anchors are foreground codes owned by the frozen E/D: constants here.
  grads.image.fill(0.0);
  grads.text.fill(0.0);
  backward(model_, state, grads, BackwardScope{.encoder_discriminator = false, .generator = true});
  adam_update(g_params_, g_state_, config_.adam_alpha, adam_, true);
  ++step_;
  return record;
}

std::vector<TrainLogRecord> Trainer::run_epoch() {
  IndexList order = data_.splits.train;
  if (order.empty()) throw ConfigError("the training split is empty");
  rng_.shuffle(std::span<std::uint32_t>(order));
  const double lr = config_.lr_for_epoch(epoch_ + 1);
  const std::size_t cycle = config_.d_steps_per_g_step + 1;
  std::vector<TrainLogRecord> records;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t len = std::min(config_.batch_size, order.size() - start);
    const std::span<const std::uint32_t> batch(order.data() + start, len);
    const Phase phase = step_ % cycle == config_.d_steps_per_g_step ? Phase::Generator : Phase::Discriminator;
    if (hooks_.before) hooks_.before(phase, model_);
    records.push_back(phase == Phase::Generator ? g_step(batch) : d_step(batch, lr));
    if (hooks_.after) hooks_.after(records.back(), model_);
  }
  ++epoch_;
  return records;
}

TrainResult train(const PairedDataset& data, const TrainConfig& config, const TrainOutputs& outputs) {
  config.validate();
  if (data.splits.train.empty()) throw ConfigError("dataset has an empty training split");
  Trainer trainer(data, config);
  trainer.set_step_hooks(outputs.step_hooks);

  std::ofstream log;
  if (outputs.dir) {
    fs::create_directories(*outputs.dir);
    io::write_atomically(*outputs.dir / "config.txt", [&](std::ostream& os) { os << config.to_text(); });
    log.open(*outputs.dir / "log.tsv", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (*outputs.dir / "log.tsv").string());
    log << log_header() << '\n';
  }

  TrainResult result;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    std::vector<TrainLogRecord> records;
    try {
      records = trainer.run_epoch();
    } catch (const NumericError& err) {
      if (outputs.dir) {
        std::ofstream diag(*outputs.dir / "diagnostic.txt", std::ios::trunc);
        diag << err.what() << '\n';
        save_checkpoint(trainer.model(), *outputs.dir / "diverged.ckpt");
      }
      throw;
    }
    EpochSummary summary;
    summary.epoch = e;
    summary.lr = config.lr_for_epoch(e);
    std::size_t d_count = 0, g_count = 0;
    for (const auto& r : records) {
      if (log.is_open()) log << format_log_line(r) << '\n';
      if (r.phase == Phase::Discriminator) {
        summary.mean_cross_modal += r.losses[0] + r.losses[1] + r.losses[2] + r.losses[3];
        ++d_count;
      } else {
        summary.mean_adversarial += r.losses[4] + r.losses[5];
        ++g_count;
      }
      summary.image_occupancy += r.image_occupancy;
      summary.text_occupancy += r.text_occupancy;
      summary.empty_masks += r.empty_image_masks + r.empty_text_masks;
    }
    if (d_count) summary.mean_cross_modal /= static_cast<double>(d_count);
    if (g_count) summary.mean_adversarial /= static_cast<double>(g_count);
    summary.image_occupancy /= static_cast<double>(records.size());
    summary.text_occupancy /= static_cast<double>(records.size());
    if (log.is_open()) log.flush();
    if (outputs.on_epoch) outputs.on_epoch(summary);
    result.log.insert(result.log.end(), records.begin(), records.end());
    if (outputs.dir && e % config.checkpoint_every == 0 && e != config.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03zu.ckpt", e);
      save_checkpoint(trainer.model(), *outputs.dir / name);
    }
  }
  if (outputs.dir) save_checkpoint(trainer.model(), *outputs.dir / "model.ckpt");
  result.model = std::move(trainer.model());
  return result;
}

}  // namespace xmh
