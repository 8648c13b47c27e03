#pragma once

// Alternating min-max optimization: discriminator steps update encoders and
// hash heads on the full objective; generator steps ascend the adversarial
// terms w.r.t. the attention projections only.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmh/adam.hpp"
#include "xmh/data.hpp"
#include "xmh/losses.hpp"
#include "xmh/model.hpp"

namespace xmh {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double base_lr = 0.005;  // E/D step size, decayed on a schedule
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 20;
  double adam_alpha = 0.0002;  // G step size
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t d_steps_per_g_step = 4;
  std::uint64_t seed = 1;
  std::size_t q = 16;

  std::optional<double> margin;  // unset: q / 4
  DistanceKind distance = DistanceKind::SquaredEuclidean;
  std::size_t triplets_per_anchor = 4;
  std::size_t checkpoint_every = 20;

  std::size_t features = 32;
  std::size_t text_hidden = 128;
  std::size_t text_features = 64;
  std::size_t hash_hidden = 256;

  void validate() const;
  LossConfig loss_config() const;
  /// Step size for discriminator updates in a 1-based epoch.
  double lr_for_epoch(std::size_t epoch) const;
  ModelConfig model_config(const PairedDataset& data) const;

  /// `key = value` lines; '#' starts a comment. Unknown or repeated keys and
  /// malformed values raise ConfigError naming the key and line.
  static TrainConfig parse(std::istream& in, const std::string& source = "<config>");
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

enum class Phase : std::uint8_t { Discriminator, Generator };

struct TrainLogRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  Phase phase = Phase::Discriminator;
  std::array<double, kDirectionCount> losses{};
  double image_occupancy = 0.0;
  double text_occupancy = 0.0;
  double lr = 0.0;
  std::size_t empty_image_masks = 0;
  std::size_t empty_text_masks = 0;
};

/// Tab-separated: epoch, step, phase, six loss terms, two occupancies, lr.
std::string format_log_line(const TrainLogRecord& record);
TrainLogRecord parse_log_line(const std::string& line);
std::string log_header();

/// Called around every step of run_epoch.
struct StepHooks {
  std::function<void(Phase, Model&)> before;
  std::function<void(const TrainLogRecord&, Model&)> after;
};

class Trainer {
 public:
  Trainer(const PairedDataset& data, TrainConfig config);
  Trainer(const PairedDataset& data, TrainConfig config, Model model);

  /// Full objective; ADAM-updates E and D only; masks are constants.
  TrainLogRecord d_step(std::span<const std::uint32_t> batch, double lr);
  /// Adversarial terms only; gradient ascent on G; E and D are frozen and the
  /// foreground anchors are constants.
  TrainLogRecord g_step(std::span<const std::uint32_t> batch);

  /// One pass over the shuffled training split in the D^k G pattern. The
  /// pattern position carries over between epochs.
  std::vector<TrainLogRecord> run_epoch();

  void set_step_hooks(StepHooks hooks) { hooks_ = std::move(hooks); }

  Model& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epochs_done() const { return epoch_; }

 private:
  TrainLogRecord finish_record(Phase phase, const ForwardState& state, const LossBreakdown& losses, double lr);

  const PairedDataset& data_;
  TrainConfig config_;
  LossConfig loss_;
  AdamConfig adam_;
  SimilarityMatrix similarity_;
  Model model_;
  ParamList ed_params_;
  ParamList g_params_;
  AdamState ed_state_;
  AdamState g_state_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  StepHooks hooks_;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_cross_modal = 0.0;
  double mean_adversarial = 0.0;
  double image_occupancy = 0.0;
  double text_occupancy = 0.0;
  std::size_t empty_masks = 0;
};

struct TrainOutputs {
  /// When set: log.tsv, config.txt, model.ckpt and periodic epoch_NNN.ckpt.
  std::optional<std::filesystem::path> dir;
  std::function<void(const EpochSummary&)> on_epoch;
  StepHooks step_hooks;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRecord> log;
};

/// Throws ConfigError for an empty training split or invalid config and
/// NumericError if a loss becomes non-finite.
TrainResult train(const PairedDataset& data, const TrainConfig& config, const TrainOutputs& outputs = {});

}  // namespace xmh
