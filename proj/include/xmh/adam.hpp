#pragma once

#include <cstdint>
#include <vector>

#include "xmh/params.hpp"

namespace xmh {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments per parameter tensor plus the shared timestep.
struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const ParamList& params);

/// One bias-corrected ADAM step using each parameter's .grad. With
/// maximize set the gradient sign is flipped (ascent).
void adam_update(const ParamList& params, AdamState& state, double lr, const AdamConfig& config, bool maximize = false);

}  // namespace xmh
