#include "xmh/adam.hpp"

#include <cmath>

#include "xmh/errors.hpp"

namespace xmh {

AdamState make_adam_state(const ParamList& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first.emplace_back(p.tensor->value.shape());
    s.second.emplace_back(p.tensor->value.shape());
  }
  return s;
}

void adam_update(const ParamList& params, AdamState& state, double lr, const AdamConfig& config, bool maximize) {
  if (state.first.size() != params.size()) throw DimensionError("adam state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  const double sign = maximize ? -1.0 : 1.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].tensor->value;
    const auto& grad = params[k].tensor->grad;
    auto& m = state.first[k];
    auto& v = state.second[k];
    if (m.shape() != value.shape()) throw DimensionError("adam state shape mismatch for " + params[k].name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = sign * grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace xmh
