#pragma once

#include <string>
#include <vector>

#include "xmh/tensor.hpp"

namespace xmh {

struct NamedParam {
  std::string name;
  DualTensor* tensor;
};

using ParamList = std::vector<NamedParam>;

inline void append_affine(ParamList& out, const std::string& prefix, AffineParams& p) {
  out.push_back({prefix + ".weight", &p.weight});
  out.push_back({prefix + ".bias", &p.bias});
}

inline void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace xmh
