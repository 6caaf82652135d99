#pragma once

#include <functional>
#include <string>
#include <vector>

#include "convstruct/nn.hpp"

namespace convstruct::tk {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // Five-point central stencil (error O(h^4)) instead of the two-point one.
  // Allows a larger step, which keeps round-off in the loss from swamping
  // gradients that are close to zero.
  bool fourth_order = false;
  // Denominator floor for the relative error, so entries whose true gradient
  // is numerically zero are judged on absolute error.
  double floor = 1e-7;
  // 0 checks every entry; otherwise a seeded sample per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
  // Stochastic forward passes (dropout in train mode) are not checkable.
  bool stochastic = false;
};

struct GradCheckReport {
  std::string name;
  bool passed = false;
  bool skipped = false;
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_parameter;
  std::string note;
};

// Compares reverse-mode gradients of `loss_fn` against central differences.
GradCheckReport grad_check(const std::string& name,
                           const std::function<Tensor()>& loss_fn,
                           const nn::ParameterSet& params,
                           const GradCheckOptions& options = {});

}  // namespace convstruct::tk
