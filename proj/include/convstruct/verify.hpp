#pragma once

#include <cstdint>
#include <vector>

#include "convstruct/gradcheck.hpp"

namespace convstruct {

// Finite-difference checks of every differentiable tensor op on unit-scale
// random inputs.
std::vector<tk::GradCheckReport> verify_ops(std::uint64_t seed,
                                            const tk::GradCheckOptions& options = {});

// End-to-end checks of a small model: encoder, second stage and head under
// both losses, with every parameter entry perturbed. Attention key gradients
// here are tiny, so callers should use the fourth-order stencil with a step
// around 1e-3; the two-point rule at 1e-5 is dominated by round-off.
std::vector<tk::GradCheckReport> verify_model(std::uint64_t seed,
                                              const tk::GradCheckOptions& options = {});

}  // namespace convstruct
