#include "convstruct/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace convstruct::tk {

GradCheckReport grad_check(const std::string& name,
                           const std::function<Tensor()>& loss_fn,
                           const nn::ParameterSet& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.name = name;
  if (options.stochastic) {
    report.skipped = true;
    report.passed = true;
    report.note = "stochastic forward pass; finite differences undefined";
    return report;
  }

  for (const auto& p : params.items()) {
    Tensor t = p.tensor;
    t.clear_grad();
  }
  backward(loss_fn());
  std::vector<Matrix> analytic;
  for (const auto& p : params.items()) {
    analytic.push_back(p.tensor.has_grad()
                           ? p.tensor.grad()
                           : Matrix::Zero(p.tensor.value().rows(),
                                          p.tensor.value().cols()));
  }

  Rng rng(options.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params.items()[k].tensor;
    const std::size_t n = t.numel();
    std::vector<std::size_t> entries(n);
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_param != 0 &&
        n > options.max_entries_per_param) {
      shuffle(std::span<std::size_t>(entries), rng);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t e : entries) {
      double& cell = t.mutable_value().data()[e];
      const double original = cell;
      auto at = [&](double offset) {
        cell = original + offset;
        const double v = loss_fn().item();
        cell = original;
        return v;
      };
      const double h = options.step;
      double numeric;
      if (options.fourth_order) {
        numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      } else {
        numeric = (at(h) - at(-h)) / (2.0 * h);
      }
      const double exact = analytic[k].data()[e];
      const double denom =
          std::max({std::abs(numeric), std::abs(exact), options.floor});
      const double rel = std::abs(numeric - exact) / denom;
      ++report.entries_checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter =
            params.items()[k].name + "[" + std::to_string(e) + "]";
      }
    }
  }
  for (const auto& p : params.items()) {
    Tensor t = p.tensor;
    t.clear_grad();
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace convstruct::tk
