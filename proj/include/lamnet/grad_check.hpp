#pragma once

#include <functional>
#include <vector>

#include "lamnet/tensor.hpp"

namespace lamnet {

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t input_index = 0;   // which input held the worst coordinate
  int64_t flat_coord = 0;   // flat offset of the worst coordinate
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients of sum(f(inputs)) against central
// differences, coordinate by coordinate. Inputs must be f64; eps defaults to
// 1e-5. Relative error per coordinate is
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Throws std::invalid_argument on non-f64 inputs and std::runtime_error if any
// forward value or gradient is non-finite.
GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace lamnet
