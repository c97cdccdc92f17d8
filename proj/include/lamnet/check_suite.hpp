#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lamnet/grad_check.hpp"

namespace lamnet {

struct SuiteCheck {
  std::string name;
  std::function<GradCheckResult()> run;
};

// Named gradient checks covering every differentiable op and composite,
// ending with a full tiny end-to-end model. All f64, randomized from `seed`.
// include_model toggles the (slower) whole-model check.
std::vector<SuiteCheck> gradient_check_suite(uint64_t seed, bool include_model = true);

}  // namespace lamnet
