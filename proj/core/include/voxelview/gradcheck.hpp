#pragma once

#include <functional>
#include <vector>

#include "voxelview/tensor.hpp"

namespace voxelview {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central finite-difference check of reverse-mode gradients.
//
// `f` must be deterministic and return a single-element tensor. Every input
// with requires_grad set is perturbed coordinate by coordinate. Returns
// max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-8).
double finite_diff_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps);

}  // namespace voxelview
