#pragma once

#include <functional>

#include "atgan/tensor.hpp"

namespace atgan {

/// Checks the recorded backward of a scalar-valued tensor function against
/// central finite differences at x. f must be deterministic; it is called
/// once with a tape (analytic path) and 2*numel times without (numeric path,
/// accumulated in double). Returns
///   max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8).
double gradient_check(const std::function<Tensor(Tape*, Tensor&)>& f, Tensor x, double h = 1e-3);

}  // namespace atgan
