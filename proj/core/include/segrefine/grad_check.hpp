// Copyright 2026 The segrefine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>

#include "segrefine/tensor.hpp"

namespace segrefine {

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Number of probed coordinates; 0 probes every coordinate.
  std::size_t max_samples = 0;
  std::uint64_t seed = 0;
};

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares `analytic` (the gradient of `objective` at `probe`) against
/// central differences. Returns the max relative error over the probed
/// coordinates. Throws NumericError on a non-finite objective value.
double grad_check(const std::function<double(const Tensor64&)>& objective,
                  const Tensor64& analytic, const Tensor64& probe,
                  const GradCheckOptions& options = {});

/// Checks a tensor op's backward. The op is reduced to the scalar
/// <forward(x), r> for a fixed random r, whose gradient is backward(x, r).
double grad_check_op(const std::function<Tensor64(const Tensor64&)>& forward,
                     const std::function<Tensor64(const Tensor64& input,
                                                  const Tensor64& grad_out)>& backward,
                     const Tensor64& probe, const GradCheckOptions& options = {});

}  // namespace segrefine
