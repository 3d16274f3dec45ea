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

#include "segrefine/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "segrefine/error.hpp"

namespace segrefine {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<double(const Tensor64&)>& objective,
                  const Tensor64& analytic, const Tensor64& probe,
                  const GradCheckOptions& options) {
  require_same_shape(analytic.shape(), probe.shape(), "grad_check");
  std::vector<std::size_t> coords(probe.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (options.max_samples != 0 && options.max_samples < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_samples);
  }

  Tensor64 x = probe;
  double worst = 0.0;
  for (const std::size_t i : coords) {
    const double orig = x[i];
    x[i] = orig + options.epsilon;
    const double up = objective(x);
    x[i] = orig - options.epsilon;
    const double down = objective(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite objective at coordinate " +
                         std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * options.epsilon);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

double grad_check_op(const std::function<Tensor64(const Tensor64&)>& forward,
                     const std::function<Tensor64(const Tensor64&, const Tensor64&)>& backward,
                     const Tensor64& probe, const GradCheckOptions& options) {
  const Tensor64 y = forward(probe);
  Tensor64 projection(y.shape());
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : projection.values()) v = dist(rng);

  const Tensor64 analytic = backward(probe, projection);
  require_finite(analytic, "grad_check_op analytic gradient");
  auto objective = [&](const Tensor64& x) {
    const Tensor64 out = forward(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * projection[i];
    return acc;
  };
  return grad_check(objective, analytic, probe, options);
}

}  // namespace segrefine
