// Copyright 2026 The sparsedist Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small statistics helpers shared by the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace sparsedist::testing {

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance

  double stderr_mean() const { return count > 1 ? std::sqrt(variance / count) : 0.0; }
};

inline Summary summarize(std::span<const double> xs) {
  Summary out;
  out.count = xs.size();
  if (xs.empty()) return out;
  double m = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double x : xs) {
    ++k;
    const double delta = x - m;
    m += delta / static_cast<double>(k);
    m2 += delta * (x - m);
  }
  out.mean = m;
  out.variance = k > 1 ? m2 / static_cast<double>(k - 1) : 0.0;
  return out;
}

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Standard error of a Bernoulli rate estimate, floored away from zero.
inline double rate_stderr(double rate, std::size_t trials) {
  const double r = std::clamp(rate, 1.0 / trials, 1.0 - 1.0 / trials);
  return std::sqrt(r * (1.0 - r) / static_cast<double>(trials));
}

}  // namespace sparsedist::testing
