// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/error.hpp"

namespace volumetrica::numopt {

/// Composite trapezoidal rule over the sampled positions (spacing may vary).
inline double trapezoid(const SliceAreaSeries& series) {
  const auto& s = series.samples;
  require(s.size() >= 2, ErrorCode::invalid_argument, "trapezoid needs at least 2 samples");
  double sum = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double h = s[i].position - s[i - 1].position;
    require(h > 0.0, ErrorCode::invalid_argument, "positions must be strictly increasing");
    sum += 0.5 * h * (s[i].area + s[i - 1].area);
  }
  return sum;
}

/// Composite Simpson rule; needs an odd number (>= 3) of uniformly spaced samples.
inline double simpson(const SliceAreaSeries& series) {
  const auto& s = series.samples;
  require(s.size() >= 3 && s.size() % 2 == 1, ErrorCode::invalid_argument,
          "simpson needs an odd number of samples, at least 3");
  const double h = (s.back().position - s.front().position) / static_cast<double>(s.size() - 1);
  require(h > 0.0, ErrorCode::invalid_argument, "positions must be strictly increasing");
  for (std::size_t i = 1; i < s.size(); ++i)
    require(std::abs((s[i].position - s[i - 1].position) - h) <= 1e-9 * h,
            ErrorCode::invalid_argument, "simpson needs uniform sample spacing");
  double sum = s.front().area + s.back().area;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) sum += (i % 2 ? 4.0 : 2.0) * s[i].area;
  return sum * h / 3.0;
}

}  // namespace volumetrica::numopt
