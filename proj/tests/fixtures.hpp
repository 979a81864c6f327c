// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/numopt/polynomial.hpp"

namespace fixtures {

// Worked-sample nodule: cross-sectional area (mm^2) on 11 consecutive 1 mm slices.
inline constexpr std::array<double, 11> kSampleAreas{16.0, 31.8,  55.8, 80.0, 150.0, 154.1,
                                                     89.6, 63.5, 84.6, 42.3, 29.3};

inline volumetrica::SliceAreaSeries sample_series() {
  return volumetrica::make_series(kSampleAreas, 1.0, 1.0);
}

inline std::vector<volumetrica::numopt::Point> sample_points() {
  std::vector<volumetrica::numopt::Point> pts;
  for (std::size_t i = 0; i < kSampleAreas.size(); ++i)
    pts.push_back({static_cast<double>(i + 1), kSampleAreas[i]});
  return pts;
}

}  // namespace fixtures
