// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "volumetrica/core/phantom.hpp"
#include "volumetrica/core/random.hpp"

namespace volumetrica::pipeline {

inline constexpr std::uint64_t kCohortStream = 0xc0407;

struct CohortConfig {
  std::size_t cases = 25;
  Dims dims{32, 32, 32};
  Spacing spacing{1.0, 1.0, 1.0};
  double min_radius = 5.5;  // equivalent-sphere radius range, mm
  double max_radius = 10.5;
  double max_aspect = 1.2;       // per-axis stretch before volume renormalisation
  double max_center_offset = 1.0;  // mm from the grid centre, per axis
  std::uint64_t seed = 0;
};

struct CohortCase {
  std::string id;
  PhantomSpec spec;
  Phantom phantom;
};

namespace detail {

inline PhantomSpec draw_case_spec(const CohortConfig& cfg, std::size_t index, std::uint64_t attempt) {
  CounterRng rng(cfg.seed ^ mix64(kCohortStream + attempt), index);
  PhantomSpec s;
  s.shape = static_cast<PhantomShape>(index % 3);
  const double r = rng.uniform(cfg.min_radius, cfg.max_radius);
  std::array<double, 3> f{};
  double prod = 1.0;
  for (auto& v : f) prod *= (v = rng.uniform(1.0 / cfg.max_aspect, cfg.max_aspect));
  const double norm = std::cbrt(prod);
  for (std::size_t a = 0; a < 3; ++a) s.semi_axes[a] = r * f[a] / norm;
  if (s.shape == PhantomShape::sphere) {
    s.radius = r;
    s.semi_axes = {r, r, r};
  }
  s.lobes = 3 + static_cast<int>(rng.below(4));
  s.lobe_amplitude = rng.uniform(0.08, 0.18);
  const auto c = grid_center(cfg.dims, cfg.spacing);
  s.center = std::array<double, 3>{};
  for (std::size_t a = 0; a < 3; ++a)
    (*s.center)[a] = c[a] + rng.uniform(-cfg.max_center_offset, cfg.max_center_offset);
  s.seed = mix64(cfg.seed + index);
  return s;
}

}  // namespace detail

/// Noise-free mixed-shape cohort. Case i cycles sphere, ellipsoid, lobulated;
/// a draw that does not fit the grid is redrawn from the next attempt stream.
inline std::vector<CohortCase> make_cohort(const CohortConfig& cfg) {
  require(cfg.cases >= 1, ErrorCode::invalid_argument, "cohort needs at least one case");
  require(cfg.min_radius > 0.0 && cfg.min_radius <= cfg.max_radius, ErrorCode::invalid_argument,
          "cohort radius range is empty");
  require(cfg.max_aspect >= 1.0, ErrorCode::invalid_argument, "aspect bound must be >= 1");
  std::vector<CohortCase> out;
  for (std::size_t i = 0; i < cfg.cases; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      require(attempt < 64, ErrorCode::shape_out_of_bounds,
              "cohort case " + std::to_string(i) + " does not fit the grid");
      const auto spec = detail::draw_case_spec(cfg, i, attempt);
      try {
        char id[16];
        std::snprintf(id, sizeof id, "case%03zu", i);
        out.push_back({id, spec, make_phantom(spec, cfg.dims, cfg.spacing)});
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::shape_out_of_bounds) throw;
      }
    }
  }
  return out;
}

}  // namespace volumetrica::pipeline
