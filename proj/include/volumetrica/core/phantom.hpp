// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic nodule phantoms with known volume. Rasterisation marks a voxel as
// inside iff its centre is inside the shape; there is no partial-volume weighting.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "volumetrica/core/random.hpp"
#include "volumetrica/core/volume.hpp"
#include "volumetrica/error.hpp"
#include "volumetrica/numopt/gauss_legendre.hpp"

namespace volumetrica {

enum class PhantomShape { sphere, ellipsoid, lobulated };

inline const char* to_string(PhantomShape s) {
  switch (s) {
    case PhantomShape::sphere: return "sphere";
    case PhantomShape::ellipsoid: return "ellipsoid";
    case PhantomShape::lobulated: return "lobulated";
  }
  return "?";
}

inline constexpr int kMaxLobes = 8;
inline constexpr double kMaxLobeAmplitude = 0.2;

struct PhantomSpec {
  PhantomShape shape = PhantomShape::sphere;
  double radius = 10.0;                          // sphere
  std::array<double, 3> semi_axes{10, 10, 10};   // ellipsoid / lobulated base (x, y, z)
  std::optional<std::array<double, 3>> center;   // mm; grid centre when unset
  int lobes = 4;                                 // lobulated only
  double lobe_amplitude = 0.15;                  // fraction of the smallest semi-axis
  double intensity = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct Phantom {
  VoxelGrid grid;
  BinaryMask mask;
  double analytic_volume = 0.0;
  /// False when the volume comes from surface quadrature rather than a closed form.
  bool volume_closed_form = true;
};

namespace detail {

struct Lobe {
  std::array<double, 3> direction;
  double amplitude;
  double frequency;
  double phase;
};

class ShapeModel {
 public:
  ShapeModel(const PhantomSpec& spec, std::array<double, 3> center) : center_(center) {
    if (spec.shape == PhantomShape::sphere) {
      require(spec.radius > 0 && std::isfinite(spec.radius), ErrorCode::invalid_argument,
              "sphere radius must be positive");
      axes_ = {spec.radius, spec.radius, spec.radius};
    } else {
      axes_ = spec.semi_axes;
      for (double a : axes_)
        require(a > 0 && std::isfinite(a), ErrorCode::invalid_argument,
                "semi-axes must be positive");
    }
    if (spec.shape == PhantomShape::lobulated) {
      require(spec.lobes >= 1 && spec.lobes <= kMaxLobes, ErrorCode::invalid_argument,
              "lobulated phantom needs 1..8 lobes");
      require(spec.lobe_amplitude >= 0 && spec.lobe_amplitude <= kMaxLobeAmplitude,
              ErrorCode::invalid_argument, "lobe amplitude must lie in [0, 0.2]");
      // Radial displacement is delta * |ellipsoid point|, so the relative budget is
      // scaled by min/max axis to keep it within amplitude * min semi-axis in mm.
      const double amin = std::min({axes_[0], axes_[1], axes_[2]});
      const double amax = std::max({axes_[0], axes_[1], axes_[2]});
      const double budget = spec.lobe_amplitude * amin / amax;
      CounterRng rng(spec.seed, 1);
      std::vector<double> raw(static_cast<std::size_t>(spec.lobes));
      double raw_sum = 0.0;
      for (auto& r : raw) {
        r = 0.5 + rng.uniform();
        raw_sum += r;
      }
      for (int k = 0; k < spec.lobes; ++k) {
        std::array<double, 3> dir{rng.normal(), rng.normal(), rng.normal()};
        const double n = std::hypot(dir[0], dir[1], dir[2]);
        for (auto& c : dir) c /= n;
        lobes_.push_back({dir, budget * raw[static_cast<std::size_t>(k)] / raw_sum,
                          static_cast<double>(2 + rng.below(3)), 2.0 * std::numbers::pi * rng.uniform()});
      }
      max_delta_ = budget;
    }
  }

  /// Relative radial perturbation along unit direction u (normalised coordinates).
  double delta(const std::array<double, 3>& u) const {
    double d = 0.0;
    for (const auto& l : lobes_) {
      const double proj = u[0] * l.direction[0] + u[1] * l.direction[1] + u[2] * l.direction[2];
      d += l.amplitude * std::sin(l.frequency * std::numbers::pi * proj + l.phase);
    }
    return d;
  }

  bool contains(double x, double y, double z) const {
    const double qx = (x - center_[0]) / axes_[0];
    const double qy = (y - center_[1]) / axes_[1];
    const double qz = (z - center_[2]) / axes_[2];
    const double rho = std::sqrt(qx * qx + qy * qy + qz * qz);
    if (lobes_.empty()) return rho <= 1.0;
    if (rho == 0.0) return true;
    return rho <= 1.0 + delta({qx / rho, qy / rho, qz / rho});
  }

  /// Half-extent of an axis-aligned box that encloses the shape.
  std::array<double, 3> half_extent() const {
    const double f = 1.0 + max_delta_;
    return {axes_[0] * f, axes_[1] * f, axes_[2] * f};
  }

  /// Volume = abc/3 * integral over the unit sphere of (1 + delta(u))^3.
  double volume() const {
    const double abc = axes_[0] * axes_[1] * axes_[2];
    if (lobes_.empty()) return 4.0 / 3.0 * std::numbers::pi * abc;
    const auto rule = numopt::gauss_legendre(96);
    const int nphi = 192;
    double total = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double ct = rule.nodes[i];
      const double st = std::sqrt(1.0 - ct * ct);
      double ring = 0.0;
      for (int j = 0; j < nphi; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / nphi;
        const double r = 1.0 + delta({st * std::cos(phi), st * std::sin(phi), ct});
        ring += r * r * r;
      }
      total += rule.weights[i] * ring * (2.0 * std::numbers::pi / nphi);
    }
    return abc / 3.0 * total;
  }

 private:
  std::array<double, 3> center_;
  std::array<double, 3> axes_{};
  std::vector<Lobe> lobes_;
  double max_delta_ = 0.0;
};

}  // namespace detail

inline std::array<double, 3> grid_center(const Dims& dims, const Spacing& s) {
  return {0.5 * static_cast<double>(dims.nx - 1) * s.sx,
          0.5 * static_cast<double>(dims.ny - 1) * s.sy,
          0.5 * static_cast<double>(dims.nz - 1) * s.sz};
}

inline Phantom make_phantom(const PhantomSpec& spec, Dims dims, Spacing spacing) {
  validate(spacing);
  require(dims.nx >= 3 && dims.ny >= 3 && dims.nz >= 3, ErrorCode::invalid_argument,
          "phantom grid needs at least 3 voxels per axis");
  const auto center = spec.center.value_or(grid_center(dims, spacing));
  const detail::ShapeModel shape(spec, center);

  // Everything must stay inside voxel centres 1 .. n-2 (one voxel of margin).
  const auto half = shape.half_extent();
  const std::array<double, 3> step{spacing.sx, spacing.sy, spacing.sz};
  const std::array<std::size_t, 3> n{dims.nx, dims.ny, dims.nz};
  for (int a = 0; a < 3; ++a) {
    const double lo = step[a];
    const double hi = static_cast<double>(n[a] - 2) * step[a];
    if (center[a] - half[a] < lo || center[a] + half[a] > hi)
      fail(ErrorCode::shape_out_of_bounds, "phantom does not fit inside the grid with a one-voxel margin");
  }

  std::vector<double> values(dims.count(), 0.0);
  std::vector<std::uint8_t> inside(dims.count(), 0);
  for (std::size_t z = 0; z < dims.nz; ++z)
    for (std::size_t y = 0; y < dims.ny; ++y)
      for (std::size_t x = 0; x < dims.nx; ++x) {
        const auto i = voxel_index(dims, x, y, z);
        if (shape.contains(static_cast<double>(x) * spacing.sx, static_cast<double>(y) * spacing.sy,
                           static_cast<double>(z) * spacing.sz)) {
          inside[i] = 1;
          values[i] = spec.intensity;
        }
      }
  if (spec.noise_sigma > 0.0) {
    CounterRng rng(spec.seed, 2);
    for (auto& v : values) v += spec.noise_sigma * rng.normal();
  }

  Phantom out{VoxelGrid(dims, spacing, std::move(values)),
              BinaryMask(dims, spacing, std::move(inside)), shape.volume(),
              spec.shape != PhantomShape::lobulated};
  require(out.analytic_volume > 0.0, ErrorCode::invalid_argument, "phantom volume must be positive");
  return out;
}

/// Phantom description as read from a key-value config file.
struct PhantomConfig {
  PhantomSpec spec;
  Dims dims{64, 64, 64};
  Spacing spacing{1.0, 1.0, 1.0};
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_numbers(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_argument, "bad numeric value for '" + key + "': " + value);
    }
  }
  return out;
}

inline std::array<double, 3> parse_triple(const std::string& key, const std::string& value) {
  const auto v = parse_numbers(key, value);
  if (v.size() == 1) return {v[0], v[0], v[0]};
  require(v.size() == 3, ErrorCode::invalid_argument, "'" + key + "' needs 1 or 3 values");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Keys: shape, radius,
/// semi_axes, center, lobes, lobe_amplitude, intensity, noise_sigma, seed,
/// dims, spacing. Triples may be given as a single value.
inline PhantomConfig parse_phantom_config(const std::string& text) {
  PhantomConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::invalid_argument,
            "line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    auto& s = cfg.spec;
    if (key == "shape") {
      if (value == "sphere") s.shape = PhantomShape::sphere;
      else if (value == "ellipsoid") s.shape = PhantomShape::ellipsoid;
      else if (value == "lobulated") s.shape = PhantomShape::lobulated;
      else fail(ErrorCode::invalid_argument, "unknown shape '" + value + "'");
    } else if (key == "radius") {
      s.radius = detail::parse_triple(key, value)[0];
    } else if (key == "semi_axes") {
      s.semi_axes = detail::parse_triple(key, value);
    } else if (key == "center") {
      s.center = detail::parse_triple(key, value);
    } else if (key == "lobes") {
      s.lobes = static_cast<int>(detail::parse_triple(key, value)[0]);
    } else if (key == "lobe_amplitude") {
      s.lobe_amplitude = detail::parse_triple(key, value)[0];
    } else if (key == "intensity") {
      s.intensity = detail::parse_triple(key, value)[0];
    } else if (key == "noise_sigma") {
      s.noise_sigma = detail::parse_triple(key, value)[0];
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(detail::parse_triple(key, value)[0]);
    } else if (key == "dims") {
      const auto d = detail::parse_triple(key, value);
      for (double v : d)
        require(v >= 3 && v == std::floor(v), ErrorCode::invalid_argument, "dims must be integers >= 3");
      cfg.dims = {static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[1]),
                  static_cast<std::size_t>(d[2])};
    } else if (key == "spacing") {
      const auto sp = detail::parse_triple(key, value);
      cfg.spacing = {sp[0], sp[1], sp[2]};
      validate(cfg.spacing);
    } else {
      fail(ErrorCode::invalid_argument, "unknown key '" + key + "'");
    }
  }
  if (cfg.spec.shape == PhantomShape::sphere)
    cfg.spec.semi_axes = {cfg.spec.radius, cfg.spec.radius, cfg.spec.radius};
  return cfg;
}

}  // namespace volumetrica
