#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinbath/rng.hpp"
#include "spinbath/special.hpp"

namespace spinbath {

// Disordered bath-spin positions in D dimensions around a probe at the origin,
// and the resulting power-law Ising couplings J_z g_i / r_i^alpha.
// Lengths in nm, couplings in rad/us, densities in spins per nm^D.

// 1 ppm of substitutional defects in diamond = 1.76e-4 nm^-3
// (carbon number density 1.76e23 cm^-3).  The same factor converts
// areal ppm*nm <-> nm^-2.
inline constexpr double kPpmToPerNm3 = 1.76e-4;

enum class AngularModel : std::uint8_t { Isotropic, SecularDipolar };

struct GeometrySpec {
  int dimension = 3;                  // D in {1,2,3}
  double alpha = 3.0;                 // power-law exponent, D < 2*alpha required
  double density = 0.0;               // spins per nm^D
  double slab_thickness_nm = 0.0;     // quasi-2D slab width w (D=2 only); 0 = ideal layer
  std::optional<double> region_radius_nm;  // sampling radius R; absent = auto rule
  double j_z = 0.0;                   // rad us^-1 nm^alpha
  double exclusion_radius_nm = 0.154; // physical near-field cutoff (diamond bond scale)
  AngularModel angular = AngularModel::Isotropic;
  std::array<double, 3> axis = {0.0, 0.0, 1.0};  // quantization axis for SecularDipolar
  double tail_fraction = 1e-3;        // allowed far-shell share of -log C(t_max)

  void validate() const {
    if (dimension < 1 || dimension > 3) throw std::invalid_argument("GeometrySpec: dimension must be 1, 2 or 3");
    if (!(alpha > 0.0)) throw std::invalid_argument("GeometrySpec: alpha must be > 0");
    if (!(static_cast<double>(dimension) < 2.0 * alpha)) {
      throw std::invalid_argument("GeometrySpec: divergent configuration, require D < 2*alpha (D=" +
                                  std::to_string(dimension) + ", alpha=" + std::to_string(alpha) + ")");
    }
    if (!(density > 0.0)) throw std::invalid_argument("GeometrySpec: density must be > 0");
    if (slab_thickness_nm < 0.0) throw std::invalid_argument("GeometrySpec: slab thickness must be >= 0");
    if (slab_thickness_nm > 0.0 && dimension != 2) {
      throw std::invalid_argument("GeometrySpec: slab thickness applies to quasi-2D (dimension 2) only");
    }
    if (!(j_z > 0.0)) throw std::invalid_argument("GeometrySpec: j_z must be > 0");
    if (!(exclusion_radius_nm > 0.0)) throw std::invalid_argument("GeometrySpec: exclusion radius must be > 0");
    if (region_radius_nm && !(*region_radius_nm > exclusion_radius_nm)) {
      throw std::invalid_argument("GeometrySpec: region radius must exceed the exclusion radius");
    }
    if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) {
      throw std::invalid_argument("GeometrySpec: tail_fraction must be in (0,1)");
    }
    const double an = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (std::abs(an - 1.0) > 1e-6) throw std::invalid_argument("GeometrySpec: axis must be a unit vector");
  }

  double sampling_volume(double radius) const {
    switch (dimension) {
      case 1: return 2.0 * radius;
      case 2: return kPi * radius * radius;
      default: return 4.0 / 3.0 * kPi * radius * radius * radius;
    }
  }
};

struct BathConfiguration {
  std::vector<std::array<double, 3>> positions;  // 3D embedding; slab z-offset included
  std::vector<double> couplings;                 // rad/us, filled by coupling_strengths
  std::size_t count() const { return positions.size(); }
};

// Angular factor g of the coupling: Isotropic -> 1, SecularDipolar ->
// 1 - 3 cos^2(theta) with theta between the separation direction and the axis.
inline double angular_factor(const std::array<double, 3>& direction, AngularModel model,
                             const std::array<double, 3>& axis = {0.0, 0.0, 1.0}) {
  if (model == AngularModel::Isotropic) return 1.0;
  const double c = direction[0] * axis[0] + direction[1] * axis[1] + direction[2] * axis[2];
  return 1.0 - 3.0 * c * c;
}

inline double max_abs_angular_factor(AngularModel model) {
  return model == AngularModel::Isotropic ? 1.0 : 2.0;
}

// Angular average gbar = (<|g|^{D/alpha}>_solid-angle)^{alpha/D} over the
// D-dimensional direction set (D=1: segment axis +-x, D=2: in-plane circle,
// D=3: full sphere).  This is the abstract average entering the positional
// prefactor; Isotropic gives exactly 1.
inline double angular_average_gbar(const GeometrySpec& spec) {
  if (spec.angular == AngularModel::Isotropic) return 1.0;
  const double s = static_cast<double>(spec.dimension) / spec.alpha;
  auto g_of = [&](const std::array<double, 3>& e) {
    return std::abs(angular_factor(e, spec.angular, spec.axis));
  };
  double acc = 0.0;
  if (spec.dimension == 1) {
    acc = 0.5 * (std::pow(g_of({1, 0, 0}), s) + std::pow(g_of({-1, 0, 0}), s));
  } else if (spec.dimension == 2) {
    const int n = 4096;  // |g|^s has kinks at the magic angle; plain midpoint average
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * kPi * (i + 0.5) / n;
      acc += std::pow(g_of({std::cos(phi), std::sin(phi), 0.0}), s);
    }
    acc /= n;
  } else {
    const int n = 4096;  // midpoint in u = cos(theta); azimuthal part is symmetric
    for (int i = 0; i < n; ++i) {
      const double u = -1.0 + 2.0 * (i + 0.5) / n;
      const double r = std::sqrt(std::max(0.0, 1.0 - u * u));
      acc += std::pow(g_of({r, 0.0, u}), s);
    }
    acc /= n;
  }
  return std::pow(acc, 1.0 / s);
}

namespace detail {

inline std::array<double, 3> sample_direction(int dimension, Rng& rng) {
  switch (dimension) {
    case 1:
      return {(rng.next_u64() & 1ull) ? 1.0 : -1.0, 0.0, 0.0};
    case 2: {
      const double phi = 2.0 * kPi * rng.uniform();
      return {std::cos(phi), std::sin(phi), 0.0};
    }
    default: {
      // uniform on the sphere: u = cos(theta) uniform, azimuth uniform
      const double u = 2.0 * rng.uniform() - 1.0;
      const double phi = 2.0 * kPi * rng.uniform();
      const double r = std::sqrt(std::max(0.0, 1.0 - u * u));
      return {r * std::cos(phi), r * std::sin(phi), u};
    }
  }
}

inline double sample_radius(int dimension, double region_radius, Rng& rng) {
  // radial CDF (r/R)^D
  const double u = rng.uniform_pos();
  switch (dimension) {
    case 1: return region_radius * u;
    case 2: return region_radius * std::sqrt(u);
    default: return region_radius * std::cbrt(u);
  }
}

}  // namespace detail

// N ~ Poisson(n*V) points uniform in the D-ball of radius R around the probe;
// quasi-2D adds a uniform z offset in [-w/2, +w/2].  Points landing within the
// exclusion radius (3D distance) are redrawn.  Deterministic per (spec, seed).
inline BathConfiguration sample_positions(const GeometrySpec& spec, double region_radius,
                                          std::uint64_t seed) {
  spec.validate();
  if (!(region_radius > spec.exclusion_radius_nm)) {
    throw std::invalid_argument("sample_positions: region radius must exceed the exclusion radius");
  }
  Rng rng(seed);
  const double mean = spec.density * spec.sampling_volume(region_radius);
  const std::uint64_t n = rng.poisson(mean);
  BathConfiguration config;
  config.positions.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::array<double, 3> p{};
    double r3d = 0.0;
    do {
      const auto dir = detail::sample_direction(spec.dimension, rng);
      const double r = detail::sample_radius(spec.dimension, region_radius, rng);
      p = {r * dir[0], r * dir[1], r * dir[2]};
      if (spec.slab_thickness_nm > 0.0) {
        p[2] = spec.slab_thickness_nm * (rng.uniform() - 0.5);
      }
      r3d = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    } while (r3d < spec.exclusion_radius_nm);
    config.positions.push_back(p);
  }
  return config;
}

// coupling_i = J_z * g_i / r_i^alpha with r_i the full 3D probe->spin distance.
inline void coupling_strengths(BathConfiguration& config, const GeometrySpec& spec) {
  spec.validate();
  config.couplings.resize(config.positions.size());
  for (std::size_t i = 0; i < config.positions.size(); ++i) {
    const auto& p = config.positions[i];
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (r < spec.exclusion_radius_nm * (1.0 - 1e-12)) {
      throw std::invalid_argument("coupling_strengths: position inside the exclusion radius (r=" +
                                  std::to_string(r) + " nm)");
    }
    const std::array<double, 3> dir = {p[0] / r, p[1] / r, p[2] / r};
    const double g = angular_factor(dir, spec.angular, spec.axis);
    config.couplings[i] = spec.j_z * g / std::pow(r, spec.alpha);
  }
}

inline BathConfiguration sample_bath(const GeometrySpec& spec, double region_radius,
                                     std::uint64_t seed) {
  BathConfiguration config = sample_positions(spec, region_radius, seed);
  coupling_strengths(config, spec);
  return config;
}

// Far-shell contribution to -log C beyond radius R, in the Gaussian (weak
// coupling) limit that is exact for distant spins:
//   tail(R) = n * D*A_D * (J_z gmax)^2 chi / (8 (2alpha - D)) * R^{-(2alpha-D)}.
inline double tail_exponent_beyond(const GeometrySpec& spec, double radius, double chi_max) {
  const double d = static_cast<double>(spec.dimension);
  const double solid = d * unit_ball_volume(spec.dimension);  // D*A_D = surface of unit sphere
  const double jg = spec.j_z * max_abs_angular_factor(spec.angular);
  const double p = 2.0 * spec.alpha - d;
  return spec.density * solid * jg * jg * chi_max / (8.0 * p) * std::pow(radius, -p);
}

// Smallest radius whose far-shell share of the estimated total exponent is at
// most spec.tail_fraction.  `exponent_estimate` is -log C(t_max) from the
// analytic profile; chi_max is chi(t_max) for the planned sequence/noise.
inline double auto_region_radius(const GeometrySpec& spec, double chi_max,
                                 double exponent_estimate) {
  spec.validate();
  if (!(chi_max > 0.0)) throw std::invalid_argument("auto_region_radius: chi_max must be > 0");
  const double target = spec.tail_fraction * std::max(exponent_estimate, 0.05);
  const double d = static_cast<double>(spec.dimension);
  const double p = 2.0 * spec.alpha - d;
  const double solid = d * unit_ball_volume(spec.dimension);
  const double jg = spec.j_z * max_abs_angular_factor(spec.angular);
  const double coef = spec.density * solid * jg * jg * chi_max / (8.0 * p);
  double radius = std::pow(coef / target, 1.0 / p);
  // keep at least the strong-coupling shell (phase ~ 1 at r_typ) plus margin
  const double r_typ = std::pow(jg * std::sqrt(chi_max) / 2.0, 1.0 / spec.alpha);
  radius = std::max(radius, 2.0 * r_typ);
  radius = std::max(radius, 10.0 * spec.exclusion_radius_nm);
  return radius;
}

}  // namespace spinbath
