// Bath geometry: position sampling statistics, couplings, angular averages,
// and the far-shell truncation rule.  Distribution checks use frozen seeds
// with Kolmogorov-Smirnov p-value gates or >= 4 sigma count margins.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <spinbath/geometry.hpp>
#include <spinbath/special.hpp>

using namespace spinbath;

namespace {

GeometrySpec make_spec(int dimension, double alpha, double density, double j_z) {
  GeometrySpec spec;
  spec.dimension = dimension;
  spec.alpha = alpha;
  spec.density = density;
  spec.j_z = j_z;
  return spec;
}

// KS p-value of the hypothesis that the entries of u are Uniform(0,1).
double ks_uniform_p(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const std::size_t m = u.size();
  double d = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    d = std::max(d, static_cast<double>(i + 1) / m - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / m);
  }
  return ks_p_value(d, m);
}

// Composite Simpson on a smooth piece; n must be even.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("special functions: frozen values and domain errors") {
  REQUIRE(unit_ball_volume(1) == Catch::Approx(2.0).epsilon(1e-14));
  REQUIRE(unit_ball_volume(2) == Catch::Approx(kPi).epsilon(1e-14));
  REQUIRE(unit_ball_volume(3) == Catch::Approx(4.0 * kPi / 3.0).epsilon(1e-14));
  REQUIRE_THROWS_AS(unit_ball_volume(0), std::invalid_argument);
  REQUIRE_THROWS_AS(unit_ball_volume(4), std::invalid_argument);

  // Gamma(-1/2) = -2 sqrt(pi), Gamma(-3/2) = 4 sqrt(pi) / 3
  REQUIRE(gamma_negative(0.5) == Catch::Approx(-2.0 * std::sqrt(kPi)).epsilon(1e-12));
  REQUIRE(gamma_negative(1.5) == Catch::Approx(4.0 * std::sqrt(kPi) / 3.0).epsilon(1e-12));
  REQUIRE_THROWS_AS(gamma_negative(2.0), std::invalid_argument);
  REQUIRE_THROWS_AS(gamma_negative(-0.5), std::invalid_argument);

  // Q(1) = 2 (e^-2 - e^-8 + e^-18 - ...) = 0.2700003...
  REQUIRE(kolmogorov_q(1.0) == Catch::Approx(0.2700003).margin(1e-6));
  REQUIRE(kolmogorov_q(0.0) == 1.0);
  REQUIRE(kolmogorov_q(5.0) < 1e-20);

  REQUIRE(kPpmToPerNm3 == 1.76e-4);
}

TEST_CASE("sampled count follows the Poisson mean n * V") {
  // D = 2, n = 0.011 nm^-2, R = 100 nm -> mean 345.575 per draw.
  // 400 seeds: sample-mean margin 4.0 = 4.3 * sqrt(mean / 400).
  auto spec = make_spec(2, 3.0, 0.011, 1.0);
  const double mean_expected = 0.011 * kPi * 100.0 * 100.0;
  double total = 0.0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    total += static_cast<double>(sample_positions(spec, 100.0, derive_seed(0x6E0ull, s)).count());
  }
  REQUIRE(total / 400.0 == Catch::Approx(mean_expected).margin(4.0));
}

TEST_CASE("radial positions follow the CDF (r/R)^D") {
  const double radius = 100.0;
  struct Case {
    int dimension;
    double density;
    std::uint64_t seed_family;
  };
  for (const auto& c : {Case{1, 5.0, 0x6E1ull}, Case{2, 0.03, 0x6E2ull}, Case{3, 2.4e-4, 0x6E3ull}}) {
    auto spec = make_spec(c.dimension, 3.0, c.density, 1.0);
    std::vector<double> u;
    for (std::uint64_t s = 0; s < 11; ++s) {
      const auto config = sample_positions(spec, radius, derive_seed(c.seed_family, s));
      for (const auto& p : config.positions) {
        double r = 0.0;
        if (c.dimension == 1) {
          r = std::abs(p[0]);
        } else if (c.dimension == 2) {
          r = std::hypot(p[0], p[1]);
        } else {
          r = std::hypot(p[0], p[1], p[2]);
        }
        REQUIRE(r <= radius);
        u.push_back(std::pow(r / radius, static_cast<double>(c.dimension)));
      }
    }
    INFO("dimension " << c.dimension << " with " << u.size() << " samples");
    REQUIRE(u.size() > 8000);
    REQUIRE(ks_uniform_p(u) > 1e-4);
  }
}

TEST_CASE("quasi-2D slab offsets are uniform across the thickness") {
  auto spec = make_spec(2, 3.0, 0.03, 1.0);
  spec.slab_thickness_nm = 4.0;
  std::vector<double> u_z;
  std::vector<double> u_r;
  for (std::uint64_t s = 0; s < 11; ++s) {
    const auto config = sample_positions(spec, 100.0, derive_seed(0x6E4ull, s));
    for (const auto& p : config.positions) {
      REQUIRE(std::abs(p[2]) <= 2.0);
      u_z.push_back((p[2] + 2.0) / 4.0);
      u_r.push_back(std::pow(std::hypot(p[0], p[1]) / 100.0, 2.0));
    }
  }
  REQUIRE(u_z.size() > 8000);
  REQUIRE(ks_uniform_p(u_z) > 1e-4);
  REQUIRE(ks_uniform_p(u_r) > 1e-4);
}

TEST_CASE("no sampled position lands inside the exclusion radius") {
  // Dense 1D bath: ~7.7% of raw draws fall inside 0.154 nm and must be redrawn.
  auto spec = make_spec(1, 5.0, 0.0, 1.0);
  spec.density = 5.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto config = sample_positions(spec, 2.0, derive_seed(0x6E5ull, s));
    for (const auto& p : config.positions) {
      REQUIRE(std::hypot(p[0], p[1], p[2]) >= spec.exclusion_radius_nm);
    }
  }
  auto spec3 = make_spec(3, 3.0, 2.0, 1.0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto config = sample_positions(spec3, 1.2, derive_seed(0x6E6ull, s));
    for (const auto& p : config.positions) {
      REQUIRE(std::hypot(p[0], p[1], p[2]) >= spec3.exclusion_radius_nm);
    }
  }
}

TEST_CASE("couplings recompute from positions as J_z * g / r^alpha") {
  auto spec = make_spec(3, 2.5, 4.4e-4, 17.3);
  spec.angular = AngularModel::SecularDipolar;
  const auto config = sample_bath(spec, 30.0, 0xC0FFEEull);
  REQUIRE(config.count() > 0);
  REQUIRE(config.couplings.size() == config.count());
  for (std::size_t i = 0; i < config.count(); ++i) {
    const auto& p = config.positions[i];
    const double r = std::hypot(p[0], p[1], p[2]);
    const double c = p[2] / r;
    const double expected = 17.3 * (1.0 - 3.0 * c * c) / std::pow(r, 2.5);
    REQUIRE(std::abs(config.couplings[i] - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
  }

  // Isotropic slab: coupling uses the full 3D distance including the z offset.
  auto slab = make_spec(2, 3.0, 0.02, 5.0);
  slab.slab_thickness_nm = 3.0;
  const auto config2 = sample_bath(slab, 40.0, 0xC0FFEE2ull);
  REQUIRE(config2.count() > 0);
  for (std::size_t i = 0; i < config2.count(); ++i) {
    const auto& p = config2.positions[i];
    const double r = std::hypot(p[0], p[1], p[2]);
    REQUIRE(config2.couplings[i] == Catch::Approx(5.0 / std::pow(r, 3.0)).epsilon(1e-12));
    REQUIRE(config2.couplings[i] > 0.0);
  }
}

TEST_CASE("angular factor: isotropic is 1, secular spans [-2, 1]") {
  REQUIRE(angular_factor({0, 0, 1}, AngularModel::Isotropic) == 1.0);
  REQUIRE(angular_factor({1, 0, 0}, AngularModel::Isotropic) == 1.0);
  REQUIRE(angular_factor({0, 0, 1}, AngularModel::SecularDipolar) == Catch::Approx(-2.0));
  REQUIRE(angular_factor({1, 0, 0}, AngularModel::SecularDipolar) == Catch::Approx(1.0));
  const double magic = 1.0 / std::sqrt(3.0);
  const double sm = std::sqrt(1.0 - magic * magic);
  REQUIRE(angular_factor({sm, 0, magic}, AngularModel::SecularDipolar) == Catch::Approx(0.0).margin(1e-12));
  Rng rng(0xA11ull);
  for (int i = 0; i < 200; ++i) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double phi = 2.0 * kPi * rng.uniform();
    const double s = std::sqrt(1.0 - u * u);
    const double g = angular_factor({s * std::cos(phi), s * std::sin(phi), u},
                                    AngularModel::SecularDipolar);
    REQUIRE(g >= -2.0);
    REQUIRE(g <= 1.0);
  }
  REQUIRE(max_abs_angular_factor(AngularModel::Isotropic) == 1.0);
  REQUIRE(max_abs_angular_factor(AngularModel::SecularDipolar) == 2.0);
}

TEST_CASE("angular average gbar matches an independent quadrature") {
  // Isotropic: exactly 1 regardless of dimension/alpha.
  for (int d : {1, 2, 3}) {
    REQUIRE(angular_average_gbar(make_spec(d, 3.0, 1.0, 1.0)) == 1.0);
  }

  // D = 1 along the axis: both directions give |g| = 2, so gbar = 2 exactly.
  auto axial = make_spec(1, 3.0, 1.0, 1.0);
  axial.angular = AngularModel::SecularDipolar;
  axial.axis = {1.0, 0.0, 0.0};
  REQUIRE(angular_average_gbar(axial) == Catch::Approx(2.0).epsilon(1e-12));

  // D = 1 perpendicular to the axis: c = 0, g = 1.
  auto perp = make_spec(1, 3.0, 1.0, 1.0);
  perp.angular = AngularModel::SecularDipolar;
  REQUIRE(angular_average_gbar(perp) == Catch::Approx(1.0).epsilon(1e-12));

  // D = 2 in-plane circle with the axis normal to the plane: c = 0, g = 1.
  auto planar = make_spec(2, 3.0, 1.0, 1.0);
  planar.angular = AngularModel::SecularDipolar;
  REQUIRE(angular_average_gbar(planar) == Catch::Approx(1.0).epsilon(1e-12));

  // D = 3: sphere average of |1 - 3 u^2|^s over u = cos(theta); the pieces
  // [0, 1/sqrt(3)] and [1/sqrt(3), 1] are smooth, so Simpson each separately.
  const double uk = 1.0 / std::sqrt(3.0);
  for (double alpha : {3.0, 2.0}) {
    const double s = 3.0 / alpha;
    auto f = [s](double u) { return std::pow(std::abs(1.0 - 3.0 * u * u), s); };
    const double mean = simpson(f, 0.0, uk, 1 << 15) + simpson(f, uk, 1.0, 1 << 15);
    const double expected = std::pow(mean, 1.0 / s);
    auto spec = make_spec(3, alpha, 1.0, 1.0);
    spec.angular = AngularModel::SecularDipolar;
    INFO("alpha " << alpha);
    REQUIRE(angular_average_gbar(spec) == Catch::Approx(expected).epsilon(5e-5));
  }
  // s = 1 has the closed form 4 / (3 sqrt(3)).
  auto iso3 = make_spec(3, 3.0, 1.0, 1.0);
  iso3.angular = AngularModel::SecularDipolar;
  REQUIRE(angular_average_gbar(iso3) == Catch::Approx(4.0 / (3.0 * std::sqrt(3.0))).epsilon(5e-5));

  // D = 2 with the axis in the plane: g = 1 - 3 cos^2(phi), kink at
  // phi = acos(1/sqrt(3)).
  const double pk = std::acos(uk);
  for (double alpha : {3.0, 2.0}) {
    const double s = 2.0 / alpha;
    auto f = [s](double phi) {
      const double c = std::cos(phi);
      return std::pow(std::abs(1.0 - 3.0 * c * c), s);
    };
    const double mean =
        (simpson(f, 0.0, pk, 1 << 15) + simpson(f, pk, 0.5 * kPi, 1 << 15)) / (0.5 * kPi);
    const double expected = std::pow(mean, 1.0 / s);
    auto spec = make_spec(2, alpha, 1.0, 1.0);
    spec.angular = AngularModel::SecularDipolar;
    spec.axis = {1.0, 0.0, 0.0};
    INFO("alpha " << alpha);
    REQUIRE(angular_average_gbar(spec) == Catch::Approx(expected).epsilon(5e-5));
  }
}

TEST_CASE("far-shell exponent matches the closed formula and shrinks with R") {
  // Independent arithmetic with literal surface areas S_D = 2, 2 pi, 4 pi.
  struct Case {
    int dimension;
    double alpha;
    double density;
    double j_z;
    AngularModel angular;
    double radius;
    double chi;
  };
  for (const auto& c : {Case{3, 3.0, 0.01, 50.0, AngularModel::Isotropic, 20.0, 2.0},
                        Case{2, 3.0, 0.0036, 326.7, AngularModel::SecularDipolar, 35.0, 0.7},
                        Case{1, 2.0, 0.8, 12.0, AngularModel::Isotropic, 15.0, 1.3}}) {
    auto spec = make_spec(c.dimension, c.alpha, c.density, c.j_z);
    spec.angular = c.angular;
    const double surface = c.dimension == 1 ? 2.0 : (c.dimension == 2 ? 2.0 * kPi : 4.0 * kPi);
    const double gmax = c.angular == AngularModel::Isotropic ? 1.0 : 2.0;
    const double p = 2.0 * c.alpha - c.dimension;
    const double expected = c.density * surface * (c.j_z * gmax) * (c.j_z * gmax) * c.chi /
                            (8.0 * p) * std::pow(c.radius, -p);
    INFO("dimension " << c.dimension);
    REQUIRE(tail_exponent_beyond(spec, c.radius, c.chi) == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(tail_exponent_beyond(spec, 2.0 * c.radius, c.chi) <
            tail_exponent_beyond(spec, c.radius, c.chi));
  }
}

TEST_CASE("auto region radius inverts the tail rule or applies its floors") {
  // Tail rule binding: the returned radius reproduces the target share exactly.
  auto spec = make_spec(3, 3.0, 0.01, 50.0);
  const double chi = 2.0;
  const double exponent = 1.0;
  const double radius = auto_region_radius(spec, chi, exponent);
  REQUIRE(radius > 20.0);
  REQUIRE(tail_exponent_beyond(spec, radius, chi) ==
          Catch::Approx(spec.tail_fraction * exponent).epsilon(1e-10));

  // Strong-coupling floor: 2 * (J gmax sqrt(chi) / 2)^(1/alpha) dominates.
  auto strong = make_spec(3, 3.0, 1e-6, 1000.0);
  strong.tail_fraction = 0.5;
  const double r_typ = std::pow(1000.0 * std::sqrt(100.0) / 2.0, 1.0 / 3.0);
  REQUIRE(auto_region_radius(strong, 100.0, 0.05) == Catch::Approx(2.0 * r_typ).epsilon(1e-12));

  // Exclusion floor: everything else tiny -> 10 * exclusion radius.
  auto tiny = make_spec(3, 3.0, 1e-9, 0.01);
  tiny.tail_fraction = 0.5;
  REQUIRE(auto_region_radius(tiny, 1e-4, 10.0) ==
          Catch::Approx(10.0 * tiny.exclusion_radius_nm).epsilon(1e-12));

  REQUIRE_THROWS_AS(auto_region_radius(spec, 0.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(auto_region_radius(spec, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("bath sampling is deterministic per seed") {
  auto spec = make_spec(3, 3.0, 1e-3, 25.0);
  spec.angular = AngularModel::SecularDipolar;
  const auto a = sample_bath(spec, 25.0, 0xABCull);
  const auto b = sample_bath(spec, 25.0, 0xABCull);
  REQUIRE(a.count() == b.count());
  REQUIRE(a.count() > 0);
  for (std::size_t i = 0; i < a.count(); ++i) {
    REQUIRE(a.positions[i] == b.positions[i]);
    REQUIRE(a.couplings[i] == b.couplings[i]);
  }
  const auto c = sample_bath(spec, 25.0, 0xABDull);
  const bool differs = c.count() != a.count() || c.positions != a.positions;
  REQUIRE(differs);
}

TEST_CASE("geometry validation rejects inconsistent configurations") {
  const auto good = make_spec(3, 3.0, 0.01, 50.0);
  REQUIRE_NOTHROW(good.validate());

  auto bad = good;
  bad.dimension = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.dimension = 4;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.alpha = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

  // D < 2 alpha is strict: D = 3, alpha = 1.5 diverges.
  bad = good;
  bad.dimension = 3;
  bad.alpha = 1.5;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.dimension = 2;
  bad.alpha = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.alpha = 1.01;
  REQUIRE_NOTHROW(bad.validate());

  bad = good;
  bad.density = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.slab_thickness_nm = -1.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.slab_thickness_nm = 2.0;  // slab requires dimension 2
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.dimension = 2;
  REQUIRE_NOTHROW(bad.validate());

  bad = good;
  bad.j_z = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.exclusion_radius_nm = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.region_radius_nm = 0.1;  // below the exclusion radius
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.tail_fraction = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.tail_fraction = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = good;
  bad.axis = {1.0, 1.0, 0.0};
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

  REQUIRE_THROWS_AS(sample_positions(good, 0.1, 1ull), std::invalid_argument);

  // Hand-built position inside the exclusion radius is rejected.
  BathConfiguration config;
  config.positions.push_back({0.05, 0.0, 0.0});
  REQUIRE_THROWS_AS(coupling_strengths(config, good), std::invalid_argument);
}
