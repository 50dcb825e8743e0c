#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinbath/curve.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/sequence.hpp"
#include "spinbath/special.hpp"

namespace spinbath {

// Disorder-averaged decoherence profiles C(t) = exp(-A chi(t)^{D/2alpha}),
// their positional prefactor, stretch powers and decay timescales.

enum class AmplitudeMode : std::uint8_t { Phenomenological, Microscopic };
enum class NoiseClass : std::uint8_t { Gaussian, Telegraph };
enum class Regime : std::uint8_t { Early, Late };
enum class DecayRegime : std::uint8_t { EarlyRamsey, EarlyEchoGaussian, EarlyEchoTelegraph, Late };

// Dimensionless positional constant:
//   C(D,alpha) = 1/2 [ -(D A_D / alpha) Gamma(-D/2alpha) / 2^{D/2alpha + 1} ]^{alpha/D}
// where A_D is the unit-ball volume.  The leading 1/2 absorbs the +-1/2 bath
// spin amplitude, so the disorder-averaged exponent is exactly
// n (C gbar J_z chi^{1/2})^{D/alpha} with no residual factor of two.
inline double positional_prefactor(int dimension, double alpha) {
  if (dimension < 1 || !(alpha > 0.0) || !(static_cast<double>(dimension) < 2.0 * alpha)) {
    throw std::invalid_argument("positional_prefactor: require D >= 1 and D < 2*alpha");
  }
  const double d = static_cast<double>(dimension);
  const double s = d / (2.0 * alpha);
  const double bracket = -(d * unit_ball_volume(dimension) / alpha) * gamma_negative(s) /
                         std::pow(2.0, s + 1.0);
  return 0.5 * std::pow(bracket, alpha / d);
}

struct ProfileParams {
  int dimension = 3;
  double alpha = 3.0;
  SequenceSpec seq;
  double tau_c_us = 1.0;
  AmplitudeMode mode = AmplitudeMode::Phenomenological;
  // Phenomenological
  double amplitude = 1.0;  // units us^{-D/alpha}
  // Microscopic
  double density = 0.0;    // per nm^D
  double j_z = 0.0;        // rad/us nm^alpha
  double g_bar = 1.0;      // dimensionless angular average

  void validate() const {
    if (dimension < 1 || !(alpha > 0.0) ||
        !(static_cast<double>(dimension) < 2.0 * alpha)) {
      throw std::invalid_argument("ProfileParams: require D >= 1 and D < 2*alpha");
    }
    if (!(tau_c_us > 0.0)) throw std::invalid_argument("ProfileParams: tau_c_us must be > 0");
    seq.validate();
    if (mode == AmplitudeMode::Phenomenological) {
      if (!(amplitude > 0.0)) throw std::invalid_argument("ProfileParams: amplitude must be > 0");
    } else {
      if (!(density > 0.0) || !(j_z > 0.0) || !(g_bar >= 0.0)) {
        throw std::invalid_argument("ProfileParams: microscopic mode needs n>0, J_z>0, g_bar>=0");
      }
    }
  }
};

// Effective amplitude A in C = exp(-A chi^{D/2alpha}).
inline double profile_amplitude(const ProfileParams& p) {
  p.validate();
  if (p.mode == AmplitudeMode::Phenomenological) return p.amplitude;
  const double c = positional_prefactor(p.dimension, p.alpha);
  return p.density *
         std::pow(c * p.g_bar * p.j_z, static_cast<double>(p.dimension) / p.alpha);
}

inline double coherence_from_chi(const ProfileParams& p, double chi) {
  const double exponent_power = static_cast<double>(p.dimension) / (2.0 * p.alpha);
  if (chi < 0.0) throw std::invalid_argument("coherence_from_chi: chi must be >= 0");
  if (chi == 0.0) return 1.0;
  return std::exp(-profile_amplitude(p) * std::pow(chi, exponent_power));
}

// chi defaults to the segment-exact quadrature route (exact for every
// sequence); asymptotic methods are accepted for pure-regime checks.
inline double coherence(const ProfileParams& p, double t,
                        ChiMethod method = ChiMethod::Quadrature) {
  p.validate();
  if (t < 0.0) throw std::invalid_argument("coherence: t must be >= 0");
  if (t == 0.0) return 1.0;
  double chi = 0.0;
  switch (method) {
    case ChiMethod::ClosedForm: chi = chi_closed_form(p.seq, t, p.tau_c_us); break;
    case ChiMethod::Quadrature: chi = chi_quadrature(p.seq, t, p.tau_c_us); break;
    case ChiMethod::Spectral: chi = chi_spectral(p.seq, t, p.tau_c_us); break;
    case ChiMethod::AsymptoticShort: chi = chi_asymptotic(p.seq, t, p.tau_c_us, true); break;
    default: chi = chi_asymptotic(p.seq, t, p.tau_c_us, false); break;
  }
  return coherence_from_chi(p, chi);
}

inline CoherenceCurve analytic_curve(const ProfileParams& p, const std::vector<double>& times,
                                     ChiMethod method = ChiMethod::Quadrature) {
  CoherenceCurve curve;
  curve.times_us = times;
  curve.coherence.reserve(times.size());
  for (double t : times) curve.coherence.push_back(coherence(p, t, method));
  curve.require_consistent();
  return curve;
}

// Universal stretch powers beta in C = exp(-(t/T)^beta).
inline double stretch_power(SequenceKind seq, NoiseClass noise, Regime regime, int dimension,
                            double alpha) {
  if (dimension < 1 || !(alpha > 0.0)) {
    throw std::invalid_argument("stretch_power: require D >= 1 and alpha > 0");
  }
  const double d = static_cast<double>(dimension);
  if (regime == Regime::Late || seq == SequenceKind::XY8) return d / (2.0 * alpha);
  if (seq == SequenceKind::RamseyDeer) return d / alpha;
  // early-time spin echo
  return noise == NoiseClass::Gaussian ? 1.5 * d / alpha : 1.0 + d / alpha;
}

struct StretchReport {
  DecayRegime regime = DecayRegime::EarlyRamsey;
  double beta = 0.0;
};

struct LocalStretchSeries {
  std::vector<double> times_us;   // window midpoints (geometric)
  std::vector<double> beta;       // d log(-log C) / d log t
  std::vector<double> beta_err;   // regression slope standard error
  std::size_t n_excluded = 0;     // points outside the usable coherence band
};

// Sliding-window slope of log(-log C) against log t.  Points with C outside
// (0, c_max) are excluded first; the default c_max avoids the -log C -> 0
// blowup near full coherence.
inline LocalStretchSeries local_stretch(const CoherenceCurve& curve, std::size_t window,
                                        double c_max = 0.999) {
  curve.require_consistent();
  if (window < 4) throw std::invalid_argument("local_stretch: window must be >= 4");
  std::vector<double> lx, ly;
  LocalStretchSeries out;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double c = curve.coherence[i];
    const double t = curve.times_us[i];
    if (!(t > 0.0) || !(c > 0.0) || !(c < c_max)) {
      ++out.n_excluded;
      continue;
    }
    lx.push_back(std::log(t));
    ly.push_back(std::log(-std::log(c)));
  }
  if (lx.size() < window) {
    throw std::invalid_argument("local_stretch: only " + std::to_string(lx.size()) +
                                " usable points for window " + std::to_string(window));
  }
  for (std::size_t i = 0; i + window <= lx.size(); ++i) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t j = i; j < i + window; ++j) {
      sx += lx[j];
      sy += ly[j];
      sxx += lx[j] * lx[j];
      sxy += lx[j] * ly[j];
    }
    const auto n = static_cast<double>(window);
    const double denom = n * sxx - sx * sx;
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0.0;
    for (std::size_t j = i; j < i + window; ++j) {
      const double r = ly[j] - (intercept + slope * lx[j]);
      ss_res += r * r;
    }
    const double var_slope = window > 2 ? ss_res / (n - 2.0) * n / denom : 0.0;
    out.times_us.push_back(std::exp(0.5 * (lx[i] + lx[i + window - 1])));
    out.beta.push_back(slope);
    out.beta_err.push_back(std::sqrt(std::max(0.0, var_slope)));
  }
  return out;
}

// 1/e decay times of the pure-regime stretched exponentials, microscopic mode.
inline double decay_timescale(const ProfileParams& p, DecayRegime regime) {
  p.validate();
  if (p.mode != AmplitudeMode::Microscopic) {
    throw std::invalid_argument(
        "decay_timescale: phenomenological amplitude lacks the (n, J_z, g_bar) decomposition");
  }
  const double d = static_cast<double>(p.dimension);
  const double rate = positional_prefactor(p.dimension, p.alpha) * p.g_bar * p.j_z *
                      std::pow(p.density, p.alpha / d);  // units 1/us
  switch (regime) {
    case DecayRegime::EarlyRamsey:
      return 1.0 / rate;
    case DecayRegime::EarlyEchoGaussian:
      return std::cbrt(6.0 * p.tau_c_us) * std::pow(rate, -2.0 / 3.0);
    case DecayRegime::Late:
      return 1.0 / (2.0 * p.tau_c_us * rate * rate);
    default:
      throw std::invalid_argument(
          "decay_timescale: telegraph early echo has no closed-form timescale");
  }
}

}  // namespace spinbath
