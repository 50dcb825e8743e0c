#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinbath/errors.hpp"
#include "spinbath/special.hpp"

namespace spinbath {

// Pulse sequences as toggling functions eta(t';t) in {-1,+1}, and the phase
// variance kernel chi(t) = int_0^t int_0^t eta(t')eta(t'') xi(t'-t'')dt'dt''
// for the exponential bath autocorrelation xi(u) = exp(-|u|/tau_c).
// Three independent evaluation routes (closed form, segment-exact quadrature,
// spectral) deliberately do not share intermediate code.

enum class SequenceKind : std::uint8_t { RamseyDeer, SpinEcho, XY8 };

struct SequenceSpec {
  SequenceKind kind = SequenceKind::RamseyDeer;
  double tau_p_us = 0.0;  // XY8 inter-pulse period
  std::string label;

  void validate() const {
    if (kind == SequenceKind::XY8 && !(tau_p_us > 0.0)) {
      throw std::invalid_argument("SequenceSpec: XY8 requires tau_p_us > 0");
    }
  }
};

enum class ChiMethod : std::uint8_t { ClosedForm, Quadrature, Spectral, AsymptoticShort, AsymptoticLong };

struct ChiEvaluation {
  std::vector<double> times_us;
  std::vector<double> chi_us2;
  ChiMethod method = ChiMethod::ClosedForm;
};

inline const char* chi_method_name(ChiMethod m) {
  switch (m) {
    case ChiMethod::ClosedForm: return "closed_form";
    case ChiMethod::Quadrature: return "quadrature";
    case ChiMethod::Spectral: return "spectral";
    case ChiMethod::AsymptoticShort: return "asymptotic_short";
    default: return "asymptotic_long";
  }
}

namespace detail {

inline void check_xy8_total(const SequenceSpec& seq, double total) {
  const double periods = total / seq.tau_p_us;
  if (std::abs(periods - std::round(periods)) > 1e-9 * std::max(1.0, periods)) {
    throw std::invalid_argument("XY8: total time must be a whole number of tau_p periods (got " +
                                std::to_string(periods) + " periods)");
  }
}

}  // namespace detail

// Sign history of the probe-bath coupling.  RamseyDeer: +1 throughout.
// SpinEcho: +1 on [0,t/2), -1 on [t/2,t).  XY8: +1 on [(m-1/4)tau_p,(m+1/4)tau_p),
// -1 on [(m+1/4)tau_p,(m+3/4)tau_p), starting positive on [0, tau_p/4).
inline int eta(const SequenceSpec& seq, double t_prime, double total) {
  seq.validate();
  if (t_prime < 0.0 || t_prime >= total) {
    throw std::invalid_argument("eta: require 0 <= t' < total");
  }
  switch (seq.kind) {
    case SequenceKind::RamseyDeer:
      return 1;
    case SequenceKind::SpinEcho:
      return t_prime < 0.5 * total ? 1 : -1;
    default: {
      detail::check_xy8_total(seq, total);
      const double v = t_prime / seq.tau_p_us + 0.25;
      return (v - std::floor(v)) < 0.5 ? 1 : -1;
    }
  }
}

struct EtaSegment {
  double a = 0.0, b = 0.0;  // [a, b)
  int sign = 1;
};

// Contiguous constant-sign partition of [0, t].
inline std::vector<EtaSegment> eta_segments(const SequenceSpec& seq, double t) {
  seq.validate();
  if (!(t > 0.0)) throw std::invalid_argument("eta_segments: t must be > 0");
  std::vector<EtaSegment> segs;
  switch (seq.kind) {
    case SequenceKind::RamseyDeer:
      segs.push_back({0.0, t, 1});
      break;
    case SequenceKind::SpinEcho:
      segs.push_back({0.0, 0.5 * t, 1});
      segs.push_back({0.5 * t, t, -1});
      break;
    default: {
      detail::check_xy8_total(seq, t);
      const double tp = seq.tau_p_us;
      const auto periods = static_cast<std::size_t>(std::llround(t / tp));
      double edge = 0.25 * tp;
      segs.push_back({0.0, edge, 1});
      int sign = -1;
      // alternating half-period segments; the final quarter closes positive
      while (edge + 0.5 * tp < t - 0.25 * tp + 1e-12 * t) {
        segs.push_back({edge, edge + 0.5 * tp, sign});
        edge += 0.5 * tp;
        sign = -sign;
      }
      segs.push_back({edge, t, sign});
      (void)periods;
      break;
    }
  }
  return segs;
}

// Exact Gauss-Markov kernels:
//   chi_DEER = 2 tau_c t - 2 tau_c^2 (1 - e^{-t/tau_c})
//   chi_SE   = 2 tau_c t - 2 tau_c^2 (3 + e^{-t/tau_c} - 4 e^{-t/2tau_c})
//   chi_XY8  = tau_p^2 t / (24 tau_c)   (valid for tau_p << tau_c)
// The XY8 coefficient follows from the sign pattern: a square wave of full
// period tau_p passes only odd harmonics w_k = 2 pi k / tau_p, and
// sum_odd k^-4 = pi^4/96 gives rate = tau_p^2/(24 tau_c); the segment-exact
// quadrature below reproduces it, so 1/24 is load-bearing, not a convention.
inline double chi_closed_form(const SequenceSpec& seq, double t, double tau_c) {
  seq.validate();
  if (t < 0.0 || !(tau_c > 0.0)) {
    throw std::invalid_argument("chi_closed_form: require t >= 0 and tau_c > 0");
  }
  if (t == 0.0) return 0.0;
  const double z = t / tau_c;
  switch (seq.kind) {
    case SequenceKind::RamseyDeer:
      return 2.0 * tau_c * t - 2.0 * tau_c * tau_c * (1.0 - std::exp(-z));
    case SequenceKind::SpinEcho:
      return 2.0 * tau_c * t -
             2.0 * tau_c * tau_c * (3.0 + std::exp(-z) - 4.0 * std::exp(-0.5 * z));
    default:
      if (seq.tau_p_us > tau_c / 10.0) {
        throw numeric_error(
            "chi_closed_form: XY8 asymptotic formula invalid for tau_p > tau_c/10 "
            "(tau_p=" + std::to_string(seq.tau_p_us) + ", tau_c=" + std::to_string(tau_c) +
            "); use the quadrature route");
      }
      return seq.tau_p_us * seq.tau_p_us * t / (24.0 * tau_c);
  }
}

// --- quadrature route -------------------------------------------------------

namespace detail {

// Exact double integral of e^{-|t'-t''|/tau_c} over [0,L]^2.
inline double diag_block(double len, double tau_c) {
  return 2.0 * (tau_c * len - tau_c * tau_c * (1.0 - std::exp(-len / tau_c)));
}

}  // namespace detail

// Segment-exact evaluation for exponential xi: every (p,q) segment pair has a
// closed-form block integral; the ordered cross sum is folded into a backward
// recurrence (only non-positive exponents appear), so the whole evaluation is
// O(#segments) and stable for thousands of pulses.
inline double chi_quadrature(const SequenceSpec& seq, double t, double tau_c) {
  if (t < 0.0 || !(tau_c > 0.0)) {
    throw std::invalid_argument("chi_quadrature: require t >= 0 and tau_c > 0");
  }
  if (t == 0.0) return 0.0;
  const auto segs = eta_segments(seq, t);
  const std::size_t m = segs.size();
  double chi = 0.0;
  for (const auto& s : segs) chi += detail::diag_block(s.b - s.a, tau_c);
  // R_p = sum_{q>p} sign_q (e^{-(a_q-b_p)/tau_c} - e^{-(b_q-b_p)/tau_c}), built backwards.
  double r_next = 0.0;  // R_{m-1} = 0
  std::vector<double> r(m, 0.0);
  for (std::size_t p = m - 1; p-- > 0;) {
    const double gap_a = (segs[p + 1].a - segs[p].b) / tau_c;   // = 0 for contiguous segments
    const double gap_b = (segs[p + 1].b - segs[p].b) / tau_c;
    const double term = segs[p + 1].sign * (std::exp(-gap_a) - std::exp(-gap_b));
    r[p] = term + std::exp(-gap_b) * r_next;
    r_next = r[p];
  }
  for (std::size_t p = 0; p + 1 < m; ++p) {
    const double len = segs[p].b - segs[p].a;
    chi += 2.0 * tau_c * tau_c * segs[p].sign * (1.0 - std::exp(-len / tau_c)) * r[p];
  }
  return chi;
}

namespace detail {

// Adaptive Simpson on [a,b] with absolute tolerance; recursion depth capped.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth, bool& ok) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol || (b - a) < 1e-14) {
    return left + right + delta / 15.0;
  }
  if (depth <= 0) {
    ok = false;
    return left + right;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok);
}

inline double integrate_1d(const std::function<double(double)>& f, double a, double b, double tol,
                           bool& ok) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48, ok);
}

}  // namespace detail

// General-xi quadrature: each segment pair reduces to a 1D integral of
// xi(u) * K(u) where K is the (piecewise linear) overlap kernel of the two
// intervals; pieces are integrated adaptively between the kernel's kink points.
inline double chi_quadrature(const SequenceSpec& seq, double t,
                             const std::function<double(double)>& xi) {
  if (!(t > 0.0)) {
    if (t == 0.0) return 0.0;
    throw std::invalid_argument("chi_quadrature: t must be >= 0");
  }
  const auto segs = eta_segments(seq, t);
  double chi = 0.0;
  bool ok = true;
  const double tol_pair = 1e-11 * t * t / static_cast<double>(segs.size() * segs.size());
  for (const auto& p : segs) {
    for (const auto& q : segs) {
      const double lo = p.a - q.b, hi = p.b - q.a;
      const double k1 = p.a - q.a, k2 = p.b - q.b;  // kernel kinks
      double knots[4] = {lo, std::min(k1, k2), std::max(k1, k2), hi};
      auto kernel = [&](double u) {
        const double overlap = std::min(p.b, q.b + u) - std::max(p.a, q.a + u);
        return overlap > 0.0 ? overlap * xi(u) : 0.0;
      };
      double block = 0.0;
      for (int piece = 0; piece < 3; ++piece) {
        block += detail::integrate_1d(kernel, knots[piece], knots[piece + 1], tol_pair, ok);
      }
      chi += p.sign * q.sign * block;
    }
  }
  if (!ok) {
    throw numeric_error("chi_quadrature: adaptive tolerance not reached; achieved estimate " +
                        std::to_string(chi));
  }
  return chi;
}

// --- spectral route ---------------------------------------------------------

namespace detail {

// |f(omega;t)|^2 for the filter f = int_0^t eta e^{-i omega t'} dt'.
// Sine forms avoid cancellation near omega = 0.
inline double filter_sq(const SequenceSpec& seq, const std::vector<EtaSegment>& segs, double t,
                        double w) {
  switch (seq.kind) {
    case SequenceKind::RamseyDeer: {
      const double s = std::sin(0.5 * w * t);
      return 4.0 * s * s / (w * w);
    }
    case SequenceKind::SpinEcho: {
      const double s = std::sin(0.25 * w * t);
      const double s2 = s * s;
      return 16.0 * s2 * s2 / (w * w);
    }
    default: {
      double re = 0.0, im = 0.0;  // sum of sign_p (e^{-i w a} - e^{-i w b}) / (i w)
      for (const auto& sg : segs) {
        re += sg.sign * (std::sin(w * sg.b) - std::sin(w * sg.a));
        im += sg.sign * (std::cos(w * sg.b) - std::cos(w * sg.a));
      }
      return (re * re + im * im) / (w * w);
    }
  }
}

// int_W^inf S(omega)/omega^2 domega for the Lorentzian S = tau_c/(pi(1+w^2 tau_c^2)).
inline double lorentz_over_w2_tail(double w_cut, double tau_c) {
  return tau_c / kPi * (1.0 / w_cut - tau_c * (0.5 * kPi - std::atan(w_cut * tau_c)));
}

struct GaussLegendre16 {
  double node[8];    // positive half; rule is symmetric
  double weight[8];
};

// Nodes are roots of P_16 found by Newton iteration from the Chebyshev guess;
// computed once, so no typed-in table to mistrust.
inline const GaussLegendre16& gauss_legendre_16() {
  static const GaussLegendre16 rule = [] {
    GaussLegendre16 r{};
    constexpr int n = 16;
    for (int i = 0; i < 8; ++i) {
      double x = std::cos(kPi * (static_cast<double>(i) + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      r.node[i] = x;
      r.weight[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
  }();
  return rule;
}

}  // namespace detail

// Spectral evaluation chi = int |f(omega;t)|^2 S(omega) domega with
// S(omega) = (1/pi) tau_c/(1+omega^2 tau_c^2), normalized so int S = xi(0) = 1.
// Under this convention f carries no 1/sqrt(2pi): Parseval reads
// int |f|^2 domega = 2 pi t.  Gauss-Legendre panels sized to the oscillation
// scale, cutoff grown geometrically until the analytic mean-field tail
// stabilizes the result to ~1e-7 relative.
inline double chi_spectral(const SequenceSpec& seq, double t, double tau_c) {
  seq.validate();
  if (t < 0.0 || !(tau_c > 0.0)) {
    throw std::invalid_argument("chi_spectral: require t >= 0 and tau_c > 0");
  }
  if (t == 0.0) return 0.0;
  const auto segs = eta_segments(seq, t);
  const auto& gl = detail::gauss_legendre_16();

  auto integrand = [&](double w) {
    const double s_lorentz = tau_c / (kPi * (1.0 + w * w * tau_c * tau_c));
    return detail::filter_sq(seq, segs, t, w) * s_lorentz;
  };
  const double panel = std::min(2.0 * kPi / t, 1.0 / tau_c);
  auto integrate_to = [&](double w_from, double w_to) {
    double acc = 0.0;
    const auto n_panels = static_cast<std::size_t>(std::ceil((w_to - w_from) / panel));
    const double h = (w_to - w_from) / static_cast<double>(n_panels);
    for (std::size_t i = 0; i < n_panels; ++i) {
      const double c = w_from + (static_cast<double>(i) + 0.5) * h;
      for (int j = 0; j < 8; ++j) {
        acc += 0.5 * h * gl.weight[j] *
               (integrand(c - 0.5 * h * gl.node[j]) + integrand(c + 0.5 * h * gl.node[j]));
      }
    }
    return acc;
  };

  // mean of the oscillatory numerator: 2 for DEER (2 - 2cos), 6 for SE; for
  // XY8 no closed mean is used, the doubling loop absorbs the tail.
  double mean_coef = 0.0;
  if (seq.kind == SequenceKind::RamseyDeer) mean_coef = 2.0;
  if (seq.kind == SequenceKind::SpinEcho) mean_coef = 6.0;

  double w_cut = std::max(16.0 / tau_c, 16.0 * kPi / t);
  double partial = integrate_to(0.0, w_cut);
  double est = 2.0 * (partial + mean_coef * detail::lorentz_over_w2_tail(w_cut, tau_c));
  for (int iter = 0; iter < 24; ++iter) {
    const double w_next = 2.0 * w_cut;
    partial += integrate_to(w_cut, w_next);
    w_cut = w_next;
    const double refined = 2.0 * (partial + mean_coef * detail::lorentz_over_w2_tail(w_cut, tau_c));
    const double delta = std::abs(refined - est);
    est = refined;
    if (delta <= 1e-7 * std::abs(est) + 1e-300) return est;
  }
  throw numeric_error("chi_spectral: frequency-grid truncation error above 1e-6; achieved " +
                      std::to_string(est));
}

// Leading short/long-time limits of the closed forms.  Validity
// (t < tau_c/10 resp. t > 10 tau_c) is the caller's lookout; values are
// returned unconditionally.
inline double chi_asymptotic(const SequenceSpec& seq, double t, double tau_c, bool short_time) {
  seq.validate();
  if (t < 0.0 || !(tau_c > 0.0)) {
    throw std::invalid_argument("chi_asymptotic: require t >= 0 and tau_c > 0");
  }
  switch (seq.kind) {
    case SequenceKind::RamseyDeer:
      return short_time ? t * t - t * t * t / (3.0 * tau_c) : 2.0 * tau_c * t - 2.0 * tau_c * tau_c;
    case SequenceKind::SpinEcho:
      return short_time ? t * t * t / (6.0 * tau_c) : 2.0 * tau_c * t - 6.0 * tau_c * tau_c;
    default:
      // single asymptote (tau_p << tau_c); see chi_closed_form for the 1/24
      return seq.tau_p_us * seq.tau_p_us * t / (24.0 * tau_c);
  }
}

inline ChiEvaluation evaluate_chi(const SequenceSpec& seq, const std::vector<double>& times,
                                  double tau_c, ChiMethod method) {
  ChiEvaluation out;
  out.method = method;
  out.times_us = times;
  out.chi_us2.reserve(times.size());
  for (double t : times) {
    switch (method) {
      case ChiMethod::ClosedForm: out.chi_us2.push_back(chi_closed_form(seq, t, tau_c)); break;
      case ChiMethod::Quadrature: out.chi_us2.push_back(chi_quadrature(seq, t, tau_c)); break;
      case ChiMethod::Spectral: out.chi_us2.push_back(chi_spectral(seq, t, tau_c)); break;
      case ChiMethod::AsymptoticShort: out.chi_us2.push_back(chi_asymptotic(seq, t, tau_c, true)); break;
      default: out.chi_us2.push_back(chi_asymptotic(seq, t, tau_c, false)); break;
    }
  }
  return out;
}

}  // namespace spinbath
