#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinbath/errors.hpp"
#include "spinbath/sequence.hpp"

namespace spinbath {

// Weighted nonlinear least squares for the stretched-exponential family
// C(t) = exp(-A chi(t; tau_c)^{D/2alpha}), fitted either to C directly
// (Linear) or to -log C (NegLog).  Levenberg-Marquardt over (log A, log tau_c)
// with a deterministic multi-start over a log-spaced tau_c grid; for each
// start the amplitude is seeded by its closed-form NegLog-space solution.

enum class FitSpace : std::uint8_t { Linear, NegLog };

inline const char* fit_space_name(FitSpace s) { return s == FitSpace::Linear ? "linear" : "neglog"; }

struct FitResult {
  double amplitude = 0.0;
  double amplitude_err = 0.0;
  double tau_c_us = 0.0;
  double tau_c_err_us = 0.0;
  int dimension = 0;
  double alpha = 0.0;
  double chi2_reduced = 0.0;
  FitSpace fit_space = FitSpace::Linear;
  std::size_t n_points = 0;
  std::size_t n_params = 2;
  bool converged = false;
  bool tau_c_at_bound = false;  // "unresolved": optimum pinned at the search-range edge
  std::string message;
};

namespace detail {

struct FitBlock {
  SequenceSpec seq;
  std::vector<double> t, y, sigma;  // sigma in curve units; empty -> unweighted
};

// tau_c search range (us) and multi-start grid density
constexpr double kTauCLo = 0.1;
constexpr double kTauCHi = 100.0;
constexpr int kStartsPerDecade = 8;

inline double chi_of(const SequenceSpec& seq, double t, double tau_c) {
  return chi_quadrature(seq, t, tau_c);
}

struct FitWork {
  // flattened usable observations
  std::vector<const SequenceSpec*> seq;
  std::vector<double> t, y, w;     // w = 1/sigma (target space)
  std::vector<double> neglog_y;    // valid where usable_neglog
  std::vector<char> usable_neglog;
  FitSpace space = FitSpace::Linear;
  double power = 0.0;  // D/2alpha
};

inline FitWork prepare(const std::vector<FitBlock>& blocks, int dimension, double alpha,
                       FitSpace space) {
  FitWork work;
  work.space = space;
  work.power = static_cast<double>(dimension) / (2.0 * alpha);
  for (const auto& b : blocks) {
    if (b.t.size() != b.y.size() || (!b.sigma.empty() && b.sigma.size() != b.t.size())) {
      throw std::invalid_argument("fit: block size mismatch");
    }
    for (std::size_t i = 0; i < b.t.size(); ++i) {
      const double t = b.t[i], y = b.y[i];
      const double sg = b.sigma.empty() ? 0.0 : b.sigma[i];
      if (!(t > 0.0) || !(y > 0.0)) continue;  // unusable in either space
      if (space == FitSpace::NegLog) {
        if (!(y < 1.0)) continue;                    // -log undefined territory
        if (sg > 0.0 && y < 3.0 * sg) continue;      // noise floor
        work.w.push_back(sg > 0.0 ? y / sg : 1.0);   // sigma_{-log C} = sigma_C / C
        work.neglog_y.push_back(-std::log(y));
        work.usable_neglog.push_back(1);
      } else {
        work.w.push_back(sg > 0.0 ? 1.0 / sg : 1.0);
        const bool nl = y < 1.0;
        work.neglog_y.push_back(nl ? -std::log(y) : 0.0);
        work.usable_neglog.push_back(nl ? 1 : 0);
      }
      work.seq.push_back(&b.seq);
      work.t.push_back(t);
      work.y.push_back(y);
    }
  }
  if (work.t.size() < 6) {
    throw std::invalid_argument("fit: need at least 6 usable points, have " +
                                std::to_string(work.t.size()));
  }
  return work;
}

// Conditional closed-form amplitude: -log C is linear in A at fixed tau_c.
inline double amplitude_for_tau(const FitWork& work, double tau_c) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < work.t.size(); ++i) {
    if (!work.usable_neglog[i]) continue;
    const double x = std::pow(chi_of(*work.seq[i], work.t[i], tau_c), work.power);
    const double wt = work.w[i] * work.w[i];
    num += wt * x * work.neglog_y[i];
    den += wt * x * x;
  }
  if (!(den > 0.0)) return 1.0;
  return std::max(num / den, 1e-12);
}

inline void residuals(const FitWork& work, double amp, double tau_c, std::vector<double>& r) {
  r.resize(work.t.size());
  for (std::size_t i = 0; i < work.t.size(); ++i) {
    const double x = std::pow(chi_of(*work.seq[i], work.t[i], tau_c), work.power);
    if (work.space == FitSpace::NegLog) {
      r[i] = work.w[i] * (amp * x - work.neglog_y[i]);
    } else {
      r[i] = work.w[i] * (std::exp(-amp * x) - work.y[i]);
    }
  }
}

inline double sum_sq(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

struct LmOutcome {
  double amp = 1.0, tau_c = 1.0, ssr = std::numeric_limits<double>::infinity();
  double cov[3] = {0.0, 0.0, 0.0};  // var(logA), cov, var(logTau)
  bool converged = false;
};

inline LmOutcome levenberg_marquardt(const FitWork& work, double amp0, double tau0) {
  LmOutcome out;
  double u = std::log(amp0), v = std::log(tau0);
  const double v_lo = std::log(0.02), v_hi = std::log(500.0);
  std::vector<double> r, r_trial, ra, rb;
  residuals(work, std::exp(u), std::exp(v), r);
  double ssr = sum_sq(r);
  double lambda = 1e-3;
  double jtj[3] = {0, 0, 0};
  const double h = 1e-6;
  for (int iter = 0; iter < 200; ++iter) {
    // numeric Jacobian in (u, v)
    residuals(work, std::exp(u + h), std::exp(v), ra);
    residuals(work, std::exp(u - h), std::exp(v), rb);
    std::vector<double> ju(r.size()), jv(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) ju[i] = (ra[i] - rb[i]) / (2.0 * h);
    residuals(work, std::exp(u), std::exp(v + h), ra);
    residuals(work, std::exp(u), std::exp(v - h), rb);
    for (std::size_t i = 0; i < r.size(); ++i) jv[i] = (ra[i] - rb[i]) / (2.0 * h);
    double juu = 0, juv = 0, jvv = 0, gu = 0, gv = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      juu += ju[i] * ju[i];
      juv += ju[i] * jv[i];
      jvv += jv[i] * jv[i];
      gu += ju[i] * r[i];
      gv += jv[i] * r[i];
    }
    jtj[0] = juu;
    jtj[1] = juv;
    jtj[2] = jvv;
    bool stepped = false;
    bool singular = false;
    for (int tries = 0; tries < 12; ++tries) {
      const double a = juu * (1.0 + lambda), d = jvv * (1.0 + lambda);
      const double det = a * d - juv * juv;
      if (!(std::abs(det) > 1e-300)) {
        singular = true;
        break;
      }
      const double du = (-gu * d + gv * juv) / det;
      const double dv = (-gv * a + gu * juv) / det;
      const double u_t = u + du;
      const double v_t = std::clamp(v + dv, v_lo, v_hi);
      residuals(work, std::exp(u_t), std::exp(v_t), r_trial);
      const double ssr_t = sum_sq(r_trial);
      if (ssr_t < ssr) {
        const double step = std::abs(u_t - u) + std::abs(v_t - v);
        u = u_t;
        v = v_t;
        r.swap(r_trial);
        const double improved = ssr - ssr_t;
        ssr = ssr_t;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (step < 1e-10 || improved < 1e-15 * (1.0 + ssr)) {
          out.converged = true;
        }
        break;
      }
      lambda *= 5.0;
    }
    if (out.converged || !stepped) {
      // exhausting the damping ladder with no downhill trial means the local
      // model has no improving step at float resolution; only a singular
      // normal matrix is a genuine stall
      if (!stepped) out.converged = out.converged || !singular;
      break;
    }
  }
  out.amp = std::exp(u);
  out.tau_c = std::exp(v);
  out.ssr = ssr;
  // covariance of (logA, logTau) from the final normal matrix
  const double det = jtj[0] * jtj[2] - jtj[1] * jtj[1];
  if (std::abs(det) > 1e-300) {
    out.cov[0] = jtj[2] / det;
    out.cov[1] = -jtj[1] / det;
    out.cov[2] = jtj[0] / det;
  }
  return out;
}

inline FitResult fit_blocks(const std::vector<FitBlock>& blocks, int dimension, double alpha,
                            FitSpace space) {
  if (dimension < 1 || !(alpha > 0.0) || !(static_cast<double>(dimension) < 2.0 * alpha)) {
    throw std::invalid_argument("fit: require D >= 1 and D < 2*alpha");
  }
  const FitWork work = prepare(blocks, dimension, alpha, space);

  // deterministic multi-start over the tau_c grid, amplitude profiled out
  const double decades = std::log10(kTauCHi / kTauCLo);
  const int n_starts = static_cast<int>(std::round(decades * kStartsPerDecade)) + 1;
  std::vector<std::pair<double, double>> ranked;  // (objective, tau_c)
  std::vector<double> r;
  for (int s = 0; s < n_starts; ++s) {
    const double tau = kTauCLo * std::pow(10.0, decades * s / (n_starts - 1));
    const double amp = amplitude_for_tau(work, tau);
    residuals(work, amp, tau, r);
    ranked.emplace_back(sum_sq(r), tau);
  }
  std::sort(ranked.begin(), ranked.end());

  LmOutcome best;
  const int n_refine = std::min<std::size_t>(3, ranked.size());
  for (int i = 0; i < n_refine; ++i) {
    const double tau = ranked[i].second;
    const auto candidate = levenberg_marquardt(work, amplitude_for_tau(work, tau), tau);
    if (candidate.ssr < best.ssr) best = candidate;
  }
  if (!std::isfinite(best.ssr)) {
    throw numeric_error("fit: optimizer failed to produce a finite objective");
  }

  FitResult res;
  res.amplitude = best.amp;
  res.tau_c_us = best.tau_c;
  res.dimension = dimension;
  res.alpha = alpha;
  res.fit_space = space;
  res.n_points = work.t.size();
  res.n_params = 2;
  const auto dof = static_cast<double>(work.t.size() > 2 ? work.t.size() - 2 : 1);
  res.chi2_reduced = best.ssr / dof;
  res.converged = best.converged;
  res.amplitude_err = best.amp * std::sqrt(std::max(0.0, best.cov[0]));
  res.tau_c_err_us = best.tau_c * std::sqrt(std::max(0.0, best.cov[2]));
  if (best.tau_c <= kTauCLo * 1.05 || best.tau_c >= kTauCHi / 1.05) {
    res.tau_c_at_bound = true;
    res.message = "tau_c unresolved: optimum at search-range edge";
  } else if (!best.converged) {
    res.message = "optimizer stopped without meeting step tolerance; best attempt reported";
  }
  return res;
}

}  // namespace detail

inline FitResult fit_curve(const std::vector<double>& times, const std::vector<double>& values,
                           const std::vector<double>& sigma, const SequenceSpec& seq,
                           int dimension, double alpha, FitSpace space) {
  detail::FitBlock b;
  b.seq = seq;
  b.t = times;
  b.y = values;
  b.sigma = sigma;
  return detail::fit_blocks({b}, dimension, alpha, space);
}

inline FitResult fit_joint(const std::vector<double>& deer_t, const std::vector<double>& deer_y,
                           const std::vector<double>& deer_sigma,
                           const std::vector<double>& echo_t, const std::vector<double>& echo_y,
                           const std::vector<double>& echo_sigma, int dimension, double alpha,
                           FitSpace space) {
  detail::FitBlock deer, echo;
  deer.seq.kind = SequenceKind::RamseyDeer;
  deer.t = deer_t;
  deer.y = deer_y;
  deer.sigma = deer_sigma;
  echo.seq.kind = SequenceKind::SpinEcho;
  echo.t = echo_t;
  echo.y = echo_y;
  echo.sigma = echo_sigma;
  return detail::fit_blocks({deer, echo}, dimension, alpha, space);
}

}  // namespace spinbath
