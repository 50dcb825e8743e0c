#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinbath/errors.hpp"
#include "spinbath/rng.hpp"

namespace spinbath {

// Classical longitudinal bath-spin trajectories s_z(t).  All generators use
// the s in [-1/2, +1/2] convention (so 4<s_z s_z> = 1) and are deterministic
// functions of (parameters, seed).

enum class NoiseKind : std::uint8_t { GaussMarkov, Telegraph, DrivenSpin, Static };

struct DriveSpec {
  double rabi_rad_per_us = 0.0;       // Omega
  double linewidth_rad_per_us = 0.0;  // delta-omega, Lorentzian FWHM of the drive
  double sample_step_us = 0.0;        // integrator step

  void validate() const {
    if (!(rabi_rad_per_us > 0.0)) throw std::invalid_argument("DriveSpec: rabi frequency must be > 0");
    if (linewidth_rad_per_us < 0.0) throw std::invalid_argument("DriveSpec: linewidth must be >= 0");
    if (!(sample_step_us > 0.0)) throw std::invalid_argument("DriveSpec: sample step must be > 0");
    if (linewidth_rad_per_us * sample_step_us > 1.0) {
      throw std::invalid_argument(
          "DriveSpec: phase-jump std sqrt(linewidth*dt) exceeds 1 rad; "
          "reduce sample_step_us (small-jump regime required)");
    }
  }
};

struct NoiseModelSpec {
  NoiseKind kind = NoiseKind::GaussMarkov;
  double tau_c_us = 0.0;  // required for GaussMarkov/Telegraph; ignored for Static
  std::optional<DriveSpec> drive;  // required for DrivenSpin

  void validate() const {
    switch (kind) {
      case NoiseKind::GaussMarkov:
      case NoiseKind::Telegraph:
        if (!(tau_c_us > 0.0)) throw std::invalid_argument("NoiseModelSpec: tau_c_us must be > 0");
        break;
      case NoiseKind::DrivenSpin:
        if (!drive) throw std::invalid_argument("NoiseModelSpec: DrivenSpin requires a drive block");
        drive->validate();
        break;
      case NoiseKind::Static:
        break;  // infinite-correlation limit, carries no tau_c
    }
  }
};

struct NoiseTrajectory {
  double dt_us = 0.0;
  std::vector<double> values;  // s_z samples at t = k*dt, covering the requested duration
};

// Random-walk drive phase theta(t); kept distinct from NoiseTrajectory because
// values are angles, not spin projections.
struct PhasePath {
  double dt_us = 0.0;
  std::vector<double> theta;
};

struct AutocorrelationEstimate {
  std::vector<double> lags_us;
  std::vector<double> xi;      // normalized so xi(0) = 1 in expectation
  std::vector<double> stderr_; // jackknife over paths
};

namespace detail {

inline void check_sampled_process_args(double tau_c, double dt, double duration) {
  if (!(tau_c > 0.0) || !(dt > 0.0) || !(duration > 0.0)) {
    throw std::invalid_argument("noise generator: tau_c, dt and duration must all be > 0");
  }
  if (dt > tau_c / 10.0) {
    throw std::invalid_argument("noise generator: dt = " + std::to_string(dt) +
                                " undersamples tau_c = " + std::to_string(tau_c) +
                                " (require dt <= tau_c/10)");
  }
}

inline std::size_t grid_size(double duration, double dt) {
  // len*dt must cover the duration; nodes at t = 0..n*dt.
  const auto steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
  return steps + 1;
}

}  // namespace detail

// Stationary random telegraph path on {-1/2, +1/2} with flip rate
// gamma = 1/(2 tau_c).  A two-state symmetric jump process decorrelates at
// twice its flip rate, exp(-2 gamma |t|), which is exp(-|t|/tau_c) with this
// choice; that factor 2 is the standard RTN bookkeeping.
inline NoiseTrajectory sample_telegraph(double tau_c, double dt, double duration,
                                        std::uint64_t seed) {
  detail::check_sampled_process_args(tau_c, dt, duration);
  Rng rng(seed);
  const std::size_t n = detail::grid_size(duration, dt);
  NoiseTrajectory out;
  out.dt_us = dt;
  out.values.resize(n);
  double s = (rng.next_u64() & 1ull) ? 0.5 : -0.5;  // infinite temperature start
  const double mean_wait = 2.0 * tau_c;
  double next_flip = rng.exponential(mean_wait);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    while (next_flip <= t) {
      s = -s;
      next_flip += rng.exponential(mean_wait);
    }
    out.values[k] = s;
  }
  return out;
}

// Stationary Gauss-Markov (Ornstein-Uhlenbeck) path with mean 0, variance 1/4
// and normalized autocorrelation exp(-|t|/tau_c), generated by the exact
// discrete update x_{k+1} = x_k e^{-dt/tau_c} + xi_k (1/2) sqrt(1 - e^{-2dt/tau_c}).
// The exact update keeps the stationary variance dt-independent.
inline NoiseTrajectory sample_gauss_markov(double tau_c, double dt, double duration,
                                           std::uint64_t seed) {
  detail::check_sampled_process_args(tau_c, dt, duration);
  Rng rng(seed);
  const std::size_t n = detail::grid_size(duration, dt);
  NoiseTrajectory out;
  out.dt_us = dt;
  out.values.resize(n);
  const double a = std::exp(-dt / tau_c);
  const double b = 0.5 * std::sqrt(1.0 - a * a);
  double x = 0.5 * rng.gaussian();  // stationary marginal N(0, 1/4)
  out.values[0] = x;
  for (std::size_t k = 1; k < n; ++k) {
    x = a * x + b * rng.gaussian();
    out.values[k] = x;
  }
  return out;
}

// Drive phase theta(t): discrete random walk with per-step Gaussian increments
// of std sqrt(linewidth * dt), giving a Lorentzian drive line of FWHM
// `linewidth` (statistical property, checked by tests rather than per path).
inline PhasePath sample_drive_phase(const DriveSpec& drive, double duration,
                                    std::uint64_t seed) {
  drive.validate();  // includes the sigma <= 1 rad small-jump guard
  if (!(duration > 0.0)) throw std::invalid_argument("sample_drive_phase: duration must be > 0");
  Rng rng(seed);
  const double dt = drive.sample_step_us;
  const double sigma = std::sqrt(drive.linewidth_rad_per_us * dt);
  const std::size_t n = detail::grid_size(duration, dt);
  PhasePath out;
  out.dt_us = dt;
  out.theta.resize(n);
  double th = 0.0;
  out.theta[0] = th;
  for (std::size_t k = 1; k < n; ++k) {
    th += sigma * rng.gaussian();
    out.theta[k] = th;
  }
  return out;
}

namespace detail {

// Rotate Bloch vector v about the unit axis (cos th, sin th, 0) by `angle`.
// Exact axis-angle (Rodrigues) step: norm conservation by construction.
inline void rotate_inplane(double v[3], double th, double angle) {
  const double ax = std::cos(th), ay = std::sin(th);
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = ax * v[0] + ay * v[1];
  // axis x v = (ay*vz, -ax*vz, ax*vy - ay*vx)
  const double cx = ay * v[2];
  const double cy = -ax * v[2];
  const double cz = ax * v[1] - ay * v[0];
  v[0] = v[0] * c + cx * s + ax * dot * (1.0 - c);
  v[1] = v[1] * c + cy * s + ay * dot * (1.0 - c);
  v[2] = v[2] * c + cz * s;
}

}  // namespace detail

// Classical driven spin: length-1/2 Bloch vector starting at s_z = +-1/2,
// rotated each step about the in-plane axis (cos theta_k, sin theta_k, 0) by
// Omega*dt while theta random-walks.  Returns the s_z component.  In the
// strong-noise regime (linewidth >> Omega) the ensemble autocorrelation decays
// with tau_c ~ linewidth/Omega^2 (motional narrowing).
inline NoiseTrajectory simulate_driven_spin(const DriveSpec& drive, double duration,
                                            std::uint64_t seed) {
  drive.validate();
  if (!(duration > 0.0)) throw std::invalid_argument("simulate_driven_spin: duration must be > 0");
  const double dt = drive.sample_step_us;
  const double omega = drive.rabi_rad_per_us;
  const double lw = drive.linewidth_rad_per_us;
  const double fastest = std::max(omega, lw);
  if (dt > 0.1 / fastest) {
    throw std::invalid_argument(
        "simulate_driven_spin: sample_step_us = " + std::to_string(dt) +
        " does not resolve the dynamics (require dt <= 0.1*min(1/Omega, 1/linewidth))");
  }
  Rng rng(seed);
  const std::size_t n = detail::grid_size(duration, dt);
  NoiseTrajectory out;
  out.dt_us = dt;
  out.values.resize(n);
  const double sigma = std::sqrt(lw * dt);
  double th = 0.0;
  double v[3] = {0.0, 0.0, (rng.next_u64() & 1ull) ? 0.5 : -0.5};
  out.values[0] = v[2];
  const double angle = omega * dt;
  for (std::size_t k = 1; k < n; ++k) {
    th += sigma * rng.gaussian();
    detail::rotate_inplane(v, th, angle);
    out.values[k] = v[2];
  }
  return out;
}

// Pooled unbiased estimate of xi(l) = 4 <s_z(t0) s_z(t0+l)> over paths and
// time origins, with jackknife standard errors over paths.  `lag_stride`
// subsamples the lag grid (>= 1); estimates are unchanged, just fewer lags.
inline AutocorrelationEstimate autocorrelation(const std::vector<NoiseTrajectory>& paths,
                                               double max_lag, std::size_t lag_stride = 1) {
  if (paths.empty()) throw std::invalid_argument("autocorrelation: empty path set");
  if (lag_stride == 0) lag_stride = 1;
  const double dt = paths.front().dt_us;
  std::size_t min_len = paths.front().values.size();
  for (const auto& p : paths) {
    if (std::abs(p.dt_us - dt) > 1e-12 * std::max(1.0, dt)) {
      throw std::invalid_argument("autocorrelation: paths disagree on dt");
    }
    min_len = std::min(min_len, p.values.size());
  }
  const double duration = static_cast<double>(min_len - 1) * dt;
  if (!(max_lag > 0.0) || max_lag > 0.5 * duration + 1e-12) {
    throw std::invalid_argument("autocorrelation: require 0 < max_lag <= duration/2");
  }
  const auto max_lag_steps = static_cast<std::size_t>(std::floor(max_lag / dt + 1e-9));
  std::vector<std::size_t> lag_steps;
  for (std::size_t l = 0; l <= max_lag_steps; l += lag_stride) lag_steps.push_back(l);

  const std::size_t n_paths = paths.size();
  const std::size_t n_lags = lag_steps.size();
  // Per-path raw sums; origins counted per path so jackknife stays unbiased.
  std::vector<double> path_sum(n_paths * n_lags, 0.0);
  std::vector<double> counts(n_lags, 0.0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    const auto& v = paths[p].values;
    for (std::size_t li = 0; li < n_lags; ++li) {
      const std::size_t l = lag_steps[li];
      double acc = 0.0;
      for (std::size_t k = 0; k + l < min_len; ++k) acc += v[k] * v[k + l];
      path_sum[p * n_lags + li] = 4.0 * acc;
      if (p == 0) counts[li] = static_cast<double>(min_len - l);
    }
  }

  AutocorrelationEstimate est;
  est.lags_us.resize(n_lags);
  est.xi.resize(n_lags);
  est.stderr_.assign(n_lags, 0.0);
  for (std::size_t li = 0; li < n_lags; ++li) {
    est.lags_us[li] = static_cast<double>(lag_steps[li]) * dt;
    double total = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) total += path_sum[p * n_lags + li];
    est.xi[li] = total / (counts[li] * static_cast<double>(n_paths));
    if (n_paths > 1) {
      // leave-one-path-out means
      double ss = 0.0;
      const double np = static_cast<double>(n_paths);
      for (std::size_t p = 0; p < n_paths; ++p) {
        const double loo = (total - path_sum[p * n_lags + li]) / (counts[li] * (np - 1.0));
        const double d = loo - est.xi[li];
        ss += d * d;
      }
      est.stderr_[li] = std::sqrt((np - 1.0) / np * ss);
    }
  }
  return est;
}

// Weighted least-squares fit of A exp(-t/tau_c) to xi(t) with the amplitude
// profiled out in closed form at each tau_c; returns (tau_c, 1-sigma).
// For the bath models A ~ 1 and this reduces to the plain exponential fit,
// but the driven spin isotropizes over its Bloch sphere (stationary
// 4<s_z^2> = 1/3), so the amplitude must be free for tau_c to be unbiased.
// Grid scan over log tau_c plus parabolic refinement; the (A, tau_c)
// information matrix gives the quoted uncertainty.
inline std::pair<double, double> estimate_tau_c_from_xi(const AutocorrelationEstimate& est) {
  std::vector<double> t, y, w;
  double min_xi = 1e300;
  for (std::size_t i = 0; i < est.xi.size(); ++i) {
    min_xi = std::min(min_xi, est.xi[i]);
    if (est.xi[i] > 0.05) {
      t.push_back(est.lags_us[i]);
      y.push_back(est.xi[i]);
      const double s = est.stderr_[i];
      w.push_back(s > 0.0 ? 1.0 / (s * s) : -1.0);  // -1 marks "no error available"
    }
  }
  if (t.size() < 5) {
    throw std::invalid_argument("estimate_tau_c_from_xi: need >= 5 lags with xi > 0.05");
  }
  if (min_xi > 0.7) {
    throw numeric_error(
        "estimate_tau_c_from_xi: xi never drops below 0.7 within max_lag; tau_c unresolved "
        "(increase duration or max_lag)");
  }
  // If any usable point lacks an error bar, fall back to unweighted.
  bool all_weighted = true;
  for (double wi : w) all_weighted = all_weighted && wi > 0.0;
  if (!all_weighted) std::fill(w.begin(), w.end(), 1.0);

  const double t_max = *std::max_element(t.begin(), t.end());
  const double t_min_pos = *std::min_element(t.begin(), t.end());
  const double lo = std::max(t_min_pos / 50.0, 1e-9), hi = t_max * 50.0;
  auto amplitude_at = [&](double tau) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double m = std::exp(-t[i] / tau);
      num += w[i] * y[i] * m;
      den += w[i] * m * m;
    }
    return den > 0.0 ? num / den : 0.0;
  };
  auto sse = [&](double tau) {
    const double a = amplitude_at(tau);
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double r = y[i] - a * std::exp(-t[i] / tau);
      acc += w[i] * r * r;
    }
    return acc;
  };
  const int n_grid = 400;
  double best_tau = lo, best_sse = 1e300;
  for (int i = 0; i <= n_grid; ++i) {
    const double tau = lo * std::pow(hi / lo, static_cast<double>(i) / n_grid);
    const double s = sse(tau);
    if (s < best_sse) {
      best_sse = s;
      best_tau = tau;
    }
  }
  // parabolic refinement in log tau
  double step = std::log(hi / lo) / n_grid;
  double lt = std::log(best_tau);
  for (int iter = 0; iter < 60; ++iter) {
    const double s0 = sse(std::exp(lt - step)), s1 = sse(std::exp(lt)), s2 = sse(std::exp(lt + step));
    const double denom = s0 - 2.0 * s1 + s2;
    if (denom > 0.0) {
      double shift = 0.5 * (s0 - s2) / denom;
      shift = std::clamp(shift, -1.0, 1.0);
      lt += shift * step;
    }
    step *= 0.6;
    if (step < 1e-12) break;
  }
  const double tau_hat = std::exp(lt);
  // Gauss-Newton variance with the amplitude marginalized:
  // var(tau) = (J_tt - J_ta^2 / J_aa)^{-1} for model a*exp(-t/tau).
  const double a_hat = amplitude_at(tau_hat);
  double j_tt = 0.0, j_ta = 0.0, j_aa = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = std::exp(-t[i] / tau_hat);
    const double dt_deriv = a_hat * m * t[i] / (tau_hat * tau_hat);
    j_tt += w[i] * dt_deriv * dt_deriv;
    j_ta += w[i] * dt_deriv * m;
    j_aa += w[i] * m * m;
  }
  const double curv = j_aa > 0.0 ? j_tt - j_ta * j_ta / j_aa : j_tt;
  const double sigma = curv > 0.0 ? 1.0 / std::sqrt(curv) : 0.0;
  return {tau_hat, sigma};
}

}  // namespace spinbath
