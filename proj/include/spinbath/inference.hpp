#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinbath/curve.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/fit.hpp"
#include "spinbath/geometry.hpp"
#include "spinbath/rng.hpp"
#include "spinbath/sequence.hpp"

namespace spinbath {

// Inversion of coherence curves: contrast normalization, profile fits,
// dimensionality classification, correlation-time extraction with
// normalization-uncertainty resampling, and density estimation against a
// simulated curve family.

struct SampledSeries {
  std::vector<double> times_us;
  std::vector<double> values;
  std::vector<double> stderr_;
};

struct ExperimentalDataset {
  CoherenceCurve curve;
  SequenceSpec sequence;
  std::optional<double> raw_t0;   // raw contrast normalization value, if known
  double min_time_cut_us = 0.5;   // early-time exclusion applied before fitting

  void validate() const {
    curve.require_consistent();
    sequence.validate();
    if (min_time_cut_us < 0.0) {
      throw std::invalid_argument("ExperimentalDataset: min_time_cut_us must be >= 0");
    }
  }
};

enum class NormalizationPolicy : std::uint8_t { PlusMinus10pct, EarlyTimeInterpolation };

struct DimensionalityReport {
  std::vector<int> candidates;
  // chi2[candidate][space]: mean reduced chi^2 over datasets; space 0 = Linear, 1 = NegLog
  std::vector<std::array<double, 2>> chi2;
  std::optional<int> verdict;  // empty = ambiguous

  std::string verdict_string() const {
    return verdict ? "D=" + std::to_string(*verdict) : std::string("ambiguous");
  }
};

struct TauCEstimate {
  double mean_us = 0.0;
  double std_us = 0.0;
  std::size_t n_resamples = 0;
  NormalizationPolicy policy = NormalizationPolicy::PlusMinus10pct;
  std::size_t n_failed = 0;
};

struct DensityEstimate {
  double areal_ppm_nm = 0.0;
  double areal_per_nm2 = 0.0;
  double uncertainty_ppm_nm = 0.0;
  double late_time_cut_us = 0.0;
  double chi2_reduced_at_min = 0.0;
};

// C_raw = S0 - S1 normalized by the t=0 contrast value; uncertainties from
// per-point errors and the t0 uncertainty combined in quadrature.
inline CoherenceCurve normalize_contrast(const SampledSeries& s0, const SampledSeries& s1,
                                         double t0_value, double t0_sigma = 0.0) {
  if (!(t0_value > 0.0)) throw std::invalid_argument("normalize_contrast: t0_value must be > 0");
  if (s0.times_us.size() != s1.times_us.size() || s0.values.size() != s0.times_us.size() ||
      s1.values.size() != s1.times_us.size()) {
    throw std::invalid_argument("normalize_contrast: series size mismatch");
  }
  for (std::size_t i = 0; i < s0.times_us.size(); ++i) {
    if (std::abs(s0.times_us[i] - s1.times_us[i]) > 1e-9 * std::max(1.0, s0.times_us[i])) {
      throw std::invalid_argument("normalize_contrast: time grids are not aligned");
    }
  }
  CoherenceCurve out;
  out.times_us = s0.times_us;
  out.coherence.resize(s0.times_us.size());
  out.stderr_.resize(s0.times_us.size());
  const bool have_err = !s0.stderr_.empty() || !s1.stderr_.empty();
  for (std::size_t i = 0; i < s0.times_us.size(); ++i) {
    const double raw = s0.values[i] - s1.values[i];
    const double c = raw / t0_value;
    out.coherence[i] = c;
    double var = 0.0;
    if (have_err) {
      const double e0 = i < s0.stderr_.size() ? s0.stderr_[i] : 0.0;
      const double e1 = i < s1.stderr_.size() ? s1.stderr_[i] : 0.0;
      var += (e0 * e0 + e1 * e1) / (t0_value * t0_value);
    }
    if (t0_sigma > 0.0) var += c * c * (t0_sigma / t0_value) * (t0_sigma / t0_value);
    out.stderr_[i] = std::sqrt(var);
  }
  out.require_consistent();
  return out;
}

namespace detail {

inline FitBlock block_from(const ExperimentalDataset& data) {
  data.validate();
  FitBlock b;
  b.seq = data.sequence;
  for (std::size_t i = 0; i < data.curve.size(); ++i) {
    if (data.curve.times_us[i] <= data.min_time_cut_us) continue;
    b.t.push_back(data.curve.times_us[i]);
    b.y.push_back(data.curve.coherence[i]);
    if (!data.curve.stderr_.empty()) b.sigma.push_back(data.curve.stderr_[i]);
  }
  return b;
}

}  // namespace detail

inline FitResult fit_profile(const ExperimentalDataset& data, int dimension, double alpha,
                             FitSpace space) {
  return detail::fit_blocks({detail::block_from(data)}, dimension, alpha, space);
}

inline FitResult joint_fit(const ExperimentalDataset& deer, const ExperimentalDataset& echo,
                           int dimension, double alpha, FitSpace space) {
  return detail::fit_blocks({detail::block_from(deer), detail::block_from(echo)}, dimension,
                            alpha, space);
}

// Fits every dataset under each candidate dimension in both fit spaces and
// issues a verdict only when one candidate wins in both spaces; otherwise the
// report says "ambiguous" and carries the full table.
inline DimensionalityReport classify_dimension(const std::vector<ExperimentalDataset>& datasets,
                                               const std::vector<int>& candidates, double alpha) {
  if (datasets.empty()) throw std::invalid_argument("classify_dimension: no datasets");
  if (candidates.size() < 2) {
    throw std::invalid_argument("classify_dimension: need at least two candidate dimensions");
  }
  DimensionalityReport report;
  report.candidates = candidates;
  report.chi2.resize(candidates.size(), {0.0, 0.0});
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    for (int si = 0; si < 2; ++si) {
      const auto space = si == 0 ? FitSpace::Linear : FitSpace::NegLog;
      double acc = 0.0;
      for (const auto& data : datasets) {
        acc += fit_profile(data, candidates[ci], alpha, space).chi2_reduced;
      }
      report.chi2[ci][si] = acc / static_cast<double>(datasets.size());
    }
  }
  // winner must have strictly lower mean chi2 in every space
  std::size_t best = 0;
  for (std::size_t ci = 1; ci < candidates.size(); ++ci) {
    if (report.chi2[ci][0] < report.chi2[best][0]) best = ci;
  }
  bool wins_all = true;
  for (int si = 0; si < 2; ++si) {
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (ci == best) continue;
      if (!(report.chi2[best][si] < report.chi2[ci][si])) wins_all = false;
    }
  }
  if (wins_all) report.verdict = candidates[best];
  return report;
}

// Normalization-uncertainty propagation: re-draw the t=0 normalization per
// policy, re-scale both curves, joint-fit in both spaces, and pool the tau_c
// draws; mean/std over the pooled distribution.
inline TauCEstimate extract_tau_c(const ExperimentalDataset& deer, const ExperimentalDataset& echo,
                                  NormalizationPolicy policy, std::size_t n_resamples,
                                  int dimension, double alpha, std::uint64_t seed = 20260822,
                                  double resample_halfwidth = 0.10) {
  if (n_resamples < 50) throw std::invalid_argument("extract_tau_c: n_resamples must be >= 50");
  deer.validate();
  echo.validate();
  if (resample_halfwidth < 0.0 || resample_halfwidth >= 1.0) {
    throw std::invalid_argument("extract_tau_c: resample_halfwidth must be in [0,1)");
  }

  // EarlyTimeInterpolation bounds: linear extrapolation of the two earliest
  // echo points to t=0 versus the earliest echo value itself.
  double interp_lo = 1.0, interp_hi = 1.0;
  if (policy == NormalizationPolicy::EarlyTimeInterpolation) {
    if (echo.curve.size() < 2) {
      throw std::invalid_argument("extract_tau_c: interpolation policy needs >= 2 echo points");
    }
    const double t0 = echo.curve.times_us[0], t1 = echo.curve.times_us[1];
    const double c0 = echo.curve.coherence[0], c1 = echo.curve.coherence[1];
    const double extrapolated = c0 + (c0 - c1) * t0 / (t1 - t0);
    interp_lo = std::min(extrapolated, c0);
    interp_hi = std::max(extrapolated, c0);
    if (!(interp_lo > 0.0)) {
      throw std::invalid_argument("extract_tau_c: non-positive extrapolated normalization");
    }
  }

  std::vector<double> pool;
  pool.reserve(2 * n_resamples);
  std::size_t failed = 0;
  Rng rng(seed);
  for (std::size_t rs = 0; rs < n_resamples; ++rs) {
    double f_deer = 1.0, f_echo = 1.0;  // renormalization divisors
    if (policy == NormalizationPolicy::PlusMinus10pct) {
      f_deer = 1.0 - resample_halfwidth + 2.0 * resample_halfwidth * rng.uniform();
      f_echo = 1.0 - resample_halfwidth + 2.0 * resample_halfwidth * rng.uniform();
    } else {
      const double f = interp_lo + (interp_hi - interp_lo) * rng.uniform();
      f_deer = f_echo = f;  // both datasets share the early-echo normalization
    }
    auto scaled = [](const ExperimentalDataset& d, double f) {
      ExperimentalDataset out = d;
      for (auto& c : out.curve.coherence) c /= f;
      for (auto& e : out.curve.stderr_) e /= f;
      return out;
    };
    const auto deer_rs = scaled(deer, f_deer);
    const auto echo_rs = scaled(echo, f_echo);
    for (const auto space : {FitSpace::Linear, FitSpace::NegLog}) {
      try {
        const auto fr = joint_fit(deer_rs, echo_rs, dimension, alpha, space);
        if (fr.tau_c_at_bound) {
          ++failed;
          continue;
        }
        pool.push_back(fr.tau_c_us);
      } catch (const std::exception&) {
        ++failed;
      }
    }
  }
  if (pool.empty() || failed > (2 * n_resamples) / 5) {
    throw numeric_error("extract_tau_c: " + std::to_string(failed) + " of " +
                        std::to_string(2 * n_resamples) + " resampled fits diverged");
  }
  double mean = 0.0;
  for (double v : pool) mean += v;
  mean /= static_cast<double>(pool.size());
  double var = 0.0;
  for (double v : pool) var += (v - mean) * (v - mean);
  var /= static_cast<double>(pool.size());
  TauCEstimate est;
  est.mean_us = mean;
  est.std_us = std::sqrt(var);
  est.n_resamples = n_resamples;
  est.policy = policy;
  est.n_failed = failed;
  return est;
}

struct DensityFamilyMember {
  double areal_ppm_nm = 0.0;
  CoherenceCurve curve;
};

namespace detail {

inline double interp_curve(const CoherenceCurve& c, double t) {
  const auto& ts = c.times_us;
  if (t < ts.front() - 1e-9 || t > ts.back() + 1e-9) {
    throw numeric_error("density family does not span the measured time " + std::to_string(t));
  }
  auto it = std::lower_bound(ts.begin(), ts.end(), t);
  if (it == ts.begin()) return c.coherence.front();
  if (it == ts.end()) return c.coherence.back();
  const auto hi = static_cast<std::size_t>(it - ts.begin());
  const std::size_t lo = hi - 1;
  const double f = (t - ts[lo]) / (ts[hi] - ts[lo]);
  return c.coherence[lo] + f * (c.coherence[hi] - c.coherence[lo]);
}

}  // namespace detail

// Least-squares selection over a density-indexed family of simulated Ramsey
// curves; parabolic refinement between grid members and a chi^2+1 interval.
// `baseline` (optional) removes an independent dephasing channel by dividing
// it out of the measured curve (decay exponents of independent channels add).
inline DensityEstimate estimate_density(const ExperimentalDataset& measured,
                                        const std::vector<DensityFamilyMember>& family,
                                        double late_time_cut,
                                        const CoherenceCurve* baseline = nullptr) {
  measured.validate();
  if (family.size() < 3) throw std::invalid_argument("estimate_density: need >= 3 family members");
  for (std::size_t i = 1; i < family.size(); ++i) {
    if (!(family[i].areal_ppm_nm > family[i - 1].areal_ppm_nm)) {
      throw std::invalid_argument("estimate_density: family must be sorted by areal density");
    }
  }
  if (!(late_time_cut > 0.0)) {
    throw std::invalid_argument("estimate_density: late_time_cut must be > 0");
  }

  std::vector<double> t_used, y_used, w_used;
  for (std::size_t i = 0; i < measured.curve.size(); ++i) {
    const double t = measured.curve.times_us[i];
    if (t <= measured.min_time_cut_us || t > late_time_cut) continue;
    double y = measured.curve.coherence[i];
    double sg = measured.curve.stderr_.empty() ? 0.0 : measured.curve.stderr_[i];
    if (baseline) {
      const double b = detail::interp_curve(*baseline, t);
      if (!(b > 0.05)) continue;  // baseline itself decayed away; uninformative
      y /= b;
      sg /= b;
    }
    t_used.push_back(t);
    y_used.push_back(y);
    w_used.push_back(sg > 0.0 ? 1.0 / sg : 1.0);
  }
  if (t_used.size() < 4) {
    throw std::invalid_argument("estimate_density: fewer than 4 usable points after cuts");
  }

  std::vector<double> chi2(family.size(), 0.0);
  for (std::size_t k = 0; k < family.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t_used.size(); ++i) {
      const double model = detail::interp_curve(family[k].curve, t_used[i]);
      const double r = w_used[i] * (y_used[i] - model);
      acc += r * r;
    }
    chi2[k] = acc;
  }
  const auto k_min =
      static_cast<std::size_t>(std::min_element(chi2.begin(), chi2.end()) - chi2.begin());
  if (k_min == 0 || k_min + 1 == family.size()) {
    throw numeric_error(
        "estimate_density: best fit at the family edge (areal density " +
        std::to_string(family[k_min].areal_ppm_nm) +
        " ppm nm); refusing to extrapolate, extend the family");
  }

  // parabola through the three members around the minimum
  const double xl = family[k_min - 1].areal_ppm_nm, xm = family[k_min].areal_ppm_nm,
               xr = family[k_min + 1].areal_ppm_nm;
  const double yl = chi2[k_min - 1], ym = chi2[k_min], yr = chi2[k_min + 1];
  // curvature of the parabola through the three bracketing members
  const double denom = (xl - xm) * (xl - xr) * (xm - xr);
  const double a2 = ((yl - ym) * (xm - xr) - (ym - yr) * (xl - xm)) / denom;
  double x_star = xm;
  if (a2 > 0.0) {
    const double b1 = (yl - ym) / (xl - xm) - a2 * (xl + xm);
    x_star = -b1 / (2.0 * a2);
    x_star = std::clamp(x_star, xl, xr);
  }
  // chi^2 + 1 half-width from the same parabola, floored at half the grid step
  double half_width = 0.5 * std::min(xm - xl, xr - xm);
  if (a2 > 0.0) half_width = std::max(half_width, std::sqrt(1.0 / a2));

  DensityEstimate est;
  est.areal_ppm_nm = x_star;
  est.areal_per_nm2 = x_star * kPpmToPerNm3;
  est.uncertainty_ppm_nm = half_width;
  est.late_time_cut_us = late_time_cut;
  const auto dof = static_cast<double>(t_used.size() > 1 ? t_used.size() - 1 : 1);
  est.chi2_reduced_at_min = ym / dof;
  return est;
}

}  // namespace spinbath
