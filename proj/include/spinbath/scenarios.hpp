#pragma once

// Bundled desk-scale study runners shared by the command-line `reproduce`
// subcommand and the acceptance suite: the universal stretch-power table,
// the Ramsey-DEER crossover + DEER/echo late-time overlap study, and the
// dimension-classifier calibration study.  Each runner returns named range
// checks plus the curves it produced so callers can emit artifacts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spinbath/curve.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/fit.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/monte_carlo.hpp"
#include "spinbath/profiles.hpp"
#include "spinbath/rng.hpp"
#include "spinbath/sequence.hpp"

namespace spinbath::scenarios {

struct Check {
  std::string name;
  double measured = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool passed = false;
  std::string note;
};

inline Check make_check(std::string name, double measured, double lo, double hi,
                        std::string note = {}) {
  Check c;
  c.name = std::move(name);
  c.measured = measured;
  c.lo = lo;
  c.hi = hi;
  c.passed = std::isfinite(measured) && measured >= lo && measured <= hi;
  c.note = std::move(note);
  return c;
}

struct NamedCurve {
  std::string name;
  CoherenceCurve curve;
};

struct Outcome {
  std::string scenario;
  std::vector<Check> checks;
  std::vector<NamedCurve> curves;

  bool passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }
};

struct StretchFit {
  double beta = 0.0;
  double beta_err = 0.0;
  std::size_t n_used = 0;
};

// Weighted straight-line fit of log(-log C) against log t over the usable
// points of one curve; sigma_{log(-log C)} = sigma_C / (C |log C|).
inline StretchFit weighted_stretch_fit(const CoherenceCurve& curve) {
  curve.require_consistent();
  std::vector<double> x, y, w;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double c = curve.coherence[i];
    const double sig = curve.stderr_.empty() ? 0.0 : curve.stderr_[i];
    if (!(c > 0.0) || c >= 0.995) continue;
    if (c <= std::max(3.0 * sig, 2e-3)) continue;
    x.push_back(std::log(curve.times_us[i]));
    y.push_back(std::log(-std::log(c)));
    const double sy = sig > 0.0 ? sig / (c * -std::log(c)) : 1.0;
    w.push_back(1.0 / (sy * sy));
  }
  if (x.size() < 4) {
    throw numeric_error("weighted_stretch_fit: fewer than 4 usable points");
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xb = sx / sw, yb = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - xb) * (x[i] - xb);
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
  }
  if (!(sxx > 0.0)) throw numeric_error("weighted_stretch_fit: degenerate time grid");
  StretchFit out;
  out.beta = sxy / sxx;
  out.beta_err = std::sqrt(1.0 / sxx);
  out.n_used = x.size();
  return out;
}

namespace detail {

inline std::vector<double> times_from_indices(double dt, const std::vector<int>& idx) {
  std::vector<double> t;
  t.reserve(idx.size());
  for (int k : idx) t.push_back(static_cast<double>(k) * dt);
  return t;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(n - 1);
    t[i] = lo * std::pow(hi / lo, f);
  }
  return t;
}

}  // namespace detail

struct StretchCell {
  std::string name;
  EnsembleSpec spec;
  double expected_beta = 0.0;
  double tolerance = 0.0;
};

// Six Monte Carlo cells probing the universal stretch powers: early-time
// DEER beta = D/alpha for both noise kinds, early-time echo 3D/2alpha
// (Gauss-Markov) and 1 + D/alpha (telegraph), late-time DEER beta = D/2alpha
// in D=2 and (drive-generated noise) D=3.  All cells use tau_c = 1 us and
// a few hundred bath spins; couplings are tuned so the coherence spans
// roughly [0.15, 0.95] across each fit window.
inline std::vector<StretchCell> stretch_table_cells() {
  std::vector<StretchCell> cells;
  const std::vector<int> early_deer_idx = {10, 12, 15, 19, 24, 30, 38, 48, 60, 75, 88, 100};
  const std::vector<int> early_echo_idx = {20, 24, 30, 36, 44, 52, 64, 76, 88, 100, 110, 120};
  const std::vector<int> late_deer_idx = {100, 120, 140, 170, 200, 240, 280, 340, 400, 480, 540, 600};
  const std::vector<int> late_drive_idx = {800, 960, 1120, 1360, 1600, 1920, 2240, 2720, 3200, 3840};

  {
    StretchCell c;
    c.name = "deer_gm_d2_early";
    c.spec.geometry.dimension = 2;
    c.spec.geometry.alpha = 3.0;
    c.spec.geometry.density = 0.31;
    c.spec.geometry.j_z = 5.28;
    c.spec.geometry.region_radius_nm = 17.55;
    c.spec.noise.kind = NoiseKind::GaussMarkov;
    c.spec.noise.tau_c_us = 1.0;
    c.spec.sequence.kind = SequenceKind::RamseyDeer;
    c.spec.dt_us = 0.002;
    c.spec.times_us = detail::times_from_indices(c.spec.dt_us, early_deer_idx);
    c.spec.n_realizations = 10000;
    c.spec.master_seed = 1101;
    c.expected_beta = 2.0 / 3.0;
    c.tolerance = 0.10;
    cells.push_back(std::move(c));
  }
  {
    StretchCell c = cells.back();
    c.name = "deer_tg_d2_early";
    c.spec.noise.kind = NoiseKind::Telegraph;
    c.spec.master_seed = 1102;
    cells.push_back(std::move(c));
  }
  {
    StretchCell c;
    c.name = "echo_gm_d3_early";
    c.spec.geometry.dimension = 3;
    c.spec.geometry.alpha = 3.0;
    c.spec.geometry.density = 0.01;
    c.spec.geometry.j_z = 834.0;
    c.spec.geometry.region_radius_nm = 20.3;
    c.spec.noise.kind = NoiseKind::GaussMarkov;
    c.spec.noise.tau_c_us = 1.0;
    c.spec.sequence.kind = SequenceKind::SpinEcho;
    c.spec.dt_us = 0.0025;
    c.spec.times_us = detail::times_from_indices(c.spec.dt_us, early_echo_idx);
    c.spec.n_realizations = 10000;
    c.spec.master_seed = 1103;
    c.expected_beta = 1.5;
    c.tolerance = 0.10;
    cells.push_back(std::move(c));
  }
  {
    StretchCell c = cells.back();
    c.name = "echo_tg_d3_early";
    c.spec.noise.kind = NoiseKind::Telegraph;
    c.spec.geometry.j_z = 5400.0;
    c.spec.geometry.region_radius_nm = 18.6;
    // half the echo_gm window: the telegraph echo exponent picks up a
    // -O(t/tau_c) two-flip correction, so the asymptote needs t <= 0.15 tau_c
    c.spec.dt_us = 0.00125;
    c.spec.times_us = detail::times_from_indices(c.spec.dt_us, early_echo_idx);
    c.spec.master_seed = 1104;
    c.expected_beta = 2.0;
    cells.push_back(std::move(c));
  }
  {
    StretchCell c;
    c.name = "deer_gm_d2_late";
    c.spec.geometry.dimension = 2;
    c.spec.geometry.alpha = 3.0;
    c.spec.geometry.density = 0.31;
    c.spec.geometry.j_z = 0.66;
    c.spec.geometry.region_radius_nm = 16.0;
    c.spec.noise.kind = NoiseKind::GaussMarkov;
    c.spec.noise.tau_c_us = 1.0;
    c.spec.sequence.kind = SequenceKind::RamseyDeer;
    c.spec.dt_us = 0.05;
    c.spec.times_us = detail::times_from_indices(c.spec.dt_us, late_deer_idx);
    c.spec.n_realizations = 10000;
    c.spec.master_seed = 1105;
    c.expected_beta = 1.0 / 3.0;
    c.tolerance = 0.07;
    cells.push_back(std::move(c));
  }
  {
    // Correlation time generated by a resonant noisy drive: Omega and the
    // drive linewidth are tuned so 0.5*linewidth/Omega^2 = 1 us.
    StretchCell c;
    c.name = "deer_drive_d3_late";
    c.spec.geometry.dimension = 3;
    c.spec.geometry.alpha = 3.0;
    c.spec.geometry.density = 0.01;
    c.spec.geometry.j_z = 9.524;
    c.spec.geometry.region_radius_nm = 16.8;
    c.spec.noise.kind = NoiseKind::DrivenSpin;
    c.spec.noise.tau_c_us = 1.0;
    DriveSpec drive;
    drive.linewidth_rad_per_us = 15.70796326794897;
    drive.rabi_rad_per_us = 2.802495608198544;  // sqrt(0.5*linewidth)
    drive.sample_step_us = 0.00625;
    c.spec.noise.drive = drive;
    c.spec.sequence.kind = SequenceKind::RamseyDeer;
    c.spec.dt_us = 0.00625;
    c.spec.times_us = detail::times_from_indices(c.spec.dt_us, late_drive_idx);
    c.spec.n_realizations = 10000;
    c.spec.master_seed = 1106;
    c.expected_beta = 0.5;
    c.tolerance = 0.07;
    cells.push_back(std::move(c));
  }
  return cells;
}

// realization_scale < 1 runs a faster smoke version (tolerances widen by
// the expected loss of statistical resolution).
inline Outcome run_stretch_table(unsigned n_workers = 1, double realization_scale = 1.0) {
  if (!(realization_scale > 0.0 && realization_scale <= 1.0)) {
    throw std::invalid_argument("run_stretch_table: realization_scale must be in (0, 1]");
  }
  Outcome out;
  out.scenario = "stretch_table";
  for (auto& cell : stretch_table_cells()) {
    EnsembleSpec spec = cell.spec;
    if (realization_scale < 1.0) {
      spec.n_realizations = std::max<std::size_t>(
          500, static_cast<std::size_t>(static_cast<double>(spec.n_realizations) * realization_scale));
    }
    const CoherenceCurve curve = simulate_coherence(spec, n_workers);
    const StretchFit fit = weighted_stretch_fit(curve);
    const double widen = realization_scale < 1.0 ? 1.5 : 1.0;
    std::ostringstream note;
    note << "beta_err=" << fit.beta_err << " n_used=" << fit.n_used
         << " realizations=" << spec.n_realizations;
    out.checks.push_back(make_check("beta_" + cell.name, fit.beta,
                                    cell.expected_beta - widen * cell.tolerance,
                                    cell.expected_beta + widen * cell.tolerance, note.str()));
    out.curves.push_back({cell.name, curve});
  }
  return out;
}

// Crossover + overlap study.  Analytic side: the D=2, alpha=3 DEER local
// stretch passes from 2/3 to 1/3 with the beta = 1/2 midpoint within
// [0.3, 3] tau_c.  Monte Carlo side: Gauss-Markov DEER and echo curves from
// independent seeds coincide within combined statistical error once
// t >= 5 tau_c, while remaining clearly separated around t ~ tau_c.
inline Outcome run_overlap_study(unsigned n_workers = 1, double realization_scale = 1.0) {
  if (!(realization_scale > 0.0 && realization_scale <= 1.0)) {
    throw std::invalid_argument("run_overlap_study: realization_scale must be in (0, 1]");
  }
  Outcome out;
  out.scenario = "overlap_study";

  ProfileParams prof;
  prof.dimension = 2;
  prof.alpha = 3.0;
  prof.seq.kind = SequenceKind::RamseyDeer;
  prof.tau_c_us = 1.0;
  prof.mode = AmplitudeMode::Phenomenological;
  prof.amplitude = 1.0;
  const CoherenceCurve analytic = analytic_curve(prof, detail::log_spaced(1e-3, 200.0, 220));
  const LocalStretchSeries ls = local_stretch(analytic, 7);
  if (ls.times_us.size() < 3) throw numeric_error("run_overlap_study: stretch series too short");
  out.checks.push_back(make_check("analytic_beta_early", ls.beta.front(), 2.0 / 3.0 - 1e-3,
                                  2.0 / 3.0 + 1e-3,
                                  "local beta at t ~ 1e-3 tau_c"));
  out.checks.push_back(make_check("analytic_beta_late", ls.beta.back(), 1.0 / 3.0 - 5e-3,
                                  1.0 / 3.0 + 5e-3,
                                  "local beta at t ~ 170 tau_c"));
  double crossover = 0.0;
  for (std::size_t i = 1; i < ls.times_us.size(); ++i) {
    if (ls.beta[i - 1] > 0.5 && ls.beta[i] <= 0.5) {
      const double f = (ls.beta[i - 1] - 0.5) / (ls.beta[i - 1] - ls.beta[i]);
      crossover = ls.times_us[i - 1] *
                  std::pow(ls.times_us[i] / ls.times_us[i - 1], f);
      break;
    }
  }
  out.checks.push_back(make_check("crossover_time_tauc", crossover, 0.3, 3.0,
                                  "time where local beta crosses 1/2"));

  EnsembleSpec deer;
  deer.geometry.dimension = 3;
  deer.geometry.alpha = 3.0;
  deer.geometry.density = 0.01;
  deer.geometry.j_z = 95.24;
  deer.geometry.region_radius_nm = 16.8;
  deer.noise.kind = NoiseKind::GaussMarkov;
  deer.noise.tau_c_us = 1.0;
  deer.sequence.kind = SequenceKind::RamseyDeer;
  deer.dt_us = 0.02;
  deer.times_us = detail::times_from_indices(
      deer.dt_us, {30, 40, 50, 60, 80, 100, 120, 160, 200, 250, 300, 350, 400, 500, 600});
  deer.n_realizations = std::max<std::size_t>(
      1000, static_cast<std::size_t>(10000.0 * realization_scale));
  deer.master_seed = 7101;

  EnsembleSpec echo = deer;
  echo.sequence.kind = SequenceKind::SpinEcho;
  echo.master_seed = 7102;

  const CoherenceCurve cd = simulate_coherence(deer, n_workers);
  const CoherenceCurve ce = simulate_coherence(echo, n_workers);

  double max_sep = 0.0;
  double max_merge = 0.0, sum_merge = 0.0;
  std::size_t n_merge = 0;
  for (std::size_t i = 0; i < cd.size(); ++i) {
    const double t = cd.times_us[i];
    const double sig = std::sqrt(cd.stderr_[i] * cd.stderr_[i] + ce.stderr_[i] * ce.stderr_[i]);
    const double dev = std::abs(ce.coherence[i] - cd.coherence[i]) / sig;
    if (t >= 1.0 && t <= 2.0) max_sep = std::max(max_sep, dev);
    if (t >= 5.0) {
      max_merge = std::max(max_merge, dev);
      sum_merge += dev;
      ++n_merge;
    }
  }
  if (n_merge == 0) throw numeric_error("run_overlap_study: no points beyond 5 tau_c");
  out.checks.push_back(make_check("overlap_separation_sigma", max_sep, 3.0, 1e30,
                                  "echo vs DEER significance around t ~ tau_c"));
  out.checks.push_back(make_check("overlap_merge_max_sigma", max_merge, 0.0, 2.5,
                                  "max |echo - DEER| / combined stderr for t >= 5 tau_c"));
  out.checks.push_back(make_check("overlap_merge_mean_sigma",
                                  sum_merge / static_cast<double>(n_merge), 0.0, 1.2,
                                  "mean deviation significance for t >= 5 tau_c"));
  out.curves.push_back({"overlap_deer_gm", cd});
  out.curves.push_back({"overlap_echo_gm", ce});
  return out;
}

// Dimension-classifier calibration: 20 synthetic D=2 and 20 synthetic D=3
// families of four DEER curves each (correlation time shrinking with drive
// strength), 3% multiplicative noise; the verdict must match the truth on
// every family.
inline Outcome run_classifier_study(double noise_level = 0.03) {
  if (!(noise_level > 0.0 && noise_level < 0.2)) {
    throw std::invalid_argument("run_classifier_study: noise_level must be in (0, 0.2)");
  }
  Outcome out;
  out.scenario = "classifier_study";
  const std::vector<double> tau_family = {3.2, 1.6, 0.8, 0.4};
  const std::vector<double> times = detail::log_spaced(0.6, 20.0, 16);
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::ostringstream misses;
  for (int truth : {2, 3}) {
    for (int rep = 0; rep < 20; ++rep) {
      Rng rng(derive_seed(0xFA41117ull, static_cast<std::uint64_t>(truth * 100 + rep)));
      const double amp = truth == 2 ? 0.5 + 0.5 * rng.uniform() : 0.25 + 0.3 * rng.uniform();
      std::vector<ExperimentalDataset> datasets;
      for (double tau : tau_family) {
        ProfileParams p;
        p.dimension = truth;
        p.alpha = 3.0;
        p.seq.kind = SequenceKind::RamseyDeer;
        p.tau_c_us = tau;
        p.mode = AmplitudeMode::Phenomenological;
        p.amplitude = amp;
        CoherenceCurve curve;
        curve.times_us = times;
        curve.coherence.resize(times.size());
        curve.stderr_.resize(times.size());
        for (std::size_t i = 0; i < times.size(); ++i) {
          const double c = coherence(p, times[i]);
          curve.coherence[i] = c * (1.0 + noise_level * rng.gaussian());
          curve.stderr_[i] = noise_level * c;
        }
        ExperimentalDataset data;
        data.curve = std::move(curve);
        data.sequence.kind = SequenceKind::RamseyDeer;
        datasets.push_back(std::move(data));
      }
      const DimensionalityReport report = classify_dimension(datasets, {2, 3}, 3.0);
      ++n_total;
      if (report.verdict && *report.verdict == truth) {
        ++n_correct;
      } else {
        misses << " D" << truth << "#" << rep << "->" << report.verdict_string();
      }
    }
  }
  const double accuracy = static_cast<double>(n_correct) / static_cast<double>(n_total);
  out.checks.push_back(make_check("classifier_accuracy", accuracy, 1.0 - 1e-12, 1.0,
                                  misses.str().empty() ? "40/40 families" : misses.str()));
  return out;
}

}  // namespace spinbath::scenarios
