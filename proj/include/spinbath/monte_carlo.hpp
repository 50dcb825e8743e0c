#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spinbath/curve.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/geometry.hpp"
#include "spinbath/hash.hpp"
#include "spinbath/noise.hpp"
#include "spinbath/profiles.hpp"
#include "spinbath/rng.hpp"
#include "spinbath/sequence.hpp"

namespace spinbath {

// Stochastic end-to-end simulation: sample bath geometry and spin
// trajectories, accumulate the probe phase under the sequence's toggling
// sign, and average cos(phi) over the full disorder ensemble.

enum class GeometryMode : std::uint8_t { Resample, Frozen };

struct EnsembleSpec {
  GeometrySpec geometry;
  NoiseModelSpec noise;
  SequenceSpec sequence;
  std::vector<double> times_us;
  std::size_t n_realizations = 1;
  std::uint64_t master_seed = 1;
  double dt_us = 0.0;
  GeometryMode geometry_mode = GeometryMode::Resample;
  std::optional<BathConfiguration> fixed_configuration;

  void validate() const {
    geometry.validate();
    noise.validate();
    sequence.validate();
    if (n_realizations < 1) throw std::invalid_argument("EnsembleSpec: n_realizations must be >= 1");
    if (!(dt_us > 0.0)) throw std::invalid_argument("EnsembleSpec: dt_us must be > 0");
    if (times_us.empty()) throw std::invalid_argument("EnsembleSpec: empty time grid");
    for (std::size_t i = 0; i < times_us.size(); ++i) {
      if (!(times_us[i] > 0.0)) throw std::invalid_argument("EnsembleSpec: times must be > 0");
      if (i > 0 && !(times_us[i] > times_us[i - 1])) {
        throw std::invalid_argument("EnsembleSpec: times must be strictly increasing");
      }
    }
    if ((noise.kind == NoiseKind::GaussMarkov || noise.kind == NoiseKind::Telegraph) &&
        dt_us > noise.tau_c_us / 10.0 + 1e-15) {
      throw std::invalid_argument("EnsembleSpec: dt_us must resolve tau_c (dt <= tau_c/10)");
    }
    if (noise.kind == NoiseKind::DrivenSpin) {
      const double step = noise.drive->sample_step_us;
      const double ratio = dt_us / step;
      if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio) || ratio < 1.0 - 1e-9) {
        throw std::invalid_argument(
            "EnsembleSpec: dt_us must be a whole multiple of the drive sample step");
      }
    }
    for (double t : times_us) {
      const double k = t / dt_us;
      if (std::abs(k - std::round(k)) > 1e-6) {
        throw std::invalid_argument("EnsembleSpec: measurement time " + std::to_string(t) +
                                    " does not lie on the dt grid");
      }
      const auto ki = static_cast<long long>(std::llround(k));
      if (sequence.kind == SequenceKind::SpinEcho && ki % 2 != 0) {
        throw std::invalid_argument(
            "EnsembleSpec: spin-echo measurement times need even grid index (pi pulse on grid)");
      }
    }
    if (sequence.kind == SequenceKind::XY8) {
      const double q = sequence.tau_p_us / (4.0 * dt_us);
      if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q) || q < 1.0 - 1e-9) {
        throw std::invalid_argument(
            "EnsembleSpec: XY8 needs tau_p to be a whole multiple of 4*dt");
      }
      for (double t : times_us) {
        const double m = t / sequence.tau_p_us;
        if (std::abs(m - std::round(m)) > 1e-9 * std::max(1.0, m)) {
          throw std::invalid_argument(
              "EnsembleSpec: XY8 measurement times must be whole tau_p periods");
        }
      }
    }
    if (geometry_mode == GeometryMode::Frozen && !fixed_configuration) {
      throw std::invalid_argument("EnsembleSpec: frozen geometry mode needs fixed_configuration");
    }
  }

  std::string canonical_string() const {
    std::string s = "ensemble/v1;D=" + std::to_string(geometry.dimension) +
                    ";alpha=" + canonical_double(geometry.alpha) +
                    ";n=" + canonical_double(geometry.density) +
                    ";w=" + canonical_double(geometry.slab_thickness_nm) +
                    ";R=" + (geometry.region_radius_nm ? canonical_double(*geometry.region_radius_nm) : std::string("auto")) +
                    ";J=" + canonical_double(geometry.j_z) +
                    ";rmin=" + canonical_double(geometry.exclusion_radius_nm) +
                    ";ang=" + std::to_string(static_cast<int>(geometry.angular)) +
                    ";tailf=" + canonical_double(geometry.tail_fraction) +
                    ";noise=" + std::to_string(static_cast<int>(noise.kind)) +
                    ";tauc=" + canonical_double(noise.tau_c_us);
    if (noise.drive) {
      s += ";rabi=" + canonical_double(noise.drive->rabi_rad_per_us) +
           ";lw=" + canonical_double(noise.drive->linewidth_rad_per_us) +
           ";dstep=" + canonical_double(noise.drive->sample_step_us);
    }
    s += ";seq=" + std::to_string(static_cast<int>(sequence.kind)) +
         ";taup=" + canonical_double(sequence.tau_p_us) + ";nt=" + std::to_string(times_us.size());
    for (double t : times_us) s += "," + canonical_double(t);
    s += ";nr=" + std::to_string(n_realizations) + ";seed=" + std::to_string(master_seed) +
         ";dt=" + canonical_double(dt_us) + ";mode=" + std::to_string(static_cast<int>(geometry_mode));
    return s;
  }
};

namespace detail {

struct PhaseAccumulator {
  std::vector<double> sum_cos, sum_cos2, sum_sin;
  explicit PhaseAccumulator(std::size_t n) : sum_cos(n, 0.0), sum_cos2(n, 0.0), sum_sin(n, 0.0) {}
  void add(std::size_t i, double phi) {
    const double c = std::cos(phi);
    sum_cos[i] += c;
    sum_cos2[i] += c * c;
    sum_sin[i] += std::sin(phi);
  }
  void merge(const PhaseAccumulator& other) {
    for (std::size_t i = 0; i < sum_cos.size(); ++i) {
      sum_cos[i] += other.sum_cos[i];
      sum_cos2[i] += other.sum_cos2[i];
      sum_sin[i] += other.sum_sin[i];
    }
  }
};

// Summed bath field F(t_j) = sum_i c_i s_i(t_j) on the engine grid.
// Incremental per-spin generation; the update rules match the trajectory
// samplers in noise.hpp exactly (exact Gauss-Markov decay, exponential
// telegraph waiting times), consuming one rng stream per realization.
inline void accumulate_field(std::vector<double>& field, const std::vector<double>& couplings,
                             const NoiseModelSpec& noise, double dt, Rng& rng,
                             std::uint64_t drive_seed_base) {
  const std::size_t n_nodes = field.size();
  switch (noise.kind) {
    case NoiseKind::GaussMarkov: {
      const double decay = std::exp(-dt / noise.tau_c_us);
      const double sig = 0.5 * std::sqrt(1.0 - decay * decay);
      for (double c : couplings) {
        double x = 0.5 * rng.gaussian();
        field[0] += c * x;
        for (std::size_t j = 1; j < n_nodes; ++j) {
          x = x * decay + sig * rng.gaussian();
          field[j] += c * x;
        }
      }
      break;
    }
    case NoiseKind::Telegraph: {
      const double mean_wait = 2.0 * noise.tau_c_us;
      for (double c : couplings) {
        double s = (rng.next_u64() & 1ull) ? 0.5 : -0.5;
        double next_flip = rng.exponential(mean_wait);
        for (std::size_t j = 0; j < n_nodes; ++j) {
          const double t = static_cast<double>(j) * dt;
          while (next_flip <= t) {
            s = -s;
            next_flip += rng.exponential(mean_wait);
          }
          field[j] += c * s;
        }
      }
      break;
    }
    case NoiseKind::DrivenSpin: {
      const double step = noise.drive->sample_step_us;
      const auto stride = static_cast<std::size_t>(std::llround(dt / step));
      const double duration = static_cast<double>(n_nodes - 1) * dt + 0.5 * step;
      for (std::size_t i = 0; i < couplings.size(); ++i) {
        const auto path = simulate_driven_spin(*noise.drive, std::max(duration, 2.0 * step),
                                               derive_seed(drive_seed_base, i));
        for (std::size_t j = 0; j < n_nodes; ++j) {
          field[j] += couplings[i] * path.values[j * stride];
        }
      }
      break;
    }
    default: {  // Static: frozen +-1/2 configuration
      double k_sum = 0.0;
      for (double c : couplings) k_sum += c * ((rng.next_u64() & 1ull) ? 0.5 : -0.5);
      for (std::size_t j = 0; j < n_nodes; ++j) field[j] += k_sum;
      break;
    }
  }
}

}  // namespace detail

// Full disorder-averaged coherence curve.  Realization r is driven entirely
// by derive_seed(master_seed, r), so the ensemble is reproducible and
// independent of scheduling; chunked accumulation keeps the reduction order
// fixed for any worker count.
inline CoherenceCurve simulate_coherence(const EnsembleSpec& spec, unsigned n_workers = 1) {
  spec.validate();
  const double t_max = spec.times_us.back();
  const auto n_steps = static_cast<std::size_t>(std::llround(t_max / spec.dt_us));
  const std::size_t n_times = spec.times_us.size();

  std::vector<std::size_t> k_index(n_times);
  for (std::size_t i = 0; i < n_times; ++i) {
    k_index[i] = static_cast<std::size_t>(std::llround(spec.times_us[i] / spec.dt_us));
  }

  // region radius: explicit, or auto-sized from the analytic exponent estimate
  double region_radius = 0.0;
  if (spec.geometry_mode == GeometryMode::Resample) {
    if (spec.geometry.region_radius_nm) {
      region_radius = *spec.geometry.region_radius_nm;
    } else {
      const double tau_c_for_chi = spec.noise.kind == NoiseKind::Static
                                       ? std::max(t_max, spec.noise.tau_c_us)
                                       : spec.noise.tau_c_us;
      SequenceSpec chi_seq = spec.sequence;
      double chi_max = 0.0;
      if (spec.noise.kind == NoiseKind::Static) {
        chi_max = t_max * t_max;  // frozen field: chi = t^2 (DEER/Ramsey)
      } else {
        chi_max = chi_quadrature(chi_seq, t_max, tau_c_for_chi);
      }
      ProfileParams prof;
      prof.dimension = spec.geometry.dimension;
      prof.alpha = spec.geometry.alpha;
      prof.seq = spec.sequence;
      prof.tau_c_us = tau_c_for_chi;
      prof.mode = AmplitudeMode::Microscopic;
      prof.density = spec.geometry.density;
      prof.j_z = spec.geometry.j_z;
      prof.g_bar = angular_average_gbar(spec.geometry);
      const double exponent_est =
          profile_amplitude(prof) *
          std::pow(chi_max, static_cast<double>(prof.dimension) / (2.0 * prof.alpha));
      region_radius = auto_region_radius(spec.geometry, chi_max, exponent_est);
    }
  }

  constexpr std::size_t kChunk = 32;
  const std::size_t n_chunks = (spec.n_realizations + kChunk - 1) / kChunk;
  std::vector<detail::PhaseAccumulator> chunk_acc(n_chunks, detail::PhaseAccumulator(n_times));

  auto run_chunk = [&](std::size_t chunk) {
    auto& acc = chunk_acc[chunk];
    const std::size_t r_begin = chunk * kChunk;
    const std::size_t r_end = std::min(spec.n_realizations, r_begin + kChunk);
    std::vector<double> field(n_steps + 1);
    std::vector<double> cum(n_steps + 1);
    std::vector<double> cum_signed;
    std::vector<int> cell_sign;
    if (spec.sequence.kind == SequenceKind::XY8) {
      cum_signed.resize(n_steps + 1);
      cell_sign.resize(n_steps);
      for (std::size_t m = 0; m < n_steps; ++m) {
        const double mid = (static_cast<double>(m) + 0.5) * spec.dt_us;
        const double v = mid / spec.sequence.tau_p_us + 0.25;
        cell_sign[m] = (v - std::floor(v)) < 0.5 ? 1 : -1;
      }
    }
    for (std::size_t r = r_begin; r < r_end; ++r) {
      const std::uint64_t seed_r = derive_seed(spec.master_seed, r);
      Rng rng(seed_r);
      const BathConfiguration* bath = nullptr;
      BathConfiguration sampled;
      if (spec.geometry_mode == GeometryMode::Frozen) {
        bath = &*spec.fixed_configuration;
      } else {
        sampled = sample_bath(spec.geometry, region_radius, derive_seed(seed_r, 0x9e0));
        bath = &sampled;
      }
      std::fill(field.begin(), field.end(), 0.0);
      detail::accumulate_field(field, bath->couplings, spec.noise, spec.dt_us, rng,
                               derive_seed(seed_r, 0x9e1));
      cum[0] = 0.0;
      for (std::size_t m = 0; m < n_steps; ++m) {
        cum[m + 1] = cum[m] + 0.5 * spec.dt_us * (field[m] + field[m + 1]);
      }
      if (spec.sequence.kind == SequenceKind::XY8) {
        cum_signed[0] = 0.0;
        for (std::size_t m = 0; m < n_steps; ++m) {
          cum_signed[m + 1] =
              cum_signed[m] + cell_sign[m] * 0.5 * spec.dt_us * (field[m] + field[m + 1]);
        }
      }
      for (std::size_t i = 0; i < n_times; ++i) {
        const std::size_t k = k_index[i];
        double phi = 0.0;
        switch (spec.sequence.kind) {
          case SequenceKind::RamseyDeer: phi = cum[k]; break;
          case SequenceKind::SpinEcho: phi = 2.0 * cum[k / 2] - cum[k]; break;
          default: phi = cum_signed[k]; break;
        }
        acc.add(i, phi);
      }
    }
  };

  if (n_workers <= 1 || n_chunks <= 1) {
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) run_chunk(chunk);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t chunk = next.fetch_add(1);
        if (chunk >= n_chunks) return;
        run_chunk(chunk);
      }
    };
    std::vector<std::thread> pool;
    const unsigned n_threads = std::min<unsigned>(n_workers, static_cast<unsigned>(n_chunks));
    pool.reserve(n_threads);
    for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  detail::PhaseAccumulator total(n_times);
  for (const auto& acc : chunk_acc) total.merge(acc);  // fixed chunk order

  CoherenceCurve curve;
  curve.times_us = spec.times_us;
  curve.coherence.resize(n_times);
  curve.stderr_.resize(n_times);
  curve.sin_mean.resize(n_times);
  const auto n = static_cast<double>(spec.n_realizations);
  for (std::size_t i = 0; i < n_times; ++i) {
    const double mean = total.sum_cos[i] / n;
    curve.coherence[i] = mean;
    curve.sin_mean[i] = total.sum_sin[i] / n;
    if (spec.n_realizations > 1) {
      // jackknife variance of the mean; algebraically sum((x-xbar)^2)/(n(n-1))
      const double ss = std::max(0.0, total.sum_cos2[i] - n * mean * mean);
      curve.stderr_[i] = std::sqrt(ss / (n * (n - 1.0)));
    } else {
      curve.stderr_[i] = 0.0;
    }
  }
  curve.spec_hash = fnv1a64(spec.canonical_string());
  curve.master_seed = spec.master_seed;
  if (curve.coherence.back() < 3.0 * curve.stderr_.back()) {
    curve.warnings.push_back("noise floor: C(t_max) below 3 standard errors; late-time points "
                             "are statistically unresolved");
  }
  return curve;
}

// Frozen-field Ramsey specialization: s_i = +-1/2 per realization, so
// phi(t) = t * sum_i c_i s_i exactly; no time grid is involved.
inline CoherenceCurve simulate_static_ramsey(const GeometrySpec& geometry,
                                             const std::vector<double>& times,
                                             std::size_t n_realizations, std::uint64_t seed,
                                             unsigned n_workers = 1) {
  geometry.validate();
  if (n_realizations < 1) {
    throw std::invalid_argument("simulate_static_ramsey: n_realizations must be >= 1");
  }
  if (times.empty()) throw std::invalid_argument("simulate_static_ramsey: empty time grid");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0) || (i > 0 && !(times[i] > times[i - 1]))) {
      throw std::invalid_argument("simulate_static_ramsey: times must be positive, increasing");
    }
  }
  const double t_max = times.back();
  double region_radius;
  if (geometry.region_radius_nm) {
    region_radius = *geometry.region_radius_nm;
  } else {
    const double chi_max = t_max * t_max;
    ProfileParams prof;
    prof.dimension = geometry.dimension;
    prof.alpha = geometry.alpha;
    prof.seq.kind = SequenceKind::RamseyDeer;
    prof.tau_c_us = std::max(1.0, t_max);
    prof.mode = AmplitudeMode::Microscopic;
    prof.density = geometry.density;
    prof.j_z = geometry.j_z;
    prof.g_bar = angular_average_gbar(geometry);
    const double exponent_est =
        profile_amplitude(prof) *
        std::pow(chi_max, static_cast<double>(prof.dimension) / (2.0 * prof.alpha));
    region_radius = auto_region_radius(geometry, chi_max, exponent_est);
  }

  const std::size_t n_times = times.size();
  constexpr std::size_t kChunk = 64;
  const std::size_t n_chunks = (n_realizations + kChunk - 1) / kChunk;
  std::vector<detail::PhaseAccumulator> chunk_acc(n_chunks, detail::PhaseAccumulator(n_times));

  auto run_chunk = [&](std::size_t chunk) {
    auto& acc = chunk_acc[chunk];
    const std::size_t r_begin = chunk * kChunk;
    const std::size_t r_end = std::min(n_realizations, r_begin + kChunk);
    for (std::size_t r = r_begin; r < r_end; ++r) {
      const std::uint64_t seed_r = derive_seed(seed, r);
      Rng rng(seed_r);
      const auto bath = sample_bath(geometry, region_radius, derive_seed(seed_r, 0x9e0));
      double k_sum = 0.0;
      for (double c : bath.couplings) k_sum += c * ((rng.next_u64() & 1ull) ? 0.5 : -0.5);
      for (std::size_t i = 0; i < n_times; ++i) acc.add(i, k_sum * times[i]);
    }
  };
  if (n_workers <= 1 || n_chunks <= 1) {
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) run_chunk(chunk);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t chunk = next.fetch_add(1);
        if (chunk >= n_chunks) return;
        run_chunk(chunk);
      }
    };
    std::vector<std::thread> pool;
    const unsigned n_threads = std::min<unsigned>(n_workers, static_cast<unsigned>(n_chunks));
    for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  detail::PhaseAccumulator total(n_times);
  for (const auto& acc : chunk_acc) total.merge(acc);

  CoherenceCurve curve;
  curve.times_us = times;
  curve.coherence.resize(n_times);
  curve.stderr_.resize(n_times);
  curve.sin_mean.resize(n_times);
  const auto n = static_cast<double>(n_realizations);
  for (std::size_t i = 0; i < n_times; ++i) {
    const double mean = total.sum_cos[i] / n;
    curve.coherence[i] = mean;
    curve.sin_mean[i] = total.sum_sin[i] / n;
    const double ss = std::max(0.0, total.sum_cos2[i] - n * mean * mean);
    curve.stderr_[i] = n_realizations > 1 ? std::sqrt(ss / (n * (n - 1.0))) : 0.0;
  }
  std::string canon = "static_ramsey/v1;D=" + std::to_string(geometry.dimension) +
                      ";alpha=" + canonical_double(geometry.alpha) +
                      ";n=" + canonical_double(geometry.density) +
                      ";w=" + canonical_double(geometry.slab_thickness_nm) +
                      ";J=" + canonical_double(geometry.j_z) +
                      ";nr=" + std::to_string(n_realizations) + ";seed=" + std::to_string(seed);
  for (double t : times) canon += "," + canonical_double(t);
  curve.spec_hash = fnv1a64(canon);
  curve.master_seed = seed;
  if (curve.coherence.back() < 3.0 * curve.stderr_.back()) {
    curve.warnings.push_back("noise floor: C(t_max) below 3 standard errors; late-time points "
                             "are statistically unresolved");
  }
  return curve;
}

struct PositionalAverageResult {
  double mc_exponent = 0.0;      // -log < exp(-sum_i u^2 g^2 / 8 r_i^{2alpha}) > + analytic far tail
  double closed_form = 0.0;      // n (C(D,alpha) u)^{D/alpha}
  double mc_stderr = 0.0;        // standard error propagated through the log
  double region_radius = 0.0;
  std::size_t mean_spin_count = 0;
};

// Direct Monte Carlo check of the positional disorder average for a frozen
// phase variance (u = J chi^{1/2}, g = 1): spins drop as a Poisson process in
// the D-ball of radius R, each contributes the exact Gaussian-noise factor
// exp(-u^2/8r^{2alpha}), and the far field beyond R is added analytically in
// its asymptotically exact weak-coupling form.
inline PositionalAverageResult positional_average_oracle(int dimension, double alpha,
                                                         double j_chi_half, double density,
                                                         std::size_t n_samples,
                                                         std::uint64_t seed) {
  if (dimension < 1 || dimension > 3 || !(alpha > 0.0) ||
      !(static_cast<double>(dimension) < 2.0 * alpha)) {
    throw std::invalid_argument("positional_average_oracle: require 1 <= D <= 3 and D < 2*alpha");
  }
  if (!(j_chi_half > 0.0) || !(density > 0.0) || n_samples < 2) {
    throw std::invalid_argument("positional_average_oracle: bad arguments");
  }
  PositionalAverageResult out;
  const double d = static_cast<double>(dimension);
  const double u = j_chi_half;
  out.closed_form = density * std::pow(positional_prefactor(dimension, alpha) * u, d / alpha);

  // R: far enough that (a) the per-spin exponent at R is deep in the linear
  // regime and (b) the analytic tail is a modest correction.
  const double p = 2.0 * alpha - d;
  const double solid = d * unit_ball_volume(dimension);
  const double r_linear = std::pow(u * u / (8.0 * 1e-3), 1.0 / (2.0 * alpha));
  const double tail_coef = density * solid * u * u / (8.0 * p);
  const double r_tail = std::pow(tail_coef / (0.10 * out.closed_form), 1.0 / p);
  const double radius = std::max(r_linear, r_tail);
  out.region_radius = radius;
  const double tail = tail_coef * std::pow(radius, -p);

  const double volume = unit_ball_volume(dimension) * std::pow(radius, d);
  const double mean_count = density * volume;
  out.mean_spin_count = static_cast<std::size_t>(std::llround(mean_count));

  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    Rng rng(derive_seed(seed, s));
    const auto n_spins = static_cast<std::size_t>(rng.poisson(mean_count));
    double exponent = 0.0;
    for (std::size_t i = 0; i < n_spins; ++i) {
      const double r = radius * std::pow(rng.uniform_pos(), 1.0 / d);
      exponent += u * u / (8.0 * std::pow(r, 2.0 * alpha));
    }
    const double w = std::exp(-exponent);
    sum += w;
    sum_sq += w * w;
  }
  const auto ns = static_cast<double>(n_samples);
  const double mean = sum / ns;
  if (!(mean > 0.0)) {
    throw numeric_error("positional_average_oracle: vanishing sample mean, exponent too large");
  }
  const double se_mean = std::sqrt(std::max(0.0, sum_sq - ns * mean * mean) / (ns * (ns - 1.0)));
  out.mc_exponent = -std::log(mean) + tail;
  out.mc_stderr = se_mean / mean;
  return out;
}

}  // namespace spinbath
