// Command-line surface for the spin-bath decoherence toolkit: simulation,
// filter-weighted variance evaluation, analytic profiles, curve fitting,
// dimensionality classification, correlation-time and density estimation,
// contrast normalization, and the bundled desk-scale study runner.
//
// Exit codes: 0 success, 1 validation error, 2 numeric failure,
// 3 study-check failure.  Worker counts and wall time never enter written
// artifacts so that outputs are byte-identical for a fixed seed.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spinbath/errors.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/io.hpp"
#include "spinbath/monte_carlo.hpp"
#include "spinbath/profiles.hpp"
#include "spinbath/scenarios.hpp"
#include "spinbath/sequence.hpp"
#include "spinbath/version.hpp"

namespace {

using spinbath::json;

unsigned default_workers() {
  if (const char* env = std::getenv("SPINBATH_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 4096) return static_cast<unsigned>(v);
  }
  return 1;
}

spinbath::SequenceSpec sequence_from_name(const std::string& name, double tau_p_us) {
  spinbath::SequenceSpec seq;
  if (name == "ramsey" || name == "deer") {
    seq.kind = spinbath::SequenceKind::RamseyDeer;
  } else if (name == "echo") {
    seq.kind = spinbath::SequenceKind::SpinEcho;
  } else if (name == "xy8") {
    seq.kind = spinbath::SequenceKind::XY8;
    seq.tau_p_us = tau_p_us;
  } else {
    throw std::invalid_argument("unknown sequence '" + name + "' (ramsey|deer|echo|xy8)");
  }
  seq.label = name;
  seq.validate();
  return seq;
}

spinbath::ChiMethod chi_method_from_name(const std::string& name) {
  if (name == "closed") return spinbath::ChiMethod::ClosedForm;
  if (name == "quadrature") return spinbath::ChiMethod::Quadrature;
  if (name == "spectral") return spinbath::ChiMethod::Spectral;
  if (name == "asymptotic-short") return spinbath::ChiMethod::AsymptoticShort;
  if (name == "asymptotic-long") return spinbath::ChiMethod::AsymptoticLong;
  throw std::invalid_argument("unknown chi method '" + name + "'");
}

std::vector<double> resolve_times(const std::vector<double>& listed, double t_start, double t_stop,
                                  std::size_t n_points, bool log_spacing) {
  if (!listed.empty()) return listed;
  if (n_points < 2 || !(t_stop > t_start)) {
    throw std::invalid_argument("time grid: give --times or --t-start/--t-stop/--n-points");
  }
  if (log_spacing && !(t_start > 0.0)) {
    throw std::invalid_argument("time grid: log spacing needs --t-start > 0");
  }
  std::vector<double> t(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(n_points - 1);
    t[i] = log_spacing ? t_start * std::pow(t_stop / t_start, f)
                       : t_start + f * (t_stop - t_start);
  }
  return t;
}

json fit_result_json(const spinbath::FitResult& r) {
  json out;
  out["fit_space"] = spinbath::fit_space_name(r.fit_space);
  out["dimension"] = r.dimension;
  out["alpha"] = r.alpha;
  out["amplitude"] = r.amplitude;
  out["amplitude_err"] = r.amplitude_err;
  out["tau_c_us"] = r.tau_c_us;
  out["tau_c_err_us"] = r.tau_c_err_us;
  out["chi2_reduced"] = r.chi2_reduced;
  out["n_points"] = r.n_points;
  out["n_params"] = r.n_params;
  out["converged"] = r.converged;
  out["tau_c_at_bound"] = r.tau_c_at_bound;
  out["message"] = r.message;
  return out;
}

spinbath::ExperimentalDataset dataset_from_file(const std::string& path,
                                                const spinbath::SequenceSpec& seq,
                                                double min_time_cut) {
  spinbath::ExperimentalDataset data;
  data.curve = spinbath::load_curve(path);
  data.sequence = seq;
  data.min_time_cut_us = min_time_cut;
  return data;
}

void emit_report(const std::optional<std::string>& path, const spinbath::Report& report) {
  if (path) {
    spinbath::write_report(*path, report);
  } else {
    json doc;
    doc["command"] = report.command;
    doc["results"] = report.results;
    std::cout << doc.dump(2) << '\n';
  }
}

struct SequenceFlags {
  std::string name = "deer";
  double tau_p_us = 0.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--sequence", name, "Pulse sequence: ramsey|deer|echo|xy8")
        ->capture_default_str();
    cmd->add_option("--tau-p-us", tau_p_us, "XY8 inter-pulse period (us)");
  }
  spinbath::SequenceSpec make() const { return sequence_from_name(name, tau_p_us); }
};

int run_simulate(const std::string& config_path, const std::string& out_path,
                 const std::optional<std::string>& report_path,
                 const std::optional<std::uint64_t>& seed_override, unsigned workers) {
  spinbath::RunConfig cfg = spinbath::load_run_config(config_path);
  if (seed_override) cfg.ensemble.master_seed = *seed_override;

  spinbath::CoherenceCurve curve;
  const bool static_fast_path = cfg.ensemble.noise.kind == spinbath::NoiseKind::Static &&
                                cfg.ensemble.sequence.kind == spinbath::SequenceKind::RamseyDeer;
  if (static_fast_path) {
    curve = spinbath::simulate_static_ramsey(cfg.ensemble.geometry, cfg.ensemble.times_us,
                                             cfg.ensemble.n_realizations,
                                             cfg.ensemble.master_seed, workers);
  } else {
    curve = spinbath::simulate_coherence(cfg.ensemble, workers);
  }
  spinbath::save_curve(out_path, curve);
  for (const auto& w : curve.warnings) std::cerr << "warning: " << w << '\n';

  spinbath::Report report;
  report.command = "simulate";
  report.inputs = {{config_path, spinbath::fnv1a64_file(config_path)}};
  report.master_seed = curve.master_seed;
  report.parameters["config"] = config_path;
  report.parameters["n_realizations"] = cfg.ensemble.n_realizations;
  report.parameters["static_fast_path"] = static_fast_path;
  report.results["out"] = out_path;
  report.results["n_points"] = curve.size();
  report.results["spec_hash"] = spinbath::hex_digest(curve.spec_hash);
  report.results["warnings"] = curve.warnings;
  if (report_path) spinbath::write_report(*report_path, report);
  return 0;
}

int run_chi(const SequenceFlags& seq_flags, double tau_c_us, const std::vector<double>& times_in,
            double t_start, double t_stop, std::size_t n_points, bool log_spacing,
            std::string method_name, const std::optional<std::string>& out_path) {
  const spinbath::SequenceSpec seq = seq_flags.make();
  if (method_name == "auto") {
    method_name = seq.kind == spinbath::SequenceKind::XY8 ? "quadrature" : "closed";
  }
  const spinbath::ChiMethod method = chi_method_from_name(method_name);
  const std::vector<double> times = resolve_times(times_in, t_start, t_stop, n_points, log_spacing);
  const spinbath::ChiEvaluation eval = spinbath::evaluate_chi(seq, times, tau_c_us, method);

  std::string rows;
  for (std::size_t i = 0; i < eval.times_us.size(); ++i) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%g,%.6f,%s\n", eval.times_us[i], eval.chi_us2[i],
                  spinbath::chi_method_name(eval.method));
    rows += buf;
  }
  std::cout << rows;
  if (out_path) {
    std::ofstream out(*out_path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write: " + *out_path);
    out << "t_us,chi_us2,method\n" << rows;
  }
  return 0;
}

int run_profile(int dimension, double alpha, const SequenceFlags& seq_flags, double tau_c_us,
                const std::optional<double>& amplitude, const std::optional<double>& density,
                const std::optional<double>& j_z, double g_bar,
                const std::vector<double>& times_in, double t_start, double t_stop,
                std::size_t n_points, bool log_spacing, const std::string& method_name,
                const std::string& out_path, const std::optional<std::string>& report_path) {
  spinbath::ProfileParams p;
  p.dimension = dimension;
  p.alpha = alpha;
  p.seq = seq_flags.make();
  p.tau_c_us = tau_c_us;
  if (amplitude && (density || j_z)) {
    throw std::invalid_argument("give either --amplitude or --density/--j-z, not both");
  }
  if (amplitude) {
    p.mode = spinbath::AmplitudeMode::Phenomenological;
    p.amplitude = *amplitude;
  } else if (density && j_z) {
    p.mode = spinbath::AmplitudeMode::Microscopic;
    p.density = *density;
    p.j_z = *j_z;
    p.g_bar = g_bar;
  } else {
    throw std::invalid_argument("give --amplitude, or --density with --j-z");
  }
  const spinbath::ChiMethod method =
      chi_method_from_name(method_name == "auto" ? "quadrature" : method_name);
  const std::vector<double> times = resolve_times(times_in, t_start, t_stop, n_points, log_spacing);
  const spinbath::CoherenceCurve curve = spinbath::analytic_curve(p, times, method);
  spinbath::save_curve(out_path, curve);

  spinbath::Report report;
  report.command = "profile";
  report.parameters["dimension"] = dimension;
  report.parameters["alpha"] = alpha;
  report.parameters["sequence"] = p.seq.label;
  report.parameters["tau_c_us"] = tau_c_us;
  report.results["out"] = out_path;
  report.results["effective_amplitude"] = spinbath::profile_amplitude(p);
  report.results["n_points"] = curve.size();
  if (report_path) spinbath::write_report(*report_path, report);
  return 0;
}

int run_fit(const std::optional<std::string>& curve_path,
            const std::optional<std::string>& deer_path,
            const std::optional<std::string>& echo_path, const SequenceFlags& seq_flags,
            int dimension, double alpha, const std::string& space_name, double min_time_cut,
            const std::optional<std::string>& report_path) {
  const bool joint = deer_path.has_value() || echo_path.has_value();
  if (joint == curve_path.has_value()) {
    throw std::invalid_argument("give --curve with --sequence, or --deer and --echo");
  }
  if (joint && (!deer_path || !echo_path)) {
    throw std::invalid_argument("joint fit needs both --deer and --echo");
  }

  std::vector<spinbath::FitSpace> spaces;
  if (space_name == "linear") {
    spaces = {spinbath::FitSpace::Linear};
  } else if (space_name == "neglog") {
    spaces = {spinbath::FitSpace::NegLog};
  } else if (space_name == "both") {
    spaces = {spinbath::FitSpace::Linear, spinbath::FitSpace::NegLog};
  } else {
    throw std::invalid_argument("--space must be linear|neglog|both");
  }

  spinbath::Report report;
  report.command = "fit";
  report.parameters["dimension"] = dimension;
  report.parameters["alpha"] = alpha;
  report.parameters["min_time_cut_us"] = min_time_cut;
  json fits = json::array();
  if (joint) {
    const auto deer = dataset_from_file(
        *deer_path, sequence_from_name("deer", 0.0), min_time_cut);
    const auto echo = dataset_from_file(
        *echo_path, sequence_from_name("echo", 0.0), min_time_cut);
    report.inputs = {{*deer_path, spinbath::fnv1a64_file(*deer_path)},
                     {*echo_path, spinbath::fnv1a64_file(*echo_path)}};
    report.parameters["mode"] = "joint";
    for (const auto space : spaces) {
      fits.push_back(fit_result_json(spinbath::joint_fit(deer, echo, dimension, alpha, space)));
    }
  } else {
    const auto data = dataset_from_file(*curve_path, seq_flags.make(), min_time_cut);
    report.inputs = {{*curve_path, spinbath::fnv1a64_file(*curve_path)}};
    report.parameters["mode"] = "single";
    report.parameters["sequence"] = seq_flags.name;
    for (const auto space : spaces) {
      fits.push_back(fit_result_json(spinbath::fit_profile(data, dimension, alpha, space)));
    }
  }
  report.results["fits"] = fits;
  emit_report(report_path, report);
  return 0;
}

int run_classify(const std::vector<std::string>& curve_paths, const SequenceFlags& seq_flags,
                 double alpha, std::vector<int> candidates, double min_time_cut,
                 const std::optional<std::string>& report_path) {
  if (candidates.empty()) candidates = {2, 3};
  const spinbath::SequenceSpec seq = seq_flags.make();
  std::vector<spinbath::ExperimentalDataset> datasets;
  spinbath::Report report;
  report.command = "classify-dim";
  for (const auto& path : curve_paths) {
    datasets.push_back(dataset_from_file(path, seq, min_time_cut));
    report.inputs.emplace_back(path, spinbath::fnv1a64_file(path));
  }
  const spinbath::DimensionalityReport result =
      spinbath::classify_dimension(datasets, candidates, alpha);
  report.parameters["alpha"] = alpha;
  report.parameters["sequence"] = seq_flags.name;
  report.parameters["candidates"] = candidates;
  report.parameters["min_time_cut_us"] = min_time_cut;
  json table = json::array();
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    json row;
    row["dimension"] = result.candidates[i];
    row["chi2_reduced_linear"] = result.chi2[i][0];
    row["chi2_reduced_neglog"] = result.chi2[i][1];
    table.push_back(row);
  }
  report.results["table"] = table;
  report.results["verdict"] = result.verdict_string();
  emit_report(report_path, report);
  return 0;
}

int run_extract_tauc(const std::string& deer_path, const std::string& echo_path, int dimension,
                     double alpha, const std::string& policy_name, std::size_t n_resamples,
                     double halfwidth, std::uint64_t seed, double min_time_cut,
                     const std::optional<std::string>& report_path) {
  spinbath::NormalizationPolicy policy;
  if (policy_name == "pm10") {
    policy = spinbath::NormalizationPolicy::PlusMinus10pct;
  } else if (policy_name == "early-interp") {
    policy = spinbath::NormalizationPolicy::EarlyTimeInterpolation;
  } else {
    throw std::invalid_argument("--policy must be pm10|early-interp");
  }
  const auto deer = dataset_from_file(deer_path, sequence_from_name("deer", 0.0), min_time_cut);
  const auto echo = dataset_from_file(echo_path, sequence_from_name("echo", 0.0), min_time_cut);
  const spinbath::TauCEstimate est = spinbath::extract_tau_c(
      deer, echo, policy, n_resamples, dimension, alpha, seed, halfwidth);

  spinbath::Report report;
  report.command = "extract-tauc";
  report.inputs = {{deer_path, spinbath::fnv1a64_file(deer_path)},
                   {echo_path, spinbath::fnv1a64_file(echo_path)}};
  report.master_seed = seed;
  report.parameters["dimension"] = dimension;
  report.parameters["alpha"] = alpha;
  report.parameters["policy"] = policy_name;
  report.parameters["n_resamples"] = n_resamples;
  report.parameters["resample_halfwidth"] = halfwidth;
  report.parameters["min_time_cut_us"] = min_time_cut;
  report.results["tau_c_mean_us"] = est.mean_us;
  report.results["tau_c_std_us"] = est.std_us;
  report.results["n_resamples"] = est.n_resamples;
  report.results["n_failed"] = est.n_failed;
  emit_report(report_path, report);
  return 0;
}

int run_estimate_density(const std::string& curve_path, const std::vector<std::string>& family_paths,
                         const std::vector<double>& family_densities,
                         const std::optional<std::string>& baseline_path,
                         std::optional<double> late_cut, double min_time_cut,
                         const std::optional<std::string>& report_path) {
  if (family_paths.size() != family_densities.size() || family_paths.size() < 2) {
    throw std::invalid_argument(
        "--family and --family-densities need matching lengths (>= 2 members)");
  }
  spinbath::Report report;
  report.command = "estimate-density";
  spinbath::ExperimentalDataset measured =
      dataset_from_file(curve_path, sequence_from_name("ramsey", 0.0), min_time_cut);
  report.inputs.emplace_back(curve_path, spinbath::fnv1a64_file(curve_path));
  std::vector<spinbath::DensityFamilyMember> family;
  for (std::size_t i = 0; i < family_paths.size(); ++i) {
    spinbath::DensityFamilyMember member;
    member.areal_ppm_nm = family_densities[i];
    member.curve = spinbath::load_curve(family_paths[i]);
    family.push_back(std::move(member));
    report.inputs.emplace_back(family_paths[i], spinbath::fnv1a64_file(family_paths[i]));
  }
  spinbath::CoherenceCurve baseline;
  const spinbath::CoherenceCurve* baseline_ptr = nullptr;
  if (baseline_path) {
    baseline = spinbath::load_curve(*baseline_path);
    baseline_ptr = &baseline;
    report.inputs.emplace_back(*baseline_path, spinbath::fnv1a64_file(*baseline_path));
  }
  const double cut = late_cut ? *late_cut : measured.curve.times_us.back();
  const spinbath::DensityEstimate est =
      spinbath::estimate_density(measured, family, cut, baseline_ptr);

  report.parameters["late_time_cut_us"] = cut;
  report.parameters["min_time_cut_us"] = min_time_cut;
  report.parameters["family_densities_ppm_nm"] = family_densities;
  report.results["areal_ppm_nm"] = est.areal_ppm_nm;
  report.results["areal_per_nm2"] = est.areal_per_nm2;
  report.results["uncertainty_ppm_nm"] = est.uncertainty_ppm_nm;
  report.results["late_time_cut_us"] = est.late_time_cut_us;
  report.results["chi2_reduced_at_min"] = est.chi2_reduced_at_min;
  emit_report(report_path, report);
  return 0;
}

int run_normalize(const std::string& raw_path, double t0_value, double t0_sigma,
                  const std::string& out_path, const std::optional<std::string>& report_path) {
  const spinbath::RawContrast raw = spinbath::load_raw_contrast(raw_path);
  const spinbath::CoherenceCurve curve =
      spinbath::normalize_contrast(raw.s0, raw.s1, t0_value, t0_sigma);
  spinbath::save_curve(out_path, curve);
  spinbath::Report report;
  report.command = "normalize";
  report.inputs = {{raw_path, spinbath::fnv1a64_file(raw_path)}};
  report.parameters["t0_value"] = t0_value;
  report.parameters["t0_sigma"] = t0_sigma;
  report.results["out"] = out_path;
  report.results["n_points"] = curve.size();
  if (report_path) spinbath::write_report(*report_path, report);
  return 0;
}

int run_reproduce(std::vector<std::string> scenario_names, const std::string& out_dir,
                  unsigned workers, bool quick) {
  namespace fs = std::filesystem;
  if (scenario_names.empty()) scenario_names = {"stretch-table", "overlap", "classifier"};
  fs::create_directories(out_dir);
  const double scale = quick ? 0.15 : 1.0;

  bool all_passed = true;
  for (const auto& name : scenario_names) {
    spinbath::scenarios::Outcome outcome;
    if (name == "stretch-table") {
      outcome = spinbath::scenarios::run_stretch_table(workers, scale);
    } else if (name == "overlap") {
      outcome = spinbath::scenarios::run_overlap_study(workers, scale);
    } else if (name == "classifier") {
      outcome = spinbath::scenarios::run_classifier_study();
    } else {
      throw std::invalid_argument("unknown scenario '" + name +
                                  "' (stretch-table|overlap|classifier)");
    }
    for (const auto& nc : outcome.curves) {
      spinbath::save_curve((fs::path(out_dir) / (nc.name + ".csv")).string(), nc.curve);
    }
    spinbath::Report report;
    report.command = "reproduce";
    report.parameters["scenario"] = name;
    report.parameters["quick"] = quick;
    json checks = json::array();
    for (const auto& c : outcome.checks) {
      json row;
      row["name"] = c.name;
      row["measured"] = c.measured;
      row["lo"] = c.lo;
      row["hi"] = c.hi;
      row["passed"] = c.passed;
      row["note"] = c.note;
      checks.push_back(row);
      std::printf("[%s] %s/%s measured=%.6g expected=[%.6g, %.6g] %s\n",
                  c.passed ? "PASS" : "FAIL", name.c_str(), c.name.c_str(), c.measured, c.lo,
                  c.hi, c.note.c_str());
      if (!c.passed) all_passed = false;
    }
    report.results["checks"] = checks;
    report.results["passed"] = outcome.passed();
    spinbath::write_report((fs::path(out_dir) / ("reproduce_" + name + ".json")).string(), report);
  }
  std::printf("%s\n", all_passed ? "ALL CHECKS PASSED" : "CHECK FAILURES PRESENT");
  return all_passed ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe-spin decoherence simulator and inference toolkit for disordered "
               "long-range spin baths"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(spinbath::kToolkitVersion));

  unsigned workers = default_workers();
  std::optional<std::uint64_t> seed_override;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo ensemble from a JSON config");
  std::string sim_config, sim_out = "curve.csv";
  std::optional<std::string> sim_report;
  sim->add_option("--config", sim_config, "Run configuration JSON")->required();
  sim->add_option("--out", sim_out, "Output curve CSV")->capture_default_str();
  sim->add_option("--report", sim_report, "Optional JSON report path");
  sim->add_option("--seed", seed_override, "Override the config master seed");
  sim->add_option("--workers", workers, "Worker thread count (results are worker-invariant)");

  // chi
  auto* chi = app.add_subcommand("chi", "Evaluate the filter-weighted noise variance chi(t)");
  SequenceFlags chi_seq;
  chi_seq.attach(chi);
  double chi_tau_c = 0.0;
  std::vector<double> chi_times;
  double chi_t_start = 0.0, chi_t_stop = 0.0;
  std::size_t chi_n_points = 0;
  bool chi_log = false;
  std::string chi_method = "auto";
  std::optional<std::string> chi_out;
  chi->add_option("--tau-c-us", chi_tau_c, "Correlation time (us)")->required();
  chi->add_option("--times", chi_times, "Explicit evaluation times (us)");
  chi->add_option("--t-start", chi_t_start, "Grid start (us)");
  chi->add_option("--t-stop", chi_t_stop, "Grid stop (us)");
  chi->add_option("--n-points", chi_n_points, "Grid size");
  chi->add_flag("--log-spacing", chi_log, "Log-spaced grid");
  chi->add_option("--method", chi_method,
                  "closed|quadrature|spectral|asymptotic-short|asymptotic-long|auto")
      ->capture_default_str();
  chi->add_option("--out", chi_out, "Optional CSV output path");

  // profile
  auto* prof = app.add_subcommand("profile", "Evaluate the analytic disorder-averaged profile");
  SequenceFlags prof_seq;
  prof_seq.attach(prof);
  int prof_dim = 3;
  double prof_alpha = 3.0, prof_tau_c = 1.0, prof_gbar = 1.0;
  std::optional<double> prof_amp, prof_density, prof_jz;
  std::vector<double> prof_times;
  double prof_t_start = 0.0, prof_t_stop = 0.0;
  std::size_t prof_n_points = 0;
  bool prof_log = false;
  std::string prof_method = "auto", prof_out = "profile.csv";
  std::optional<std::string> prof_report;
  prof->add_option("--dimension", prof_dim, "Bath dimensionality D")->required();
  prof->add_option("--alpha", prof_alpha, "Coupling power alpha")->capture_default_str();
  prof->add_option("--tau-c-us", prof_tau_c, "Correlation time (us)")->required();
  prof->add_option("--amplitude", prof_amp, "Phenomenological amplitude A (us^-D/alpha)");
  prof->add_option("--density", prof_density, "Bath density (per nm^D)");
  prof->add_option("--j-z", prof_jz, "Coupling constant (rad/us nm^alpha)");
  prof->add_option("--g-bar", prof_gbar, "Angular average factor")->capture_default_str();
  prof->add_option("--times", prof_times, "Explicit times (us)");
  prof->add_option("--t-start", prof_t_start, "Grid start (us)");
  prof->add_option("--t-stop", prof_t_stop, "Grid stop (us)");
  prof->add_option("--n-points", prof_n_points, "Grid size");
  prof->add_flag("--log-spacing", prof_log, "Log-spaced grid");
  prof->add_option("--method", prof_method, "chi evaluation route")->capture_default_str();
  prof->add_option("--out", prof_out, "Output curve CSV")->capture_default_str();
  prof->add_option("--report", prof_report, "Optional JSON report path");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the decoherence profile to a curve");
  SequenceFlags fit_seq;
  fit_seq.attach(fit);
  std::optional<std::string> fit_curve, fit_deer, fit_echo, fit_report;
  int fit_dim = 0;
  double fit_alpha = 3.0, fit_cut = 0.5;
  std::string fit_space = "both";
  fit->add_option("--curve", fit_curve, "Single curve CSV");
  fit->add_option("--deer", fit_deer, "DEER curve CSV (joint mode)");
  fit->add_option("--echo", fit_echo, "Echo curve CSV (joint mode)");
  fit->add_option("--dimension", fit_dim, "Bath dimensionality D")->required();
  fit->add_option("--alpha", fit_alpha, "Coupling power alpha")->capture_default_str();
  fit->add_option("--space", fit_space, "linear|neglog|both")->capture_default_str();
  fit->add_option("--min-time-cut-us", fit_cut, "Early-time cut (us)")->capture_default_str();
  fit->add_option("--report", fit_report, "JSON report path (default: stdout)");

  // classify-dim
  auto* cls = app.add_subcommand("classify-dim", "Classify bath dimensionality from curves");
  SequenceFlags cls_seq;
  cls_seq.attach(cls);
  std::vector<std::string> cls_curves;
  std::vector<int> cls_candidates;
  double cls_alpha = 3.0, cls_cut = 0.5;
  std::optional<std::string> cls_report;
  cls->add_option("--curves", cls_curves, "Curve CSV paths")->required();
  cls->add_option("--candidates", cls_candidates, "Candidate dimensions (default 2 3)");
  cls->add_option("--alpha", cls_alpha, "Coupling power alpha")->capture_default_str();
  cls->add_option("--min-time-cut-us", cls_cut, "Early-time cut (us)")->capture_default_str();
  cls->add_option("--report", cls_report, "JSON report path (default: stdout)");

  // extract-tauc
  auto* ext = app.add_subcommand("extract-tauc", "Estimate tau_c from a DEER/echo pair");
  std::string ext_deer, ext_echo, ext_policy = "pm10";
  int ext_dim = 0;
  double ext_alpha = 3.0, ext_halfwidth = 0.10, ext_cut = 0.5;
  std::size_t ext_resamples = 200;
  std::uint64_t ext_seed = 20260822ull;
  std::optional<std::string> ext_report;
  ext->add_option("--deer", ext_deer, "DEER curve CSV")->required();
  ext->add_option("--echo", ext_echo, "Echo curve CSV")->required();
  ext->add_option("--dimension", ext_dim, "Bath dimensionality D")->required();
  ext->add_option("--alpha", ext_alpha, "Coupling power alpha")->capture_default_str();
  ext->add_option("--policy", ext_policy, "Normalization policy: pm10|early-interp")
      ->capture_default_str();
  ext->add_option("--n-resamples", ext_resamples, "Resample count (>= 50)")->capture_default_str();
  ext->add_option("--halfwidth", ext_halfwidth, "Normalization half-width")->capture_default_str();
  ext->add_option("--seed", ext_seed, "Resampling seed")->capture_default_str();
  ext->add_option("--min-time-cut-us", ext_cut, "Early-time cut (us)")->capture_default_str();
  ext->add_option("--report", ext_report, "JSON report path (default: stdout)");

  // estimate-density
  auto* den = app.add_subcommand("estimate-density", "Estimate areal density against a family");
  std::string den_curve;
  std::vector<std::string> den_family;
  std::vector<double> den_densities;
  std::optional<std::string> den_baseline, den_report;
  std::optional<double> den_late_cut;
  double den_cut = 0.5;
  den->add_option("--curve", den_curve, "Measured curve CSV")->required();
  den->add_option("--family", den_family, "Simulated family curve CSVs")->required();
  den->add_option("--family-densities", den_densities, "Areal densities (ppm nm), one per member")
      ->required();
  den->add_option("--baseline", den_baseline, "Optional baseline curve divided out");
  den->add_option("--late-cut-us", den_late_cut, "Late-time cut (default: last point)");
  den->add_option("--min-time-cut-us", den_cut, "Early-time cut (us)")->capture_default_str();
  den->add_option("--report", den_report, "JSON report path (default: stdout)");

  // normalize
  auto* nrm = app.add_subcommand("normalize", "Convert raw two-branch contrast to a curve");
  std::string nrm_raw, nrm_out = "normalized.csv";
  double nrm_t0 = 0.0, nrm_t0_sigma = 0.0;
  std::optional<std::string> nrm_report;
  nrm->add_option("--raw", nrm_raw, "Raw contrast CSV (t_us,s0,s1,sigma0,sigma1)")->required();
  nrm->add_option("--t0-value", nrm_t0, "Full-contrast reference s0-s1 at t=0")->required();
  nrm->add_option("--t0-sigma", nrm_t0_sigma, "Uncertainty of the reference")
      ->capture_default_str();
  nrm->add_option("--out", nrm_out, "Output curve CSV")->capture_default_str();
  nrm->add_option("--report", nrm_report, "Optional JSON report path");

  // reproduce
  auto* rep = app.add_subcommand("reproduce", "Run the bundled desk-scale studies");
  std::vector<std::string> rep_scenarios;
  std::string rep_out_dir = "reproduce_out";
  bool rep_quick = false;
  rep->add_option("--scenario", rep_scenarios, "stretch-table|overlap|classifier (default: all)");
  rep->add_option("--out-dir", rep_out_dir, "Artifact directory")->capture_default_str();
  rep->add_flag("--quick", rep_quick, "Reduced-statistics smoke run (widened gates)");
  rep->add_option("--workers", workers, "Worker thread count (results are worker-invariant)");

  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  int rc = 0;
  try {
    if (sim->parsed()) {
      rc = run_simulate(sim_config, sim_out, sim_report, seed_override, workers);
    } else if (chi->parsed()) {
      rc = run_chi(chi_seq, chi_tau_c, chi_times, chi_t_start, chi_t_stop, chi_n_points, chi_log,
                   chi_method, chi_out);
    } else if (prof->parsed()) {
      rc = run_profile(prof_dim, prof_alpha, prof_seq, prof_tau_c, prof_amp, prof_density,
                       prof_jz, prof_gbar, prof_times, prof_t_start, prof_t_stop, prof_n_points,
                       prof_log, prof_method, prof_out, prof_report);
    } else if (fit->parsed()) {
      rc = run_fit(fit_curve, fit_deer, fit_echo, fit_seq, fit_dim, fit_alpha, fit_space,
                   fit_cut, fit_report);
    } else if (cls->parsed()) {
      rc = run_classify(cls_curves, cls_seq, cls_alpha, cls_candidates, cls_cut, cls_report);
    } else if (ext->parsed()) {
      rc = run_extract_tauc(ext_deer, ext_echo, ext_dim, ext_alpha, ext_policy, ext_resamples,
                            ext_halfwidth, ext_seed, ext_cut, ext_report);
    } else if (den->parsed()) {
      rc = run_estimate_density(den_curve, den_family, den_densities, den_baseline, den_late_cut,
                                den_cut, den_report);
    } else if (nrm->parsed()) {
      rc = run_normalize(nrm_raw, nrm_t0, nrm_t0_sigma, nrm_out, nrm_report);
    } else if (rep->parsed()) {
      rc = run_reproduce(rep_scenarios, rep_out_dir, workers, rep_quick);
    }
  } catch (const spinbath::numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    rc = 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = 1;
  }
  const auto t1 = std::chrono::steady_clock::now();
  std::cerr << "wall_time_s="
            << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0
            << '\n';
  return rc;
}
