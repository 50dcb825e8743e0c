#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "spinbath/curve.hpp"
#include "spinbath/errors.hpp"
#include "spinbath/hash.hpp"
#include "spinbath/inference.hpp"
#include "spinbath/monte_carlo.hpp"
#include "spinbath/profiles.hpp"
#include "spinbath/version.hpp"

namespace spinbath {

using json = nlohmann::ordered_json;

// File contracts: curve CSV `t_us,coherence,stderr` with 17-significant-digit
// decimal text (bit-exact round trips), raw contrast CSV
// `t_us,s0,s1,sigma0,sigma1`, fail-closed JSON run configs, and deterministic
// JSON reports.

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const auto got = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline void save_curve(const std::string& path, const CoherenceCurve& curve) {
  curve.require_consistent();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << "t_us,coherence,stderr\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double se = curve.stderr_.empty() ? 0.0 : curve.stderr_[i];
    out << canonical_double(curve.times_us[i]) << ',' << canonical_double(curve.coherence[i])
        << ',' << canonical_double(se) << '\n';
  }
  if (!out) throw std::invalid_argument("write failed: " + path);
}

inline void save_beta_table(const std::string& path, const LocalStretchSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << "t_us,beta,beta_err\n";
  for (std::size_t i = 0; i < series.times_us.size(); ++i) {
    out << canonical_double(series.times_us[i]) << ',' << canonical_double(series.beta[i]) << ','
        << canonical_double(series.beta_err[i]) << '\n';
  }
  if (!out) throw std::invalid_argument("write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_number(const std::string& cell, const std::string& path, std::size_t line_no) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": not a number: '" +
                                cell + "'");
  }
  while (consumed < cell.size() &&
         (cell[consumed] == ' ' || cell[consumed] == '\r' || cell[consumed] == '\t')) {
    ++consumed;
  }
  if (consumed != cell.size()) {
    throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": trailing junk in '" +
                                cell + "'");
  }
  return v;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

inline CoherenceCurve load_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != "t_us,coherence,stderr") {
    throw std::invalid_argument(path + ":1: expected header 't_us,coherence,stderr'");
  }
  CoherenceCurve curve;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_row(line);
    if (cells.size() != 3) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected 3 columns, got " +
                                  std::to_string(cells.size()));
    }
    const double t = detail::parse_number(cells[0], path, line_no);
    if (!curve.times_us.empty() && !(t > curve.times_us.back())) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": t_us not strictly increasing (" + cells[0] + ")");
    }
    curve.times_us.push_back(t);
    curve.coherence.push_back(detail::parse_number(cells[1], path, line_no));
    curve.stderr_.push_back(detail::parse_number(cells[2], path, line_no));
  }
  if (curve.times_us.empty()) throw std::invalid_argument(path + ": no data rows");
  curve.require_consistent();
  return curve;
}

struct RawContrast {
  SampledSeries s0, s1;
};

inline RawContrast load_raw_contrast(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != "t_us,s0,s1,sigma0,sigma1") {
    throw std::invalid_argument(path + ":1: expected header 't_us,s0,s1,sigma0,sigma1'");
  }
  RawContrast raw;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_row(line);
    if (cells.size() != 5) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected 5 columns, got " +
                                  std::to_string(cells.size()));
    }
    const double t = detail::parse_number(cells[0], path, line_no);
    if (!raw.s0.times_us.empty() && !(t > raw.s0.times_us.back())) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": t_us not strictly increasing (" + cells[0] + ")");
    }
    raw.s0.times_us.push_back(t);
    raw.s1.times_us.push_back(t);
    raw.s0.values.push_back(detail::parse_number(cells[1], path, line_no));
    raw.s1.values.push_back(detail::parse_number(cells[2], path, line_no));
    raw.s0.stderr_.push_back(detail::parse_number(cells[3], path, line_no));
    raw.s1.stderr_.push_back(detail::parse_number(cells[4], path, line_no));
  }
  if (raw.s0.times_us.empty()) throw std::invalid_argument(path + ": no data rows");
  return raw;
}

// --- fail-closed JSON run configuration ------------------------------------

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown field '" + item.key() + "' in " + where);
    }
  }
}

inline double require_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw std::invalid_argument("config: missing '" + key + "' in " + where);
  if (!obj[key].is_number()) {
    throw std::invalid_argument("config: '" + key + "' in " + where + " must be a number");
  }
  return obj[key].get<double>();
}

inline std::string require_string(const json& obj, const std::string& key,
                                  const std::string& where) {
  if (!obj.contains(key)) throw std::invalid_argument("config: missing '" + key + "' in " + where);
  if (!obj[key].is_string()) {
    throw std::invalid_argument("config: '" + key + "' in " + where + " must be a string");
  }
  return obj[key].get<std::string>();
}

}  // namespace detail

inline GeometrySpec parse_geometry_config(const json& obj) {
  if (!obj.is_object()) throw std::invalid_argument("config: 'geometry' must be an object");
  detail::reject_unknown_keys(
      obj,
      {"dimension", "alpha", "density_per_nm1", "density_per_nm2", "density_per_nm3",
       "slab_thickness_nm", "region_radius_nm", "j_z_rad_per_us_nm_alpha", "exclusion_radius_nm",
       "angular_model", "tail_fraction"},
      "geometry");
  GeometrySpec g;
  g.dimension = static_cast<int>(detail::require_number(obj, "dimension", "geometry"));
  g.alpha = detail::require_number(obj, "alpha", "geometry");
  const std::string density_key = "density_per_nm" + std::to_string(g.dimension);
  for (int d = 1; d <= 3; ++d) {
    const std::string k = "density_per_nm" + std::to_string(d);
    if (obj.contains(k) && k != density_key) {
      throw std::invalid_argument("config: '" + k + "' does not match dimension " +
                                  std::to_string(g.dimension));
    }
  }
  g.density = detail::require_number(obj, density_key, "geometry");
  if (obj.contains("slab_thickness_nm")) {
    g.slab_thickness_nm = detail::require_number(obj, "slab_thickness_nm", "geometry");
  }
  if (obj.contains("region_radius_nm")) {
    g.region_radius_nm = detail::require_number(obj, "region_radius_nm", "geometry");
  }
  g.j_z = detail::require_number(obj, "j_z_rad_per_us_nm_alpha", "geometry");
  if (obj.contains("exclusion_radius_nm")) {
    g.exclusion_radius_nm = detail::require_number(obj, "exclusion_radius_nm", "geometry");
  }
  if (obj.contains("angular_model")) {
    const auto name = detail::require_string(obj, "angular_model", "geometry");
    if (name == "isotropic") {
      g.angular = AngularModel::Isotropic;
    } else if (name == "secular_dipolar") {
      g.angular = AngularModel::SecularDipolar;
    } else {
      throw std::invalid_argument("config: angular_model must be isotropic|secular_dipolar");
    }
  }
  if (obj.contains("tail_fraction")) {
    g.tail_fraction = detail::require_number(obj, "tail_fraction", "geometry");
  }
  return g;
}

inline NoiseModelSpec parse_noise_config(const json& obj) {
  if (!obj.is_object()) throw std::invalid_argument("config: 'noise' must be an object");
  detail::reject_unknown_keys(obj, {"kind", "tau_c_us", "drive"}, "noise");
  NoiseModelSpec n;
  const auto kind = detail::require_string(obj, "kind", "noise");
  if (kind == "gauss_markov") {
    n.kind = NoiseKind::GaussMarkov;
  } else if (kind == "telegraph") {
    n.kind = NoiseKind::Telegraph;
  } else if (kind == "driven_spin") {
    n.kind = NoiseKind::DrivenSpin;
  } else if (kind == "static") {
    n.kind = NoiseKind::Static;
  } else {
    throw std::invalid_argument("config: noise kind must be gauss_markov|telegraph|driven_spin|static");
  }
  if (obj.contains("tau_c_us")) n.tau_c_us = detail::require_number(obj, "tau_c_us", "noise");
  if (n.kind == NoiseKind::DrivenSpin) {
    if (!obj.contains("drive")) throw std::invalid_argument("config: driven_spin needs 'drive'");
    const auto& dr = obj["drive"];
    detail::reject_unknown_keys(dr, {"rabi_rad_per_us", "linewidth_rad_per_us", "sample_step_us"},
                                "noise.drive");
    DriveSpec d;
    d.rabi_rad_per_us = detail::require_number(dr, "rabi_rad_per_us", "noise.drive");
    d.linewidth_rad_per_us = detail::require_number(dr, "linewidth_rad_per_us", "noise.drive");
    d.sample_step_us = detail::require_number(dr, "sample_step_us", "noise.drive");
    n.drive = d;
  } else if (obj.contains("drive")) {
    throw std::invalid_argument("config: 'drive' only applies to driven_spin noise");
  }
  return n;
}

inline SequenceSpec parse_sequence_config(const json& obj) {
  if (!obj.is_object()) throw std::invalid_argument("config: 'sequence' must be an object");
  detail::reject_unknown_keys(obj, {"kind", "tau_p_us"}, "sequence");
  SequenceSpec s;
  const auto kind = detail::require_string(obj, "kind", "sequence");
  if (kind == "deer" || kind == "ramsey") {
    s.kind = SequenceKind::RamseyDeer;
  } else if (kind == "echo") {
    s.kind = SequenceKind::SpinEcho;
  } else if (kind == "xy8") {
    s.kind = SequenceKind::XY8;
  } else {
    throw std::invalid_argument("config: sequence kind must be deer|ramsey|echo|xy8");
  }
  s.label = kind;
  if (obj.contains("tau_p_us")) s.tau_p_us = detail::require_number(obj, "tau_p_us", "sequence");
  return s;
}

inline std::vector<double> parse_times_config(const json& node) {
  std::vector<double> times;
  if (node.is_array()) {
    for (const auto& v : node) {
      if (!v.is_number()) throw std::invalid_argument("config: times_us entries must be numbers");
      times.push_back(v.get<double>());
    }
  } else if (node.is_object()) {
    detail::reject_unknown_keys(node, {"start_us", "stop_us", "n_points", "spacing"}, "times_us");
    const double start = detail::require_number(node, "start_us", "times_us");
    const double stop = detail::require_number(node, "stop_us", "times_us");
    const auto n = static_cast<std::size_t>(detail::require_number(node, "n_points", "times_us"));
    const auto spacing = detail::require_string(node, "spacing", "times_us");
    if (n < 2 || !(stop > start)) throw std::invalid_argument("config: bad times_us generator");
    for (std::size_t i = 0; i < n; ++i) {
      const double f = static_cast<double>(i) / static_cast<double>(n - 1);
      if (spacing == "linear") {
        times.push_back(start + f * (stop - start));
      } else if (spacing == "log") {
        if (!(start > 0.0)) throw std::invalid_argument("config: log spacing needs start_us > 0");
        times.push_back(start * std::pow(stop / start, f));
      } else {
        throw std::invalid_argument("config: spacing must be linear|log");
      }
    }
  } else {
    throw std::invalid_argument("config: times_us must be an array or generator object");
  }
  return times;
}

struct RunConfig {
  int version = 1;
  EnsembleSpec ensemble;
};

inline RunConfig parse_run_config(const json& root) {
  if (!root.is_object()) throw std::invalid_argument("config: root must be an object");
  detail::reject_unknown_keys(root,
                              {"version", "geometry", "noise", "sequence", "times_us",
                               "n_realizations", "master_seed", "dt_us", "geometry_mode"},
                              "root");
  RunConfig cfg;
  cfg.version = static_cast<int>(detail::require_number(root, "version", "root"));
  if (cfg.version != 1) throw std::invalid_argument("config: unsupported version");
  if (!root.contains("geometry") || !root.contains("noise") || !root.contains("sequence") ||
      !root.contains("times_us")) {
    throw std::invalid_argument("config: geometry, noise, sequence and times_us are required");
  }
  cfg.ensemble.geometry = parse_geometry_config(root["geometry"]);
  cfg.ensemble.noise = parse_noise_config(root["noise"]);
  cfg.ensemble.sequence = parse_sequence_config(root["sequence"]);
  cfg.ensemble.times_us = parse_times_config(root["times_us"]);
  cfg.ensemble.n_realizations =
      static_cast<std::size_t>(detail::require_number(root, "n_realizations", "root"));
  cfg.ensemble.master_seed =
      static_cast<std::uint64_t>(detail::require_number(root, "master_seed", "root"));
  cfg.ensemble.dt_us = detail::require_number(root, "dt_us", "root");
  if (root.contains("geometry_mode")) {
    const auto mode = detail::require_string(root, "geometry_mode", "root");
    if (mode == "resample") {
      cfg.ensemble.geometry_mode = GeometryMode::Resample;
    } else if (mode == "frozen") {
      throw std::invalid_argument("config: frozen geometry mode is API-only (needs a configuration)");
    } else {
      throw std::invalid_argument("config: geometry_mode must be resample|frozen");
    }
  }
  cfg.ensemble.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  try {
    return parse_run_config(root);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + " (config " + path + ")");
  }
}

// --- reports ----------------------------------------------------------------

struct Report {
  std::string command;
  std::vector<std::pair<std::string, std::uint64_t>> inputs;  // path, content hash
  json parameters = json::object();
  json results = json::object();
  std::uint64_t master_seed = 0;
};

// Wall time deliberately stays out of the artifact (it goes to the diagnostic
// stream) so identical runs produce byte-identical reports.
inline void write_report(const std::string& path, const Report& report) {
  json doc;
  doc["command"] = report.command;
  json inputs = json::array();
  for (const auto& [p, h] : report.inputs) {
    json entry;
    entry["path"] = p;
    entry["fnv1a64"] = hex_digest(h);
    inputs.push_back(entry);
  }
  doc["inputs"] = inputs;
  doc["parameters"] = report.parameters;
  doc["results"] = report.results;
  doc["toolkit_version"] = kToolkitVersion;
  doc["master_seed"] = report.master_seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write report: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::invalid_argument("write failed: " + path);
}

}  // namespace spinbath
