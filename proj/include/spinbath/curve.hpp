#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinbath {

// Shared result type for simulated and measured coherence traces.
struct CoherenceCurve {
  std::vector<double> times_us;
  std::vector<double> coherence;
  std::vector<double> stderr_;   // empty for noiseless analytic curves
  std::vector<double> sin_mean;  // <sin phi> diagnostic, empty unless simulated
  std::vector<std::string> warnings;
  std::uint64_t spec_hash = 0;
  std::uint64_t master_seed = 0;

  std::size_t size() const { return times_us.size(); }

  void require_consistent() const {
    if (coherence.size() != times_us.size()) {
      throw std::invalid_argument("CoherenceCurve: times/coherence length mismatch");
    }
    if (!stderr_.empty() && stderr_.size() != times_us.size()) {
      throw std::invalid_argument("CoherenceCurve: stderr length mismatch");
    }
    for (std::size_t i = 1; i < times_us.size(); ++i) {
      if (!(times_us[i] > times_us[i - 1])) {
        throw std::invalid_argument("CoherenceCurve: times must be strictly increasing");
      }
    }
  }
};

}  // namespace spinbath
