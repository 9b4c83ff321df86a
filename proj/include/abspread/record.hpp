#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abspread/lattice.hpp"

namespace abspread {

enum class PType : std::uint8_t { A = 0, B = 1 };

inline char type_char(PType t) { return t == PType::A ? 'A' : 'B'; }

struct ParticleSnapshot {
  std::uint32_t id = 0;
  Site pos;
  PType type = PType::A;
};

/// Observables of one replica at one sampling epoch.
struct EpochSample {
  double t = 0.0;
  std::uint64_t n_infected_sites = 0;  // |B~(t)|
  std::uint64_t n_b = 0;
  std::optional<std::int64_t> front_right;  // R(t), d = 1 only
  std::optional<std::int64_t> front_left;   // L(t), d = 1 only
  std::int64_t max_norm_b = 0;
  std::uint64_t n_a_half_region = 0;
  std::vector<ParticleSnapshot> particles;  // sorted by id; empty unless requested
};

struct ExperimentRecord {
  std::string fingerprint;
  int dim = 1;
  std::vector<EpochSample> samples;
};

/// What run_until records and when.
struct SamplingPlan {
  std::vector<double> epochs;       // ascending
  double half_region_slope = 0.0;   // A-count region is C(slope * t / 2)
  bool keep_particles = false;
};

}  // namespace abspread
