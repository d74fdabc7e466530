#ifndef HOMOG_CONFIG_HPP
#define HOMOG_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "homog/ensemble.hpp"

namespace homog {

/// Full experiment description: the ensemble parameters plus the pieces
/// specific subcommands need. Parsed from a sectioned key/value file;
/// unknown sections or keys are rejected and parse -> serialize -> parse
/// is value-identical.
struct ExperimentConfig {
  EnsembleConfig ensemble;

  // [medium] for solve-corrector (defaults reproduce the ensemble's map)
  std::string medium_type = "gaussian";  // gaussian | laminate | checkerboard | constant
  int medium_axis = 0;
  double medium_hi = 1.0;
  double medium_lo = 0.5;
  int stripe_period = 0;  // 0 = one stripe pair across the torus
  int checker_cell = 1;
  bool flux_corrector = true;

  // [scan] for growth-scan (sides) and degeneracy-scan (z grid)
  std::vector<int> scan_sides;
  long scan_samples = 64;
  std::vector<double> scan_z;

  // [sample] for sample-field
  long field_count = 4;
  std::vector<std::vector<int>> lags;

  // [run]
  int workers = 1;
  bool quiet = false;
  std::string out_dir = "out";

  std::string serialize() const;
  /// FNV-1a hash of the canonical serialization, hex-encoded.
  std::string hash() const;
};

/// Parses the sectioned key/value format; throws std::runtime_error with a
/// line-anchored message on malformed input or unknown keys.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace homog

#endif
