#pragma once

#include <stdexcept>
#include <string>

namespace excite {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerically invalid data (asymmetric covariance, NaN inputs, ...).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested object would exceed sane size limits.
struct SizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Simulation failure; carries the time of blow-up and, when the failure
/// occurred inside a sampled batch, the index of the offending sample.
struct SimulationError : std::runtime_error {
  double time = 0.0;
  long sample = -1;
  SimulationError(const std::string& msg, double t, long sample_index = -1)
      : std::runtime_error(msg), time(t), sample(sample_index) {}
};

}  // namespace excite
