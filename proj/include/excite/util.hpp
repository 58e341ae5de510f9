#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace excite {

/// Global worker-thread cap (0 = hardware concurrency).
void set_max_threads(int n);
int max_threads();

/// Runs fn(i) for i in [0, n). Each index writes only its own slot, so the
/// result is independent of the schedule. Exceptions are rethrown from the
/// first failing index.
void parallel_for(int n, const std::function<void(int)>& fn);

/// printf-style %.17g, round-trips doubles exactly.
std::string format_double(double v);
/// Shorter form for CSV output.
std::string format_csv(double v);

/// Writes via a temporary file in the same directory and renames into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

/// FNV-1a 64-bit, used to fingerprint configs in run metadata.
std::uint64_t fnv1a(const std::string& data);

std::string iso8601_now();

}  // namespace excite
