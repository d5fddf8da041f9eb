#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cellscreen/protocol.hpp"

namespace cellscreen {

// The toolkit's one wire format: '#'-prefixed metadata header, then one
// sample per row. Column names and order are normative.
inline constexpr std::string_view log_csv_columns =
    "time_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index";

/// Write a log as CSV. Floating-point fields use shortest round-trip
/// formatting, so read_log(write_log(x)) recovers x exactly.
void write_log(const time_series_log& log, const std::filesystem::path& file);

/// Read and validate a CSV log. Structural problems (wrong column count,
/// non-monotone time, unparsable fields) raise format_error naming the first
/// offending row. Missing metadata is defaulted with a warning; a
/// "positive=discharge" sign convention is flipped to the internal
/// positive-charging convention on ingest.
time_series_log read_log(const std::filesystem::path& file);
time_series_log read_log(const std::filesystem::path& file,
                         std::vector<std::string>& warnings);

enum class finding_severity { warning, error };

struct log_finding {
  std::size_t row = 0;  // 0-based sample index
  finding_severity severity = finding_severity::warning;
  std::string code;
  std::string message;
};

/// Invariant scan over an in-memory log. Empty result iff all invariants
/// hold; anomalies are reported, never repaired.
std::vector<log_finding> validate_log(const time_series_log& log);

/// Keep every factor-th sample (DI-style rate reduction of a fast log).
time_series_log downsample_log(const time_series_log& log, int factor);

}  // namespace cellscreen
