// CSV interchange for cycler logs: writer, validating reader, invariant scan.

#include "cellscreen/ingest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "cellscreen/diag.hpp"
#include "cellscreen/errors.hpp"
#include "num_format.hpp"

namespace cellscreen {

using detail::append_double;
using detail::parse_double;

namespace {

constexpr int k_columns = 8;

// Splits a header line of the form "# key: value".
bool parse_meta_line(std::string_view line, std::string& key, std::string& value) {
  if (line.empty() || line[0] != '#') return false;
  std::string_view body = line.substr(1);
  const auto colon = body.find(':');
  if (colon == std::string_view::npos) return false;
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
  };
  key = trim(body.substr(0, colon));
  value = trim(body.substr(colon + 1));
  return true;
}

}  // namespace

void write_log(const time_series_log& log, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + file.string() + " for writing");
  }

  std::string text;
  text.reserve(256 + log.samples.size() * 96);
  text += "# pack_id: " + log.meta.pack_id + "\n";
  text += "# sequence_name: " + log.meta.sequence_name + "\n";
  text += "# nominal_capacity_ah: ";
  append_double(text, log.meta.nominal_capacity_ah);
  text += "\n# sign_convention: positive=charge\n";
  text += log_csv_columns;
  text += "\n";

  // Timestamps keep their exact shortest form (spacing checks compare them
  // at 1e-6 s over multi-day runs); currents and voltages carry 12
  // significant digits, comfortably inside the 1e-9 round-trip contract.
  for (const auto& s : log.samples) {
    append_double(text, s.t_s);
    text += ',';
    detail::append_double_12(text, s.i_pack_a);
    for (double v : s.v_cell_v) {
      text += ',';
      detail::append_double_12(text, v);
    }
    text += ',';
    text += std::to_string(s.step_index);
    text += '\n';
    if (text.size() > (1u << 22)) {
      out.write(text.data(), static_cast<std::streamsize>(text.size()));
      text.clear();
    }
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw std::runtime_error("write failed for " + file.string());
  }
}

time_series_log read_log(const std::filesystem::path& file) {
  std::vector<std::string> warnings;
  auto log = read_log(file, warnings);
  for (const auto& w : warnings) diag_info(file.string() + ": " + w);
  return log;
}

time_series_log read_log(const std::filesystem::path& file,
                         std::vector<std::string>& warnings) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + file.string() + " for reading");
  }
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::string text(size > 0 ? static_cast<std::size_t>(size) : 0, '\0');
  if (!text.empty()) in.read(text.data(), size);
  if (!in) {
    throw std::runtime_error("read failed for " + file.string());
  }

  time_series_log log;
  bool have_pack_id = false, have_sequence = false, have_nominal = false,
       have_sign = false, header_seen = false;
  bool flip_sign = false;
  std::size_t row = 0;  // sample rows parsed so far

  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty()) continue;

    if (line[0] == '#') {
      std::string key, value;
      if (!parse_meta_line(line, key, value)) {
        warnings.push_back("unrecognized metadata line ignored: " + std::string(line));
        continue;
      }
      if (key == "pack_id") {
        log.meta.pack_id = value;
        have_pack_id = true;
      } else if (key == "sequence_name") {
        log.meta.sequence_name = value;
        have_sequence = true;
      } else if (key == "nominal_capacity_ah") {
        log.meta.nominal_capacity_ah = parse_double(value, format_error::no_row, "nominal_capacity_ah");
        have_nominal = true;
      } else if (key == "sign_convention") {
        if (value == "positive=charge") {
          flip_sign = false;
        } else if (value == "positive=discharge") {
          flip_sign = true;
        } else {
          throw format_error("unknown sign_convention '" + value + "'");
        }
        have_sign = true;
      } else {
        warnings.push_back("unknown metadata key '" + key + "' ignored");
      }
      continue;
    }

    if (!header_seen) {
      if (line != log_csv_columns) {
        throw format_error("unexpected column header '" + std::string(line) + "'");
      }
      header_seen = true;
      continue;
    }

    // Data row.
    log_sample s;
    int field = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      auto comma = line.find(',', start);
      const bool last = comma == std::string_view::npos;
      std::string_view cell = line.substr(start, last ? std::string_view::npos : comma - start);
      switch (field) {
        case 0: s.t_s = parse_double(cell, row, "time_s"); break;
        case 1: s.i_pack_a = parse_double(cell, row, "i_pack_a"); break;
        case 2: case 3: case 4: case 5: case 6:
          s.v_cell_v[field - 2] = parse_double(cell, row, "cell voltage");
          break;
        case 7: {
          int idx = 0;
          auto res = std::from_chars(cell.data(), cell.data() + cell.size(), idx);
          if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
            throw format_error("cannot parse step_index from '" + std::string(cell) + "'", row);
          }
          s.step_index = idx;
          break;
        }
        default:
          throw format_error("expected 8 columns, found more", row);
      }
      ++field;
      if (last) break;
      start = comma + 1;
    }
    if (field != k_columns) {
      throw format_error("expected 8 columns, found " + std::to_string(field), row);
    }
    if (!log.samples.empty() && s.t_s <= log.samples.back().t_s) {
      throw format_error("time_s not strictly increasing (" +
                             std::to_string(s.t_s) + " after " +
                             std::to_string(log.samples.back().t_s) + ")",
                         row);
    }
    if (flip_sign) s.i_pack_a = -s.i_pack_a;
    log.samples.push_back(s);
    ++row;
  }

  if (!header_seen) {
    throw format_error("missing column header line");
  }
  if (!have_pack_id) warnings.push_back("missing pack_id metadata; defaulted to ''");
  if (!have_sequence) warnings.push_back("missing sequence_name metadata; defaulted to ''");
  if (!have_nominal) {
    warnings.push_back("missing nominal_capacity_ah metadata; defaulted to 5");
  }
  if (!have_sign) {
    warnings.push_back("missing sign_convention metadata; assumed positive=charge");
  }
  return log;
}

std::vector<log_finding> validate_log(const time_series_log& log) {
  std::vector<log_finding> findings;
  const auto& s = log.samples;

  for (std::size_t i = 0; i < s.size(); ++i) {
    bool finite = std::isfinite(s[i].t_s) && std::isfinite(s[i].i_pack_a);
    for (double v : s[i].v_cell_v) finite = finite && std::isfinite(v);
    if (!finite) {
      findings.push_back({i, finding_severity::error, "non_finite",
                          "non-finite value in row " + std::to_string(i)});
    }
  }

  std::vector<bool> time_anomaly(s.size(), false);
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].t_s == s[i - 1].t_s) {
      time_anomaly[i] = true;
      findings.push_back({i, finding_severity::error, "duplicate_time",
                          "duplicated timestamp " + std::to_string(s[i].t_s)});
    } else if (s[i].t_s < s[i - 1].t_s) {
      time_anomaly[i] = true;
      findings.push_back({i, finding_severity::error, "time_not_increasing",
                          "time decreases at row " + std::to_string(i)});
    }
  }

  // Within one step the spacing must match that step's sampling period; the
  // expected period is taken from the first pair inside the step block. Rows
  // already flagged for a time anomaly are not re-reported.
  std::size_t block_start = 0;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    const bool block_end = i == s.size() || s[i].step_index != s[block_start].step_index;
    if (!block_end) continue;
    if (i - block_start >= 3) {
      const double period = s[block_start + 1].t_s - s[block_start].t_s;
      for (std::size_t k = block_start + 2; k < i; ++k) {
        if (time_anomaly[k]) continue;
        const double gap = s[k].t_s - s[k - 1].t_s;
        if (std::abs(gap - period) > 1e-6) {
          std::ostringstream os;
          os << "irregular spacing in step " << s[block_start].step_index
             << ": gap of " << gap << " s at row " << k << " (expected "
             << period << " s)";
          findings.push_back({k, finding_severity::warning, "irregular_spacing", os.str()});
        }
      }
    }
    block_start = i;
  }
  return findings;
}

time_series_log downsample_log(const time_series_log& log, int factor) {
  if (factor < 1) throw usage_error("downsample factor must be >= 1");
  time_series_log out;
  out.meta = log.meta;
  out.samples.reserve(log.samples.size() / static_cast<std::size_t>(factor) + 1);
  for (std::size_t i = 0; i < log.samples.size(); i += static_cast<std::size_t>(factor)) {
    out.samples.push_back(log.samples[i]);
  }
  return out;
}

}  // namespace cellscreen
