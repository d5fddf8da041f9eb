#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cellscreen/analysis.hpp"
#include "cellscreen/fleet.hpp"
#include "cellscreen/protocol.hpp"

namespace cellscreen {

/// A pack ready to run: identity, model, and the cycler's C-rate reference.
struct pack_setup {
  std::string pack_id;
  pack_model pack;
  double nominal_capacity_ah = 5.0;
};

pack_setup load_pack_file(const std::filesystem::path& file);
void save_pack_file(const pack_setup& setup, const std::filesystem::path& file);

struct fleet_config {
  int n = 0;
  cell_group_params base;
  aging_spec aging;
};

struct analysis_options {
  double v_max_v = 4.1;
  double v_min_v = 2.95;
  double v_threshold_v = 3.6;
  double min_delta_i_a = 0.0;  // 0 = derive from the log's nominal capacity
  std::vector<int> fit_cells{2, 3, 4};
  int report_cell = 4;
};

/// One reproducible batch: where to write, what to simulate, how to analyze.
/// Exactly one of pack_file / fleet supplies the packs.
struct campaign_config {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::vector<std::string> sequences;  // TS1..TS7, "full", or sequence-file paths
  std::filesystem::path pack_file;
  std::optional<fleet_config> fleet;
  std::optional<double> initial_soc;
  analysis_options analysis;
  screening_thresholds screening;
  run_options run;
  int jobs = 0;  // parallel packs; 0 = hardware concurrency
};

campaign_config campaign_config_from_json(std::string_view text,
                                          const std::filesystem::path& base_dir);
campaign_config load_campaign_config(const std::filesystem::path& file);

struct simulate_result {
  std::vector<std::filesystem::path> log_files;
  std::vector<std::string> aborts;  // one line per aborted pack run
  std::filesystem::path manifest_file;
};

/// Simulate every configured sequence on every pack, one CSV per pack per
/// sequence under out_dir/logs. Sequences chain on the evolving pack state
/// with the inter-sequence rest in between; an abort keeps the partial log.
simulate_result cmd_simulate(const campaign_config& config);

struct analyze_result {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

/// Extract resistance profiles and capacity estimates from every log under
/// out_dir/logs into plot-ready CSVs under out_dir/analysis. Re-running on
/// identical inputs is byte-identical.
analyze_result cmd_analyze(const campaign_config& config);

struct fit_result {
  screening_fit fit;
  std::filesystem::path fit_file;
  std::filesystem::path points_file;
};

/// Assemble (resistance, capacity) points from the analysis outputs (the CI
/// point nearest 4.0 V per interior cell, the slowest-rate capacity) and fit
/// the screening line.
fit_result cmd_fit(const campaign_config& config);

struct screen_request {
  std::filesystem::path fit_file;
  std::optional<double> r_s_ohm;    // either a raw resistance...
  std::filesystem::path log_file;   // ...or a log supplying the near-4 V CI point
  int cell_index = 3;
};

struct screen_result {
  screening_decision decision;
  std::filesystem::path decision_file;
  double v_terminal_v = 0.0;  // terminal voltage of the point used (log source)
  bool from_log = false;
};

screen_result cmd_screen(const campaign_config& config, const screen_request& request);

/// Plot-ready summary CSVs (discharge curves, CI vs HPPC profiles, per-cell
/// profiles, capacity vs resistance) under out_dir/report.
std::vector<std::filesystem::path> cmd_report(const campaign_config& config);

}  // namespace cellscreen
