#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cellscreen/ecm.hpp"

namespace cellscreen {

enum class step_kind {
  cc_charge,
  cc_discharge,
  cv_hold,
  rest,
  charge_with_interrupts,
  discharge_with_interrupts,
  pulse_train,
};

std::string_view to_string(step_kind kind);
step_kind step_kind_from_string(std::string_view name);  // usage_error if unknown

/// One declarative schedule element. c_rate carries the magnitude; the sign
/// is implied by the kind. Fields not used by a kind are ignored.
struct protocol_step {
  step_kind kind = step_kind::rest;
  double c_rate_per_h = 0.0;        // commanded rate for cc/interrupt/pulse/cv bound
  double v_limit_per_cell_v = 0.0;  // per-cell termination for cc/interrupt/pulse steps
  double hold_voltage_v = 0.0;      // cv_hold set point
  double i_cutoff_c_rate = 0.0;     // cv_hold termination rate
  double interval_s = 0.0;          // charging seconds between interrupts
  double interrupt_s = 0.0;         // zero-current window length
  double pulse_s = 0.0;             // pulse_train discharge pulse length
  double rest_s = 0.0;              // pulse_train rest length, or rest-step duration
  std::vector<double> trigger_voltages_v;  // discharge interrupt trigger voltages
  int monitored_cell = 3;           // 1..5 cell gating the voltage triggers
  double sampling_hz = 1.0;

  void validate() const;  // throws usage_error
  friend bool operator==(const protocol_step&, const protocol_step&) = default;
};

/// Ordered steps plus the rest inserted between them when executed. The rest
/// is skipped ahead of a cv_hold so that CCCV pairs stay contiguous.
struct test_sequence {
  std::string name;
  std::vector<protocol_step> steps;
  double inter_step_rest_s = 0.0;

  friend bool operator==(const test_sequence&, const test_sequence&) = default;
};

enum class sequence_kind { ts1, ts2, ts3, ts4, ts5, ts6, ts7, full_campaign };

sequence_kind sequence_kind_from_string(std::string_view name);  // usage_error
std::string_view to_string(sequence_kind kind);

/// The published characterization schedule:
///   TS1 C/3 charge + C/3 discharge          TS5 C/20 discharge
///   TS2 C/2 charge, C/2.5 discharge with    TS6 C/20 charge
///       interrupts at 4.0 V / 3.2 V, 1 Hz   TS7 C/3.33 pulse train, 600 s
///   TS3 C/3 charge, C/2 discharge               pulses, 3600 s rests, 10 Hz
///   TS4 C/3 charge, 560 s / 20 s interrupts, 10 Hz
/// full_campaign concatenates TS1..TS7 with 1800 s rests between sequences.
/// Charges are CCCV to 4.20 V per cell; discharges run to 2.80 V per cell
/// (2.95 V for the TS7 pulse floor). Output is bit-stable across runs.
test_sequence build_standard_sequence(sequence_kind kind);

struct log_sample {
  double t_s = 0.0;
  double i_pack_a = 0.0;
  std::array<double, 5> v_cell_v{};
  int step_index = 0;
};

struct log_metadata {
  std::string pack_id;
  std::string sequence_name;
  double nominal_capacity_ah = 5.0;
  bool positive_is_charge = true;
};

/// The interchange record between simulation and analysis: one row per
/// sample, five voltage channels, strictly increasing time.
struct time_series_log {
  log_metadata meta;
  std::vector<log_sample> samples;
};

struct safety_limits {
  double v_min_v = 2.5;
  double v_max_v = 4.25;
};

struct run_options {
  double dt_s = 0.1;  // must divide every step's sampling period
  safety_limits safety{};
  double nominal_capacity_ah = 5.0;  // C-rate reference (cycler set point)
  double max_step_s = 1.0e6;         // watchdog against non-terminating steps
  std::string pack_id;
};

struct run_result {
  time_series_log log;
  bool aborted = false;
  std::string abort_reason;
  std::vector<protocol_step> executed_steps;  // steps plus materialized rests
};

/// Execute a sequence against the pack, mutating its state and sampling at
/// each step's rate. Step transitions land on sample instants; a cc step ends
/// when ANY cell crosses its per-cell limit. A safety violation stops the run
/// and returns the log collected so far with the reason.
run_result run_protocol(pack_model& pack, const test_sequence& seq,
                        const run_options& opt);

/// Current commanded by a C-rate: current = c_rate * capacity.
double c_rate_to_current(double c_rate_per_h, double capacity_ah);

std::string sequence_to_json(const test_sequence& seq);
test_sequence sequence_from_json(std::string_view text);
void save_sequence(const test_sequence& seq, const std::filesystem::path& file);
test_sequence load_sequence(const std::filesystem::path& file);

}  // namespace cellscreen
