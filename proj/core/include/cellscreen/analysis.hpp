#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellscreen/protocol.hpp"

namespace cellscreen {

/// A current step between two consecutive samples. The "before" sample
/// carries the terminal voltages the instant the old current was last
/// applied; the "after" sample is the first one under the new current.
struct current_step_event {
  std::size_t sample_index = 0;  // index of the before-sample
  double t_s = 0.0;              // time of the before-sample
  double i_before_a = 0.0;
  double i_after_a = 0.0;
  std::array<double, 5> v_before_v{};
  std::array<double, 5> v_after_v{};
  double dt_sample_s = 0.0;
};

/// One event per consecutive-sample pair with |delta i| >= min_delta_i,
/// ordered by time. Empty when the log holds no steps.
std::vector<current_step_event> detect_current_steps(const time_series_log& log,
                                                     double min_delta_i_a);

/// Default step-detection threshold: a quarter of the C/10 current, low
/// enough to catch C/20 steps while rejecting sensor noise.
double default_min_delta_i(double nominal_capacity_ah);

enum class rs_method { di, ci, hppc };

std::string_view to_string(rs_method method);
rs_method rs_method_from_string(std::string_view name);

/// One ohmic-resistance evaluation, r_s = dV/dI across a current step.
/// dt_sample is part of the estimate's identity: a longer sample interval
/// captures more RC relaxation and inflates the value, so estimates taken at
/// different rates are not directly comparable.
struct resistance_estimate {
  int cell_index = 0;  // 1..5
  double r_s_ohm = 0.0;
  rs_method method = rs_method::ci;
  double v_terminal_v = 0.0;  // voltage just before the step
  double dt_sample_s = 0.0;
  double delta_i_a = 0.0;
  double t_s = 0.0;
};

/// Eq. r_s = dV/dI for one cell channel of one event.
resistance_estimate estimate_rs(const current_step_event& event, int cell_index,
                                rs_method method);

/// All method-qualifying interrupt measurements of a log for one cell,
/// ordered by terminal voltage. CI selects interruptions of a charging
/// current; DI and HPPC select interruptions of a discharging current.
std::vector<resistance_estimate> rs_voltage_profile(
    const time_series_log& log, int cell_index, rs_method method,
    double min_delta_i_a, double zero_current_eps_a = 1e-6);

struct capacity_estimate {
  int cell_index = 0;
  double capacity_ah = 0.0;
  double v_max_v = 0.0;
  double v_min_v = 0.0;
  double c_rate_per_h = 0.0;  // mean discharge rate over the window
};

/// Coulomb-counted capacity between two voltage set points: the trapezoidal
/// integral of |i| from the first discharging sample at/below v_max to the
/// first at/below v_min. Throws window_error naming the achieved extrema
/// when the log never crosses a set point.
capacity_estimate coulomb_count_capacity(const time_series_log& log,
                                         int cell_index, double v_max_v,
                                         double v_min_v);

struct flatness_report {
  double r_min_ohm = 0.0;
  double r_max_ohm = 0.0;
  double median_ohm = 0.0;
  double spread = 0.0;  // (max - min) / median
  int points_used = 0;
  bool pass = false;
};

/// Flatness of a resistance profile above a terminal-voltage threshold; the
/// basis for treating a single interrupt above the knee as SOC-independent.
flatness_report soc_independence_check(std::span<const resistance_estimate> profile,
                                       double v_threshold_v,
                                       double spread_tolerance = 0.10);

struct method_comparison {
  std::string pack_id;
  double median_ci_ohm = 0.0;
  double median_hppc_ohm = 0.0;
  double dt_ci_s = 0.0;
  double dt_hppc_s = 0.0;
  bool comparable = false;  // identical sampling intervals on both sides
};

/// Median CI vs HPPC resistance for one pack. comparable is false when the
/// two profiles were sampled at different intervals.
method_comparison compare_methods(std::span<const resistance_estimate> ci_profile,
                                  std::span<const resistance_estimate> hppc_profile);

/// True when ranking packs by median resistance gives the same order under
/// both methods.
bool rank_order_preserved(std::span<const method_comparison> packs);

struct fit_point {
  double r_s_ohm = 0.0;
  double capacity_ah = 0.0;
};

/// Ordinary least squares of capacity on resistance, with goodness of fit
/// and per-point residuals. The observed resistance range is kept so that
/// later screening can flag extrapolation.
struct screening_fit {
  double slope_ah_per_ohm = 0.0;
  double intercept_ah = 0.0;
  double r_squared = 0.0;
  int n = 0;
  std::vector<double> residuals_ah;
  double r_s_min_ohm = 0.0;
  double r_s_max_ohm = 0.0;
};

screening_fit fit_capacity_resistance(std::span<const fit_point> points);

enum class screening_class { pass, review, reject };

std::string_view to_string(screening_class cls);

struct screening_thresholds {
  double pass_fraction = 0.80;    // retirement criterion
  double reject_fraction = 0.70;  // pass_fraction - 10 points by default
  double nominal_capacity_ah = 5.0;
};

struct screening_decision {
  double r_s_ohm = 0.0;
  double predicted_capacity_ah = 0.0;
  screening_class cls = screening_class::review;
  screening_thresholds thresholds;
  bool extrapolated = false;  // r_s outside the fit's observed range
};

screening_decision screen_cell(double r_s_ohm, const screening_fit& fit,
                               const screening_thresholds& thresholds);

/// The profile point whose terminal voltage is nearest the target (4.0 V by
/// default), the recommended screening input. Null when the profile is empty.
const resistance_estimate* select_screening_point(
    std::span<const resistance_estimate> profile, double v_target_v = 4.0);

std::string fit_to_json(const screening_fit& fit);
screening_fit fit_from_json(std::string_view text);
std::string decision_to_json(const screening_decision& decision);

}  // namespace cellscreen
