#pragma once

#include <array>
#include <span>
#include <vector>

namespace cellscreen {

struct ocv_point {
  double soc = 0.0;
  double voltage_v = 0.0;
  friend bool operator==(const ocv_point&, const ocv_point&) = default;
};

/// Monotone open-circuit-voltage table over the full state-of-charge range.
/// Knots must run from soc 0 to soc 1, strictly increasing in both
/// coordinates, with every voltage inside [2.0, 4.5] V.
class ocv_curve {
 public:
  explicit ocv_curve(std::vector<ocv_point> points);

  /// Piecewise-linear interpolation, exact at knots. soc must lie in [0, 1].
  double lookup(double soc) const;

  std::span<const ocv_point> points() const { return points_; }
  double voltage_at_empty() const { return points_.front().voltage_v; }
  double voltage_at_full() const { return points_.back().voltage_v; }

  /// Built-in NMC-like 21-knot table, 2.50-4.20 V with the steep knee below
  /// 3.4 V that dominates the low-SOC end of the discharge curve.
  static const ocv_curve& default_nmc();

  friend bool operator==(const ocv_curve&, const ocv_curve&) = default;

 private:
  std::vector<ocv_point> points_;
};

/// Electrical parameters of one lumped parallel cell pair (the two physical
/// 18650s are folded into one group: capacity summed, resistance halved).
/// r_tab_ohm is external current-path resistance included in the measured
/// voltage; it is nonzero only for the two end groups of a pack.
struct cell_group_params {
  double capacity_ah = 5.0;
  double r_s_ohm = 0.030;
  double r_1_ohm = 0.010;
  double c_1_f = 5000.0;
  double r_tab_ohm = 0.0;
  ocv_curve ocv = ocv_curve::default_nmc();

  void validate() const;  // throws std::domain_error on violated bounds
};

struct cell_group_state {
  double soc = 1.0;
  double v_rc_v = 0.0;
};

struct group_step_result {
  cell_group_state state;
  double voltage_v = 0.0;
};

/// Advance one forward-Euler step of at most 1 s. Positive current charges;
/// soc saturates at 0/1 instead of erroring (a real cell parked at its OCV
/// extreme). With r_1 == 0 the RC branch is disabled and the voltage response
/// to a current step is purely ohmic.
group_step_result step_group(const cell_group_state& state,
                             const cell_group_params& params, double current_a,
                             double dt_s);

/// Measured voltage at zero current (OCV plus whatever is left on the RC
/// branch).
double open_circuit_voltage(const cell_group_state& state,
                            const cell_group_params& params);

/// Five lumped groups in series (the 2P5S pack). The same pack current flows
/// through every group; each group's voltage is measured at its own tap.
class pack_model {
 public:
  static constexpr int group_count = 5;

  pack_model(std::array<cell_group_params, group_count> groups,
             std::array<cell_group_state, group_count> states);

  const cell_group_params& group(int index) const { return groups_[index]; }
  const std::array<cell_group_state, group_count>& states() const {
    return states_;
  }
  void set_states(const std::array<cell_group_state, group_count>& states) {
    states_ = states;
  }
  void set_soc(double soc);

  /// Step every group with the shared pack current; returns the five measured
  /// voltages after the step.
  std::array<double, group_count> step(double current_a, double dt_s);

  std::array<double, group_count> open_circuit_voltages() const;

 private:
  std::array<cell_group_params, group_count> groups_;
  std::array<cell_group_state, group_count> states_;
};

/// Pack of five groups sharing the interior parameters, with the end groups
/// (1 and 5) given the current-carrying tab resistance.
pack_model make_uniform_pack(const cell_group_params& interior,
                             double r_tab_end_ohm = 0.0,
                             double initial_soc = 1.0);

}  // namespace cellscreen
