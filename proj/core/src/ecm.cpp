// Equivalent-circuit model of a lumped cell group and the 2P5S pack.

#include "cellscreen/ecm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cellscreen/errors.hpp"

namespace cellscreen {

ocv_curve::ocv_curve(std::vector<ocv_point> points) : points_(std::move(points)) {
  if (points_.size() < 2) {
    throw std::domain_error("OCV curve needs at least two knots");
  }
  if (points_.front().soc != 0.0 || points_.back().soc != 1.0) {
    throw std::domain_error("OCV curve must span soc 0 to soc 1");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (!std::isfinite(p.soc) || !std::isfinite(p.voltage_v)) {
      throw std::domain_error("OCV knot with non-finite value");
    }
    if (p.voltage_v < 2.0 || p.voltage_v > 4.5) {
      throw std::domain_error("OCV voltage outside [2.0, 4.5] V at knot " +
                              std::to_string(i));
    }
    if (i > 0) {
      if (p.soc <= points_[i - 1].soc) {
        throw std::domain_error("OCV soc values must increase strictly");
      }
      if (p.voltage_v <= points_[i - 1].voltage_v) {
        throw std::domain_error("OCV voltage must increase strictly with soc");
      }
    }
  }
}

double ocv_curve::lookup(double soc) const {
  if (!(soc >= 0.0 && soc <= 1.0)) {
    throw std::domain_error("soc outside [0, 1]: " + std::to_string(soc));
  }
  const auto upper = std::lower_bound(
      points_.begin(), points_.end(), soc,
      [](const ocv_point& p, double s) { return p.soc < s; });
  if (upper == points_.begin()) return points_.front().voltage_v;
  if (upper == points_.end()) return points_.back().voltage_v;
  const auto& hi = *upper;
  const auto& lo = *(upper - 1);
  if (hi.soc == soc) return hi.voltage_v;
  const double w = (soc - lo.soc) / (hi.soc - lo.soc);
  return lo.voltage_v + w * (hi.voltage_v - lo.voltage_v);
}

const ocv_curve& ocv_curve::default_nmc() {
  static const ocv_curve curve{{
      {0.00, 2.500}, {0.05, 3.050}, {0.10, 3.320}, {0.15, 3.450},
      {0.20, 3.520}, {0.25, 3.580}, {0.30, 3.630}, {0.35, 3.670},
      {0.40, 3.710}, {0.45, 3.745}, {0.50, 3.780}, {0.55, 3.810},
      {0.60, 3.840}, {0.65, 3.870}, {0.70, 3.905}, {0.75, 3.940},
      {0.80, 3.980}, {0.85, 4.020}, {0.90, 4.065}, {0.95, 4.130},
      {1.00, 4.200},
  }};
  return curve;
}

void cell_group_params::validate() const {
  if (!(capacity_ah > 0.0)) throw std::domain_error("capacity_ah must be > 0");
  if (!(r_s_ohm >= 0.0)) throw std::domain_error("r_s must be >= 0");
  if (!(r_1_ohm >= 0.0)) throw std::domain_error("r_1 must be >= 0");
  if (!(c_1_f > 0.0)) throw std::domain_error("c_1 must be > 0");
  if (!(r_tab_ohm >= 0.0)) throw std::domain_error("r_tab must be >= 0");
}

group_step_result step_group(const cell_group_state& state,
                             const cell_group_params& params, double current_a,
                             double dt_s) {
  if (!std::isfinite(current_a) || !std::isfinite(state.soc) ||
      !std::isfinite(state.v_rc_v)) {
    throw numeric_error("non-finite input to step_group");
  }
  if (!(dt_s > 0.0 && dt_s <= 1.0)) {
    throw std::domain_error("dt must lie in (0, 1] s");
  }

  cell_group_state next;
  next.soc = std::clamp(
      state.soc + current_a * dt_s / (3600.0 * params.capacity_ah), 0.0, 1.0);
  // Forward-Euler update of the single RC diffusion branch; steady state is
  // current * r_1.
  next.v_rc_v = params.r_1_ohm > 0.0
                    ? state.v_rc_v + dt_s * (current_a / params.c_1_f -
                                             state.v_rc_v /
                                                 (params.r_1_ohm * params.c_1_f))
                    : 0.0;

  const double voltage = params.ocv.lookup(next.soc) +
                         current_a * (params.r_s_ohm + params.r_tab_ohm) +
                         next.v_rc_v;
  return {next, voltage};
}

double open_circuit_voltage(const cell_group_state& state,
                            const cell_group_params& params) {
  return params.ocv.lookup(state.soc) + state.v_rc_v;
}

pack_model::pack_model(std::array<cell_group_params, group_count> groups,
                       std::array<cell_group_state, group_count> states)
    : groups_(std::move(groups)), states_(states) {
  for (int i = 0; i < group_count; ++i) {
    groups_[i].validate();
    // Only the end taps carry current through the pack terminals.
    if (i != 0 && i != group_count - 1 && groups_[i].r_tab_ohm > 0.0) {
      throw std::domain_error("r_tab permitted only on groups 1 and 5 (got it on group " +
                              std::to_string(i + 1) + ")");
    }
  }
}

void pack_model::set_soc(double soc) {
  for (auto& s : states_) s = {soc, 0.0};
}

std::array<double, pack_model::group_count> pack_model::step(double current_a,
                                                             double dt_s) {
  std::array<double, group_count> voltages{};
  for (int i = 0; i < group_count; ++i) {
    auto r = step_group(states_[i], groups_[i], current_a, dt_s);
    states_[i] = r.state;
    voltages[i] = r.voltage_v;
  }
  return voltages;
}

std::array<double, pack_model::group_count> pack_model::open_circuit_voltages()
    const {
  std::array<double, group_count> voltages{};
  for (int i = 0; i < group_count; ++i) {
    voltages[i] = open_circuit_voltage(states_[i], groups_[i]);
  }
  return voltages;
}

pack_model make_uniform_pack(const cell_group_params& interior,
                             double r_tab_end_ohm, double initial_soc) {
  std::array<cell_group_params, pack_model::group_count> groups{
      interior, interior, interior, interior, interior};
  groups[0].r_tab_ohm = r_tab_end_ohm;
  groups[4].r_tab_ohm = r_tab_end_ohm;
  for (int i = 1; i < 4; ++i) groups[i].r_tab_ohm = 0.0;
  std::array<cell_group_state, pack_model::group_count> states{};
  for (auto& s : states) s = {initial_soc, 0.0};
  return pack_model(std::move(groups), states);
}

}  // namespace cellscreen
