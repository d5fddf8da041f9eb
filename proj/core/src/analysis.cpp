// Resistance extraction, coulomb-counted capacity, the capacity-resistance
// regression and the screening decision.

#include "cellscreen/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cellscreen/diag.hpp"
#include "cellscreen/errors.hpp"
#include "json.hpp"

namespace cellscreen {

namespace {

void check_cell_index(int cell_index) {
  if (cell_index < 1 || cell_index > 5) {
    throw std::domain_error("cell_index must be 1..5, got " +
                            std::to_string(cell_index));
  }
}

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  std::nth_element(values.begin(), values.begin() + n / 2, values.end());
  double hi = values[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(values.begin(), values.begin() + n / 2 - 1, values.end());
  return 0.5 * (values[n / 2 - 1] + hi);
}

}  // namespace

std::vector<current_step_event> detect_current_steps(const time_series_log& log,
                                                     double min_delta_i_a) {
  if (!(min_delta_i_a > 0.0)) {
    throw std::domain_error("min_delta_i must be > 0");
  }
  std::vector<current_step_event> events;
  const auto& s = log.samples;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double delta = s[i + 1].i_pack_a - s[i].i_pack_a;
    if (std::abs(delta) < min_delta_i_a) continue;
    current_step_event e;
    e.sample_index = i;
    e.t_s = s[i].t_s;
    e.i_before_a = s[i].i_pack_a;
    e.i_after_a = s[i + 1].i_pack_a;
    e.v_before_v = s[i].v_cell_v;
    e.v_after_v = s[i + 1].v_cell_v;
    e.dt_sample_s = s[i + 1].t_s - s[i].t_s;
    events.push_back(e);
  }
  return events;
}

double default_min_delta_i(double nominal_capacity_ah) {
  return 0.25 * (nominal_capacity_ah / 10.0);
}

std::string_view to_string(rs_method method) {
  switch (method) {
    case rs_method::di: return "di";
    case rs_method::ci: return "ci";
    case rs_method::hppc: return "hppc";
  }
  return "unknown";
}

rs_method rs_method_from_string(std::string_view name) {
  if (name == "di" || name == "DI") return rs_method::di;
  if (name == "ci" || name == "CI") return rs_method::ci;
  if (name == "hppc" || name == "HPPC") return rs_method::hppc;
  throw usage_error("unknown resistance method: " + std::string(name));
}

resistance_estimate estimate_rs(const current_step_event& event, int cell_index,
                                rs_method method) {
  check_cell_index(cell_index);
  const double delta_i = event.i_after_a - event.i_before_a;
  if (delta_i == 0.0) {
    throw std::domain_error("current step event with delta_i == 0");
  }
  const int c = cell_index - 1;
  resistance_estimate est;
  est.cell_index = cell_index;
  est.r_s_ohm = (event.v_after_v[c] - event.v_before_v[c]) / delta_i;
  est.method = method;
  est.v_terminal_v = event.v_before_v[c];
  est.dt_sample_s = event.dt_sample_s;
  est.delta_i_a = delta_i;
  est.t_s = event.t_s;
  return est;
}

std::vector<resistance_estimate> rs_voltage_profile(const time_series_log& log,
                                                    int cell_index,
                                                    rs_method method,
                                                    double min_delta_i_a,
                                                    double zero_current_eps_a) {
  check_cell_index(cell_index);
  const auto events = detect_current_steps(log, min_delta_i_a);
  if (events.empty()) {
    diag_info("no current steps above " + std::to_string(min_delta_i_a) +
              " A in log '" + log.meta.pack_id + " " + log.meta.sequence_name +
              "'; profile is empty");
  }
  std::vector<resistance_estimate> profile;
  for (const auto& e : events) {
    // All three methods measure the interruption of a sustained current; they
    // differ only in the sign of the current being interrupted (and in which
    // sequence produced the log).
    if (std::abs(e.i_after_a) > zero_current_eps_a) continue;
    const bool charging = e.i_before_a > 0.0;
    if (method == rs_method::ci ? !charging : charging) continue;
    profile.push_back(estimate_rs(e, cell_index, method));
  }
  std::stable_sort(profile.begin(), profile.end(),
                   [](const resistance_estimate& a, const resistance_estimate& b) {
                     return a.v_terminal_v < b.v_terminal_v;
                   });
  return profile;
}

capacity_estimate coulomb_count_capacity(const time_series_log& log,
                                         int cell_index, double v_max_v,
                                         double v_min_v) {
  check_cell_index(cell_index);
  if (!(v_max_v > v_min_v)) {
    throw std::domain_error("capacity window needs v_max > v_min");
  }
  const auto& s = log.samples;
  const int c = cell_index - 1;

  constexpr double discharge_eps_a = 1e-9;
  // The window opens at the first discharging sample at/below v_max after the
  // cell has actually been above it; a log that starts inside the window
  // would silently under-count.
  bool armed = false;
  std::size_t start = s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!armed) {
      armed = s[i].v_cell_v[c] > v_max_v;
      if (!armed) continue;
    }
    if (s[i].i_pack_a < -discharge_eps_a && s[i].v_cell_v[c] <= v_max_v) {
      start = i;
      break;
    }
  }
  std::size_t stop = s.size();
  for (std::size_t i = start; i < s.size(); ++i) {
    if (s[i].i_pack_a < -discharge_eps_a && s[i].v_cell_v[c] <= v_min_v) {
      stop = i;
      break;
    }
  }
  if (start == s.size() || stop == s.size()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& row : s) {
      lo = std::min(lo, row.v_cell_v[c]);
      hi = std::max(hi, row.v_cell_v[c]);
    }
    std::ostringstream os;
    os << "cell " << cell_index << " never crossed the ["
       << (start == s.size() ? v_max_v : v_min_v) << " V] set point while "
       << "discharging; achieved voltage range [" << lo << ", " << hi << "] V";
    throw window_error(os.str());
  }

  double ampere_seconds = 0.0;
  double time_under_current = 0.0;
  for (std::size_t i = start; i < stop; ++i) {
    const double dt = s[i + 1].t_s - s[i].t_s;
    ampere_seconds += 0.5 * (std::abs(s[i].i_pack_a) + std::abs(s[i + 1].i_pack_a)) * dt;
    time_under_current += dt;
  }

  capacity_estimate est;
  est.cell_index = cell_index;
  est.capacity_ah = ampere_seconds / 3600.0;
  est.v_max_v = v_max_v;
  est.v_min_v = v_min_v;
  const double window_s = s[stop].t_s - s[start].t_s;
  const double mean_current = window_s > 0.0 ? ampere_seconds / window_s : 0.0;
  est.c_rate_per_h = log.meta.nominal_capacity_ah > 0.0
                         ? mean_current / log.meta.nominal_capacity_ah
                         : 0.0;
  return est;
}

flatness_report soc_independence_check(std::span<const resistance_estimate> profile,
                                       double v_threshold_v,
                                       double spread_tolerance) {
  std::vector<double> values;
  for (const auto& p : profile) {
    if (p.v_terminal_v >= v_threshold_v) values.push_back(p.r_s_ohm);
  }
  if (values.size() < 2) {
    throw insufficient_data_error(
        "need at least 2 profile points above " + std::to_string(v_threshold_v) +
        " V, found " + std::to_string(values.size()));
  }
  flatness_report report;
  report.points_used = static_cast<int>(values.size());
  report.r_min_ohm = *std::min_element(values.begin(), values.end());
  report.r_max_ohm = *std::max_element(values.begin(), values.end());
  report.median_ohm = median_of(values);
  report.spread = report.r_max_ohm == report.r_min_ohm
                      ? 0.0
                      : (report.r_max_ohm - report.r_min_ohm) / report.median_ohm;
  report.pass = report.spread <= spread_tolerance;
  return report;
}

method_comparison compare_methods(std::span<const resistance_estimate> ci_profile,
                                  std::span<const resistance_estimate> hppc_profile) {
  if (ci_profile.empty() || hppc_profile.empty()) {
    throw insufficient_data_error("both method profiles must be non-empty");
  }
  auto collect = [](std::span<const resistance_estimate> profile,
                    double& dt_out) {
    std::vector<double> values;
    dt_out = profile.front().dt_sample_s;
    for (const auto& p : profile) values.push_back(p.r_s_ohm);
    return values;
  };
  method_comparison cmp;
  double dt_ci = 0.0, dt_hppc = 0.0;
  cmp.median_ci_ohm = median_of(collect(ci_profile, dt_ci));
  cmp.median_hppc_ohm = median_of(collect(hppc_profile, dt_hppc));
  cmp.dt_ci_s = dt_ci;
  cmp.dt_hppc_s = dt_hppc;
  // Estimates at different sampling intervals capture different amounts of
  // RC relaxation; flag the pair as not directly comparable.
  cmp.comparable = std::abs(dt_ci - dt_hppc) <= 1e-6;
  return cmp;
}

bool rank_order_preserved(std::span<const method_comparison> packs) {
  std::vector<std::size_t> by_ci(packs.size()), by_hppc(packs.size());
  for (std::size_t i = 0; i < packs.size(); ++i) by_ci[i] = by_hppc[i] = i;
  std::stable_sort(by_ci.begin(), by_ci.end(), [&](std::size_t a, std::size_t b) {
    return packs[a].median_ci_ohm < packs[b].median_ci_ohm;
  });
  std::stable_sort(by_hppc.begin(), by_hppc.end(), [&](std::size_t a, std::size_t b) {
    return packs[a].median_hppc_ohm < packs[b].median_hppc_ohm;
  });
  return by_ci == by_hppc;
}

screening_fit fit_capacity_resistance(std::span<const fit_point> points) {
  const std::size_t n = points.size();
  if (n < 2) {
    throw insufficient_data_error("linear fit needs at least 2 points, got " +
                                  std::to_string(n));
  }
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& p : points) {
    mean_x += p.r_s_ohm;
    mean_y += p.capacity_ah;
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0;
  double x_scale = 0.0;
  for (const auto& p : points) {
    const double dx = p.r_s_ohm - mean_x;
    sxx += dx * dx;
    sxy += dx * (p.capacity_ah - mean_y);
    x_scale = std::max(x_scale, std::abs(p.r_s_ohm));
  }
  // Guard against both literally equal abscissae and spreads at round-off
  // scale, which would turn the slope into noise.
  const double degenerate_sxx = static_cast<double>(n) * x_scale * x_scale * 1e-24;
  if (sxx <= degenerate_sxx) {
    throw degenerate_fit_error("all resistance values identical; no usable design");
  }

  screening_fit fit;
  fit.slope_ah_per_ohm = sxy / sxx;
  fit.intercept_ah = mean_y - fit.slope_ah_per_ohm * mean_x;
  fit.n = static_cast<int>(n);

  double ss_res = 0.0, ss_tot = 0.0;
  fit.residuals_ah.reserve(n);
  fit.r_s_min_ohm = points.front().r_s_ohm;
  fit.r_s_max_ohm = points.front().r_s_ohm;
  for (const auto& p : points) {
    const double predicted = fit.intercept_ah + fit.slope_ah_per_ohm * p.r_s_ohm;
    const double residual = p.capacity_ah - predicted;
    fit.residuals_ah.push_back(residual);
    ss_res += residual * residual;
    const double dy = p.capacity_ah - mean_y;
    ss_tot += dy * dy;
    fit.r_s_min_ohm = std::min(fit.r_s_min_ohm, p.r_s_ohm);
    fit.r_s_max_ohm = std::max(fit.r_s_max_ohm, p.r_s_ohm);
  }
  fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

std::string_view to_string(screening_class cls) {
  switch (cls) {
    case screening_class::pass: return "pass";
    case screening_class::review: return "review";
    case screening_class::reject: return "reject";
  }
  return "unknown";
}

screening_decision screen_cell(double r_s_ohm, const screening_fit& fit,
                               const screening_thresholds& thresholds) {
  if (fit.n < 2) throw usage_error("screening requires a valid fit");
  if (!(thresholds.nominal_capacity_ah > 0.0)) {
    throw usage_error("screening needs nominal_capacity_ah > 0");
  }
  screening_decision d;
  d.r_s_ohm = r_s_ohm;
  d.thresholds = thresholds;
  d.predicted_capacity_ah = fit.intercept_ah + fit.slope_ah_per_ohm * r_s_ohm;
  const double pass_ah = thresholds.pass_fraction * thresholds.nominal_capacity_ah;
  const double reject_ah = thresholds.reject_fraction * thresholds.nominal_capacity_ah;
  if (d.predicted_capacity_ah >= pass_ah) {
    d.cls = screening_class::pass;
  } else if (d.predicted_capacity_ah < reject_ah) {
    d.cls = screening_class::reject;
  } else {
    d.cls = screening_class::review;
  }
  d.extrapolated = r_s_ohm < fit.r_s_min_ohm || r_s_ohm > fit.r_s_max_ohm;
  return d;
}

const resistance_estimate* select_screening_point(
    std::span<const resistance_estimate> profile, double v_target_v) {
  const resistance_estimate* best = nullptr;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const auto& p : profile) {
    const double distance = std::abs(p.v_terminal_v - v_target_v);
    if (distance < best_distance) {
      best_distance = distance;
      best = &p;
    }
  }
  return best;
}

namespace {
using ordered_json = nlohmann::ordered_json;
}

std::string fit_to_json(const screening_fit& fit) {
  ordered_json j;
  j["slope_ah_per_ohm"] = fit.slope_ah_per_ohm;
  j["intercept_ah"] = fit.intercept_ah;
  j["r_squared"] = fit.r_squared;
  j["n"] = fit.n;
  j["r_s_min_ohm"] = fit.r_s_min_ohm;
  j["r_s_max_ohm"] = fit.r_s_max_ohm;
  j["residuals_ah"] = fit.residuals_ah;
  return j.dump(2) + "\n";
}

screening_fit fit_from_json(std::string_view text) {
  try {
    const auto j = ordered_json::parse(text);
    screening_fit fit;
    fit.slope_ah_per_ohm = j.at("slope_ah_per_ohm").get<double>();
    fit.intercept_ah = j.at("intercept_ah").get<double>();
    fit.r_squared = j.at("r_squared").get<double>();
    fit.n = j.at("n").get<int>();
    fit.r_s_min_ohm = j.at("r_s_min_ohm").get<double>();
    fit.r_s_max_ohm = j.at("r_s_max_ohm").get<double>();
    if (j.contains("residuals_ah")) {
      fit.residuals_ah = j.at("residuals_ah").get<std::vector<double>>();
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("fit JSON: ") + e.what());
  }
}

std::string decision_to_json(const screening_decision& decision) {
  ordered_json j;
  j["r_s_ohm"] = decision.r_s_ohm;
  j["predicted_capacity_ah"] = decision.predicted_capacity_ah;
  j["class"] = std::string(to_string(decision.cls));
  j["pass_fraction"] = decision.thresholds.pass_fraction;
  j["reject_fraction"] = decision.thresholds.reject_fraction;
  j["nominal_capacity_ah"] = decision.thresholds.nominal_capacity_ah;
  j["extrapolated"] = decision.extrapolated;
  return j.dump(2) + "\n";
}

}  // namespace cellscreen
