#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "cellscreen/analysis.hpp"
#include "cellscreen/errors.hpp"
#include "cellscreen/ingest.hpp"
#include "cellscreen/protocol.hpp"
#include "oracles.hpp"

using namespace cellscreen;

namespace {

cell_group_params fresh_params() {
  cell_group_params p;
  p.capacity_ah = 5.0;
  p.r_s_ohm = 0.030;
  p.r_1_ohm = 0.010;   // r_1 * c_1 = 50 s
  p.c_1_f = 5000.0;
  return p;
}

// TS4-style interrupt charge with no trailing CV, so every current step in
// the log comes from the interrupt schedule.
time_series_log run_interrupt_charge(const cell_group_params& p, double r_tab,
                                     double soc_0, double v_limit,
                                     double sampling_hz = 10.0) {
  auto pack = make_uniform_pack(p, r_tab, soc_0);
  test_sequence seq;
  seq.name = "ci";
  protocol_step ci;
  ci.kind = step_kind::charge_with_interrupts;
  ci.c_rate_per_h = 1.0 / 3.0;
  ci.v_limit_per_cell_v = v_limit;
  ci.interval_s = 560.0;
  ci.interrupt_s = 20.0;
  ci.sampling_hz = sampling_hz;
  seq.steps = {ci};
  run_options opt;
  opt.pack_id = "A";
  auto rr = run_protocol(pack, seq, opt);
  REQUIRE_FALSE(rr.aborted);
  return std::move(rr.log);
}

time_series_log run_discharge(const cell_group_params& p, double c_rate,
                              double soc_0 = 1.0) {
  auto pack = make_uniform_pack(p, 0.0, soc_0);
  test_sequence seq;
  seq.name = "dis";
  protocol_step cc;
  cc.kind = step_kind::cc_discharge;
  cc.c_rate_per_h = c_rate;
  cc.v_limit_per_cell_v = 2.8;
  cc.sampling_hz = 1.0;
  seq.steps = {cc};
  run_options opt;
  opt.pack_id = "A";
  auto rr = run_protocol(pack, seq, opt);
  REQUIRE_FALSE(rr.aborted);
  return std::move(rr.log);
}

// Synthetic constant-current discharge log with a linear voltage ramp:
// 4.15 V until t0, then falling by ramp_v_per_s.
time_series_log ramp_log(double current_a, double t0_s, double ramp_v_per_s,
                         double duration_s) {
  time_series_log log;
  log.meta.pack_id = "S";
  log.meta.sequence_name = "ramp";
  log.meta.nominal_capacity_ah = 5.0;
  for (double t = 0.0; t <= duration_s; t += 1.0) {
    log_sample s;
    s.t_s = t;
    s.i_pack_a = -current_a;
    const double v = t < t0_s ? 4.15 : 4.15 - (t - t0_s) * ramp_v_per_s;
    s.v_cell_v.fill(v);
    log.samples.push_back(s);
  }
  return log;
}

current_step_event make_event(double i_before, double i_after, double v_before,
                              double v_after) {
  current_step_event e;
  e.sample_index = 10;
  e.t_s = 1.0;
  e.i_before_a = i_before;
  e.i_after_a = i_after;
  e.v_before_v.fill(v_before);
  e.v_after_v.fill(v_after);
  e.dt_sample_s = 0.1;
  return e;
}

}  // namespace

TEST_CASE("no current steps in a constant-current log") {
  const auto log = ramp_log(1.0, 0.0, 1e-4, 100.0);
  CHECK(detect_current_steps(log, 0.125).empty());
  CHECK_THROWS_AS(detect_current_steps(log, 0.0), std::domain_error);
}

TEST_CASE("interrupt charges produce exactly two events per interrupt") {
  const auto log = run_interrupt_charge(fresh_params(), 0.0, 0.05, 4.1);
  const auto events = detect_current_steps(log, default_min_delta_i(5.0));
  CHECK(default_min_delta_i(5.0) == doctest::Approx(0.125));

  // 15 interrupts frozen in the protocol tests, each contributing an
  // interruption and a resume, plus the start-of-charge step from rest.
  std::size_t interruptions = 0;
  std::size_t rises = 0;
  for (std::size_t k = 0; k < events.size(); ++k) {
    if (k > 0) CHECK(events[k].t_s > events[k - 1].t_s);
    if (events[k].i_before_a > 0.0 && events[k].i_after_a == 0.0) {
      ++interruptions;
    } else {
      CHECK(events[k].i_before_a == 0.0);
      CHECK(events[k].i_after_a > 0.0);
      ++rises;
    }
  }
  CHECK(interruptions == 15);
  CHECK(rises == 16);
  CHECK(events.size() == 31);
}

TEST_CASE("estimate_rs evaluates dV/dI directly") {
  // 3.900 -> 3.960 V when -2 A -> 0 A gives 0.060/2 = 0.030 ohm.
  const auto est = estimate_rs(make_event(-2.0, 0.0, 3.900, 3.960), 1, rs_method::di);
  CHECK(est.r_s_ohm == doctest::Approx(0.030).epsilon(1e-12));
  CHECK(est.v_terminal_v == 3.900);
  CHECK(est.delta_i_a == 2.0);
  CHECK(est.dt_sample_s == 0.1);

  CHECK(estimate_rs(make_event(-2.0, 0.0, 3.9, 3.9), 1, rs_method::di).r_s_ohm == 0.0);
  CHECK_THROWS_AS(estimate_rs(make_event(1.0, 1.0, 3.9, 3.9), 1, rs_method::ci),
                  std::domain_error);
  CHECK_THROWS_AS(estimate_rs(make_event(-2.0, 0.0, 3.9, 3.96), 6, rs_method::di),
                  std::domain_error);
}

TEST_CASE("swapping the before/after roles of a step leaves r_s unchanged") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> amps(-5.0, 5.0);
  std::uniform_real_distribution<double> volts(3.0, 4.2);
  for (int trial = 0; trial < 100; ++trial) {
    const double i0 = amps(rng), i1 = amps(rng);
    if (std::abs(i1 - i0) < 1e-6) continue;
    const double v0 = volts(rng), v1 = volts(rng);
    const auto forward = estimate_rs(make_event(i0, i1, v0, v1), 3, rs_method::ci);
    const auto swapped = estimate_rs(make_event(i1, i0, v1, v0), 3, rs_method::ci);
    CHECK(forward.r_s_ohm == doctest::Approx(swapped.r_s_ohm).epsilon(1e-12));
  }
}

TEST_CASE("scaling currents and voltage deltas together leaves r_s unchanged") {
  const double k = 1000.0;  // amps -> milliamps, volts -> millivolts
  const double v_ref = 3.9;
  const double dv = 0.06;
  const auto base = estimate_rs(make_event(-2.0, 0.0, v_ref, v_ref + dv), 2, rs_method::ci);
  const auto scaled = estimate_rs(
      make_event(-2.0 * k, 0.0, v_ref, v_ref + dv * k), 2, rs_method::ci);
  CHECK(base.r_s_ohm == doctest::Approx(scaled.r_s_ohm).epsilon(1e-12));
}

TEST_CASE("pure ohmic packs are recovered exactly at every soc") {
  auto p = fresh_params();
  p.r_1_ohm = 0.0;
  const auto log = run_interrupt_charge(p, 0.005, 0.05, 4.15);
  for (int cell : {1, 3}) {
    const auto profile = rs_voltage_profile(log, cell, rs_method::ci, 0.125);
    REQUIRE(profile.size() >= 10);
    const double truth = p.r_s_ohm + (cell == 1 ? 0.005 : 0.0);
    for (const auto& point : profile) {
      CHECK(point.r_s_ohm == doctest::Approx(truth).epsilon(1e-12));
    }
  }
}

TEST_CASE("CI estimates sit inside the one-sample RC relaxation bound") {
  const auto p = fresh_params();
  const auto log = run_interrupt_charge(p, 0.0, 0.05, 4.1);
  const auto profile = rs_voltage_profile(log, 3, rs_method::ci, 0.125);
  REQUIRE(profile.size() == 15);

  const double bound = oracles::rc_one_sample_bound(p.r_1_ohm, p.c_1_f, 0.1, 0.1);
  CHECK(bound == doctest::Approx(0.1 / p.c_1_f).epsilon(1e-12));
  for (const auto& point : profile) {
    CHECK(point.r_s_ohm > p.r_s_ohm);
    CHECK(point.r_s_ohm <= p.r_s_ohm + bound + 1e-15);
  }
  // Flat profile: the spread never exceeds the contamination bound.
  const double lo = profile.front().r_s_ohm;
  for (const auto& point : profile) {
    CHECK(std::abs(point.r_s_ohm - lo) <= bound);
  }
}

TEST_CASE("downsampling a 10 Hz log never decreases the estimate") {
  const auto p = fresh_params();
  const auto log = run_interrupt_charge(p, 0.0, 0.05, 4.1);
  const auto slow = downsample_log(log, 10);

  const auto fast_profile = rs_voltage_profile(log, 3, rs_method::ci, 0.125);
  const auto slow_profile = rs_voltage_profile(slow, 3, rs_method::ci, 0.125);
  REQUIRE(fast_profile.size() == slow_profile.size());

  const double slow_bound = oracles::rc_one_sample_bound(p.r_1_ohm, p.c_1_f, 0.1, 1.0);
  for (std::size_t k = 0; k < fast_profile.size(); ++k) {
    CHECK(slow_profile[k].r_s_ohm > fast_profile[k].r_s_ohm);
    CHECK(slow_profile[k].r_s_ohm <= p.r_s_ohm + slow_bound + 1e-15);
    CHECK(slow_profile[k].dt_sample_s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("end groups read higher than interior groups by exactly r_tab") {
  const double r_tab = 0.005;
  const auto log = run_interrupt_charge(fresh_params(), r_tab, 0.05, 4.1);
  const auto end_profile = rs_voltage_profile(log, 1, rs_method::ci, 0.125);
  const auto interior_profile = rs_voltage_profile(log, 3, rs_method::ci, 0.125);
  REQUIRE(end_profile.size() == interior_profile.size());
  for (std::size_t k = 0; k < end_profile.size(); ++k) {
    CHECK(end_profile[k].r_s_ohm - interior_profile[k].r_s_ohm ==
          doctest::Approx(r_tab).epsilon(1e-9));
  }
}

TEST_CASE("profiles are ordered by terminal voltage with one point per interrupt") {
  const auto log = run_interrupt_charge(fresh_params(), 0.0, 0.05, 4.1);
  const auto profile = rs_voltage_profile(log, 2, rs_method::ci, 0.125);
  CHECK(profile.size() == 15);
  for (std::size_t k = 1; k < profile.size(); ++k) {
    CHECK(profile[k].v_terminal_v >= profile[k - 1].v_terminal_v);
  }
  // A charge log has no discharge interrupts.
  CHECK(rs_voltage_profile(log, 2, rs_method::di, 0.125).empty());
  CHECK(rs_voltage_profile(log, 2, rs_method::hppc, 0.125).empty());
}

TEST_CASE("coulomb counting integrates exactly on a rectangular window") {
  // Constant 0.25 A with set points crossed 3600 s apart: 0.2500 Ah.
  const auto log = ramp_log(0.25, 100.0, 1.15 / 3600.0, 4000.0);
  const auto est = coulomb_count_capacity(log, 1, 4.1, 2.95);
  CHECK(est.capacity_ah == doctest::Approx(0.2500).epsilon(1e-12));
  CHECK(est.c_rate_per_h == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("capacity windows are additive at a shared midpoint") {
  const auto log = ramp_log(0.25, 100.0, 1.15 / 3600.0, 4000.0);
  const auto whole = coulomb_count_capacity(log, 1, 4.1, 2.95);
  const auto top = coulomb_count_capacity(log, 1, 4.1, 3.5);
  const auto bottom = coulomb_count_capacity(log, 1, 3.5, 2.95);
  CHECK(top.capacity_ah + bottom.capacity_ah ==
        doctest::Approx(whole.capacity_ah).epsilon(1e-12));
}

TEST_CASE("uncrossed set points raise a window error naming the extrema") {
  const auto log = ramp_log(0.25, 100.0, 1.15 / 3600.0, 500.0);  // stops at ~4.02 V
  try {
    coulomb_count_capacity(log, 1, 4.1, 2.95);
    FAIL("expected window_error");
  } catch (const window_error& e) {
    CHECK(std::string(e.what()).find("2.95") != std::string::npos);
    CHECK(std::string(e.what()).find("achieved voltage range") != std::string::npos);
  }
}

TEST_CASE("C/20 window capacity matches the OCV-inversion oracle within 1%") {
  const auto log = run_discharge(fresh_params(), 1.0 / 20.0);
  const auto est = coulomb_count_capacity(log, 3, 4.1, 2.95);

  oracles::soc_voltage_table table;
  for (const auto& pt : ocv_curve::default_nmc().points()) {
    table.push_back({pt.soc, pt.voltage_v});
  }
  const double oracle_ah = 5.0 * (oracles::soc_at_voltage(table, 4.1) -
                                  oracles::soc_at_voltage(table, 2.95));
  CHECK(std::abs(est.capacity_ah - oracle_ah) / oracle_ah < 0.01);

  // The same pack measured at 1C reads strictly larger through the window.
  const auto fast = coulomb_count_capacity(run_discharge(fresh_params(), 1.0), 3,
                                           4.1, 2.95);
  CHECK(fast.capacity_ah > est.capacity_ah);
}

TEST_CASE("flatness above the knee threshold") {
  auto flat_point = [](double v, double r) {
    resistance_estimate e;
    e.cell_index = 3;
    e.r_s_ohm = r;
    e.v_terminal_v = v;
    e.method = rs_method::ci;
    return e;
  };

  SUBCASE("flat profile passes with zero spread") {
    std::vector<resistance_estimate> profile{
        flat_point(3.7, 0.03), flat_point(3.9, 0.03), flat_point(4.1, 0.03)};
    const auto report = soc_independence_check(profile, 3.6);
    CHECK(report.spread == 0.0);
    CHECK(report.pass);
    CHECK(report.points_used == 3);
  }

  SUBCASE("a profile rising only below 3.6 V passes there but fails at 3.0 V") {
    std::vector<resistance_estimate> profile{
        flat_point(3.1, 0.060), flat_point(3.3, 0.045), flat_point(3.7, 0.030),
        flat_point(3.9, 0.0305), flat_point(4.1, 0.030)};
    CHECK(soc_independence_check(profile, 3.6).pass);
    CHECK_FALSE(soc_independence_check(profile, 3.0).pass);
  }

  SUBCASE("fewer than two usable points is an insufficiency error") {
    std::vector<resistance_estimate> profile{flat_point(3.9, 0.03),
                                             flat_point(3.2, 0.05)};
    CHECK_THROWS_AS(soc_independence_check(profile, 3.6), insufficient_data_error);
  }
}

TEST_CASE("method comparison reports medians and sampling compatibility") {
  auto point = [](double r, double dt) {
    resistance_estimate e;
    e.cell_index = 4;
    e.r_s_ohm = r;
    e.v_terminal_v = 3.9;
    e.dt_sample_s = dt;
    return e;
  };
  std::vector<resistance_estimate> ci{point(0.030, 0.1), point(0.032, 0.1),
                                      point(0.031, 0.1)};

  SUBCASE("identical profiles agree trivially") {
    const auto cmp = compare_methods(ci, ci);
    CHECK(cmp.median_ci_ohm == cmp.median_hppc_ohm);
    CHECK(cmp.comparable);
  }

  SUBCASE("different sampling intervals are flagged non-comparable") {
    std::vector<resistance_estimate> slow{point(0.035, 1.0), point(0.036, 1.0)};
    const auto cmp = compare_methods(ci, slow);
    CHECK_FALSE(cmp.comparable);
  }

  SUBCASE("rank order agreement across packs") {
    method_comparison a{"A", 0.025, 0.027, 0.1, 0.1, true};
    method_comparison b{"B", 0.035, 0.036, 0.1, 0.1, true};
    method_comparison c{"C", 0.060, 0.064, 0.1, 0.1, true};
    CHECK(rank_order_preserved(std::vector<method_comparison>{a, b, c}));
    method_comparison swapped{"D", 0.020, 0.070, 0.1, 0.1, true};
    CHECK_FALSE(rank_order_preserved(std::vector<method_comparison>{a, swapped, c}));
  }
}

TEST_CASE("ordinary least squares matches the hand-computed solution") {
  SUBCASE("exactly collinear points") {
    std::vector<fit_point> points{{0.030, 4.6}, {0.040, 4.2}, {0.050, 3.8}};
    const auto fit = fit_capacity_resistance(points);
    CHECK(fit.slope_ah_per_ohm == doctest::Approx(-40.0).epsilon(1e-12));
    CHECK(fit.intercept_ah == doctest::Approx(5.8).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("non-collinear points, frozen from the normal equations") {
    std::vector<fit_point> points{{0.030, 4.6}, {0.040, 4.3}, {0.050, 3.8}};
    const auto fit = fit_capacity_resistance(points);
    // Worked by hand: slope -40, intercept 35/6, R^2 = 48/49,
    // residuals (-1/30, +2/30, -1/30).
    CHECK(fit.slope_ah_per_ohm == doctest::Approx(-40.0).epsilon(1e-9));
    CHECK(fit.intercept_ah == doctest::Approx(35.0 / 6.0).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(48.0 / 49.0).epsilon(1e-9));
    REQUIRE(fit.residuals_ah.size() == 3);
    CHECK(fit.residuals_ah[0] == doctest::Approx(-1.0 / 30.0).epsilon(1e-9));
    CHECK(fit.residuals_ah[1] == doctest::Approx(2.0 / 30.0).epsilon(1e-9));
    CHECK(fit.residuals_ah[2] == doctest::Approx(-1.0 / 30.0).epsilon(1e-9));
    CHECK(fit.n == 3);
    CHECK(fit.r_s_min_ohm == 0.030);
    CHECK(fit.r_s_max_ohm == 0.050);
  }

  SUBCASE("degenerate designs are rejected") {
    CHECK_THROWS_AS(fit_capacity_resistance(std::vector<fit_point>{{0.03, 4.6}}),
                    insufficient_data_error);
    CHECK_THROWS_AS(fit_capacity_resistance(
                        std::vector<fit_point>{{0.03, 4.6}, {0.03, 4.2}}),
                    degenerate_fit_error);
  }
}

TEST_CASE("fit residuals sum to zero and round-trip through JSON") {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> res(0.02, 0.08);
  std::uniform_real_distribution<double> noise(-0.4, 0.4);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<fit_point> points;
    for (int i = 0; i < 12; ++i) {
      const double r = res(rng);
      points.push_back({r, 6.0 - 45.0 * r + noise(rng)});
    }
    const auto fit = fit_capacity_resistance(points);
    double sum = 0.0;
    for (double r : fit.residuals_ah) sum += r;
    CHECK(std::abs(sum) < 1e-9);
    CHECK(fit.r_squared >= 0.0);
    CHECK(fit.r_squared <= 1.0);

    const auto back = fit_from_json(fit_to_json(fit));
    CHECK(back.slope_ah_per_ohm == fit.slope_ah_per_ohm);
    CHECK(back.intercept_ah == fit.intercept_ah);
    CHECK(back.r_squared == fit.r_squared);
    CHECK(back.residuals_ah == fit.residuals_ah);
  }
}

TEST_CASE("r-squared is invariant under affine rescaling of either axis") {
  std::vector<fit_point> points{{0.029, 4.65}, {0.031, 4.40}, {0.034, 4.52},
                                {0.038, 4.21}, {0.045, 4.05}, {0.052, 3.70}};
  const auto fit = fit_capacity_resistance(points);
  std::vector<fit_point> scaled;
  for (const auto& p : points) {
    scaled.push_back({p.r_s_ohm * 1000.0 + 2.0, p.capacity_ah * 0.37 - 1.0});
  }
  const auto fit2 = fit_capacity_resistance(scaled);
  CHECK(fit2.r_squared == doctest::Approx(fit.r_squared).epsilon(1e-12));
}

TEST_CASE("dropping an extreme pack keeps the slope but drops r-squared") {
  // A loose cluster plus one heavily aged pack far up the resistance axis.
  std::vector<fit_point> with_extreme{
      {0.029, 4.65}, {0.030, 4.50}, {0.031, 4.62},
      {0.032, 4.45}, {0.033, 4.58}, {0.035, 4.40}, {0.065, 3.20}};
  std::vector<fit_point> cluster(with_extreme.begin(), with_extreme.end() - 1);

  const auto full = fit_capacity_resistance(with_extreme);
  const auto trimmed = fit_capacity_resistance(cluster);
  CHECK(full.slope_ah_per_ohm < 0.0);
  CHECK(trimmed.slope_ah_per_ohm < 0.0);
  CHECK(trimmed.r_squared < full.r_squared - 0.1);
  CHECK(trimmed.slope_ah_per_ohm / full.slope_ah_per_ohm > 0.5);
  CHECK(trimmed.slope_ah_per_ohm / full.slope_ah_per_ohm < 2.0);
}

TEST_CASE("screening classifies against the capacity bands") {
  std::vector<fit_point> points{{0.030, 4.6}, {0.040, 4.2}, {0.050, 3.8}};
  const auto fit = fit_capacity_resistance(points);
  screening_thresholds thresholds;  // pass 0.80, reject 0.70, nominal 5 Ah

  const auto pass = screen_cell(0.030, fit, thresholds);
  CHECK(pass.predicted_capacity_ah == doctest::Approx(4.6).epsilon(1e-12));
  CHECK(pass.cls == screening_class::pass);
  CHECK_FALSE(pass.extrapolated);

  const auto reject = screen_cell(0.065, fit, thresholds);
  CHECK(reject.predicted_capacity_ah == doctest::Approx(3.2).epsilon(1e-12));
  CHECK(reject.cls == screening_class::reject);
  CHECK(reject.extrapolated);  // outside the observed [0.030, 0.050] range

  const auto review = screen_cell(0.05125, fit, thresholds);
  CHECK(review.predicted_capacity_ah == doctest::Approx(3.75).epsilon(1e-12));
  CHECK(review.cls == screening_class::review);
}

TEST_CASE("screening class is invariant under consistent unit changes") {
  std::vector<fit_point> points{{0.029, 4.65}, {0.031, 4.40}, {0.034, 4.52},
                                {0.038, 4.21}, {0.045, 4.05}, {0.052, 3.70}};
  const auto fit_si = fit_capacity_resistance(points);
  std::vector<fit_point> milli;
  for (const auto& p : points) milli.push_back({p.r_s_ohm * 1000.0, p.capacity_ah});
  const auto fit_milli = fit_capacity_resistance(milli);

  screening_thresholds thresholds;
  for (double r : {0.030, 0.040, 0.0465, 0.055}) {
    const auto a = screen_cell(r, fit_si, thresholds);
    const auto b = screen_cell(r * 1000.0, fit_milli, thresholds);
    CHECK(a.cls == b.cls);
    CHECK(a.predicted_capacity_ah == doctest::Approx(b.predicted_capacity_ah).epsilon(1e-9));
  }
}

TEST_CASE("the screening point is the CI interrupt nearest 4 V") {
  const auto log = run_interrupt_charge(fresh_params(), 0.0, 0.05, 4.15);
  const auto profile = rs_voltage_profile(log, 3, rs_method::ci, 0.125);
  const auto* point = select_screening_point(profile);
  REQUIRE(point != nullptr);
  for (const auto& other : profile) {
    CHECK(std::abs(point->v_terminal_v - 4.0) <=
          std::abs(other.v_terminal_v - 4.0) + 1e-12);
  }
  CHECK(select_screening_point({}) == nullptr);
}
