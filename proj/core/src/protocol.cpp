// Declarative test sequences and the controller that executes them against a
// pack model, emitting a sampled log.

#include "cellscreen/protocol.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cellscreen/errors.hpp"
#include "json.hpp"

namespace cellscreen {

namespace {

constexpr double k_charge_limit_v = 4.20;
constexpr double k_discharge_limit_v = 2.80;
constexpr double k_pulse_floor_v = 2.95;
constexpr double k_cv_cutoff_c = 1.0 / 20.0;
constexpr double k_cv_cutoff_slow_c = 1.0 / 100.0;
constexpr double k_inter_sequence_rest_s = 1800.0;
constexpr double k_interrupt_window_s = 20.0;

protocol_step make_cc_charge(double c_rate, double hz) {
  protocol_step st;
  st.kind = step_kind::cc_charge;
  st.c_rate_per_h = c_rate;
  st.v_limit_per_cell_v = k_charge_limit_v;
  st.sampling_hz = hz;
  return st;
}

protocol_step make_cv(double bound_c_rate, double cutoff_c_rate, double hz) {
  protocol_step st;
  st.kind = step_kind::cv_hold;
  st.c_rate_per_h = bound_c_rate;
  st.hold_voltage_v = k_charge_limit_v;
  st.i_cutoff_c_rate = cutoff_c_rate;
  st.sampling_hz = hz;
  return st;
}

protocol_step make_cc_discharge(double c_rate, double hz) {
  protocol_step st;
  st.kind = step_kind::cc_discharge;
  st.c_rate_per_h = c_rate;
  st.v_limit_per_cell_v = k_discharge_limit_v;
  st.sampling_hz = hz;
  return st;
}

}  // namespace

std::string_view to_string(step_kind kind) {
  switch (kind) {
    case step_kind::cc_charge: return "cc_charge";
    case step_kind::cc_discharge: return "cc_discharge";
    case step_kind::cv_hold: return "cv_hold";
    case step_kind::rest: return "rest";
    case step_kind::charge_with_interrupts: return "charge_with_interrupts";
    case step_kind::discharge_with_interrupts: return "discharge_with_interrupts";
    case step_kind::pulse_train: return "pulse_train";
  }
  return "unknown";
}

step_kind step_kind_from_string(std::string_view name) {
  for (auto k : {step_kind::cc_charge, step_kind::cc_discharge,
                 step_kind::cv_hold, step_kind::rest,
                 step_kind::charge_with_interrupts,
                 step_kind::discharge_with_interrupts, step_kind::pulse_train}) {
    if (name == to_string(k)) return k;
  }
  throw usage_error("unknown step kind: " + std::string(name));
}

void protocol_step::validate() const {
  if (!(sampling_hz > 0.0)) throw usage_error("sampling_hz must be > 0");
  switch (kind) {
    case step_kind::cc_charge:
    case step_kind::cc_discharge:
      if (!(c_rate_per_h > 0.0)) throw usage_error("cc step needs c_rate > 0");
      if (!(v_limit_per_cell_v > 0.0)) throw usage_error("cc step needs a voltage limit");
      break;
    case step_kind::cv_hold:
      if (!(hold_voltage_v > 0.0)) throw usage_error("cv_hold needs a hold voltage");
      if (!(i_cutoff_c_rate > 0.0)) throw usage_error("cv_hold needs a cutoff rate");
      if (!(c_rate_per_h > 0.0)) throw usage_error("cv_hold needs a bounding c_rate");
      break;
    case step_kind::rest:
      if (!(rest_s > 0.0)) throw usage_error("rest step needs rest_s > 0");
      break;
    case step_kind::charge_with_interrupts:
      if (!(c_rate_per_h > 0.0)) throw usage_error("interrupt charge needs c_rate > 0");
      if (!(interval_s > interrupt_s && interrupt_s > 0.0)) {
        throw usage_error("interrupt step needs interval_s > interrupt_s > 0");
      }
      if (!(v_limit_per_cell_v > 0.0)) throw usage_error("interrupt charge needs a voltage limit");
      break;
    case step_kind::discharge_with_interrupts:
      if (!(c_rate_per_h > 0.0)) throw usage_error("interrupt discharge needs c_rate > 0");
      if (!(interrupt_s > 0.0)) throw usage_error("interrupt step needs interrupt_s > 0");
      if (trigger_voltages_v.empty()) {
        throw usage_error("discharge_with_interrupts needs trigger voltages");
      }
      if (monitored_cell < 1 || monitored_cell > 5) {
        throw usage_error("monitored_cell must be 1..5");
      }
      if (!(v_limit_per_cell_v > 0.0)) throw usage_error("interrupt discharge needs a voltage limit");
      break;
    case step_kind::pulse_train:
      if (!(c_rate_per_h > 0.0)) throw usage_error("pulse_train needs c_rate > 0");
      if (!(pulse_s > 0.0 && rest_s > 0.0)) throw usage_error("pulse_train needs pulse_s, rest_s > 0");
      if (!(v_limit_per_cell_v > 0.0)) throw usage_error("pulse_train needs a voltage floor");
      break;
  }
}

std::string_view to_string(sequence_kind kind) {
  switch (kind) {
    case sequence_kind::ts1: return "TS1";
    case sequence_kind::ts2: return "TS2";
    case sequence_kind::ts3: return "TS3";
    case sequence_kind::ts4: return "TS4";
    case sequence_kind::ts5: return "TS5";
    case sequence_kind::ts6: return "TS6";
    case sequence_kind::ts7: return "TS7";
    case sequence_kind::full_campaign: return "full_campaign";
  }
  return "unknown";
}

sequence_kind sequence_kind_from_string(std::string_view name) {
  for (auto k : {sequence_kind::ts1, sequence_kind::ts2, sequence_kind::ts3,
                 sequence_kind::ts4, sequence_kind::ts5, sequence_kind::ts6,
                 sequence_kind::ts7, sequence_kind::full_campaign}) {
    if (name == to_string(k)) return k;
  }
  if (name == "full") return sequence_kind::full_campaign;
  throw usage_error("unknown sequence: " + std::string(name) +
                    " (expected TS1..TS7 or full)");
}

test_sequence build_standard_sequence(sequence_kind kind) {
  test_sequence seq;
  seq.name = std::string(to_string(kind));
  seq.inter_step_rest_s = k_inter_sequence_rest_s;
  switch (kind) {
    case sequence_kind::ts1:
      seq.steps = {make_cc_charge(1.0 / 3.0, 1.0), make_cv(1.0 / 3.0, k_cv_cutoff_c, 1.0),
                   make_cc_discharge(1.0 / 3.0, 1.0)};
      break;
    case sequence_kind::ts2: {
      protocol_step di;
      di.kind = step_kind::discharge_with_interrupts;
      di.c_rate_per_h = 1.0 / 2.5;
      di.v_limit_per_cell_v = k_discharge_limit_v;
      di.interrupt_s = k_interrupt_window_s;
      di.trigger_voltages_v = {4.0, 3.2};
      di.monitored_cell = 3;
      di.sampling_hz = 1.0;
      seq.steps = {make_cc_charge(1.0 / 2.0, 1.0), make_cv(1.0 / 2.0, k_cv_cutoff_c, 1.0), di};
      break;
    }
    case sequence_kind::ts3:
      seq.steps = {make_cc_charge(1.0 / 3.0, 1.0), make_cv(1.0 / 3.0, k_cv_cutoff_c, 1.0),
                   make_cc_discharge(1.0 / 2.0, 1.0)};
      break;
    case sequence_kind::ts4: {
      protocol_step ci;
      ci.kind = step_kind::charge_with_interrupts;
      ci.c_rate_per_h = 1.0 / 3.0;
      ci.v_limit_per_cell_v = k_charge_limit_v;
      ci.interval_s = 560.0;
      ci.interrupt_s = k_interrupt_window_s;
      ci.sampling_hz = 10.0;
      seq.steps = {ci, make_cv(1.0 / 3.0, k_cv_cutoff_c, 10.0)};
      break;
    }
    case sequence_kind::ts5:
      seq.steps = {make_cc_discharge(1.0 / 20.0, 1.0)};
      break;
    case sequence_kind::ts6:
      seq.steps = {make_cc_charge(1.0 / 20.0, 1.0), make_cv(1.0 / 20.0, k_cv_cutoff_slow_c, 1.0)};
      break;
    case sequence_kind::ts7: {
      protocol_step hppc;
      hppc.kind = step_kind::pulse_train;
      hppc.c_rate_per_h = 1.0 / 3.33;
      hppc.v_limit_per_cell_v = k_pulse_floor_v;
      hppc.pulse_s = 600.0;
      hppc.rest_s = 3600.0;
      hppc.sampling_hz = 10.0;
      seq.steps = {hppc};
      break;
    }
    case sequence_kind::full_campaign:
      for (auto k : {sequence_kind::ts1, sequence_kind::ts2, sequence_kind::ts3,
                     sequence_kind::ts4, sequence_kind::ts5, sequence_kind::ts6,
                     sequence_kind::ts7}) {
        auto sub = build_standard_sequence(k);
        seq.steps.insert(seq.steps.end(), sub.steps.begin(), sub.steps.end());
      }
      break;
  }
  return seq;
}

double c_rate_to_current(double c_rate_per_h, double capacity_ah) {
  if (!(capacity_ah > 0.0)) throw std::domain_error("capacity_ah must be > 0");
  return c_rate_per_h * capacity_ah;
}

namespace {

long long ticks_for(double seconds, double dt_s, const char* what) {
  const double q = seconds / dt_s;
  const long long t = std::llround(q);
  if (t <= 0 || std::abs(q - static_cast<double>(t)) > 1e-6) {
    throw usage_error(std::string(what) + " must be a positive multiple of dt (" +
                      std::to_string(seconds) + " s vs dt " + std::to_string(dt_s) + " s)");
  }
  return t;
}

std::vector<protocol_step> materialize_plan(const test_sequence& seq) {
  std::vector<protocol_step> plan;
  for (std::size_t i = 0; i < seq.steps.size(); ++i) {
    // Keep CCCV pairs contiguous: the CV must engage at the CC termination
    // voltage, so no rest is inserted ahead of a cv_hold.
    if (i > 0 && seq.inter_step_rest_s > 0.0 &&
        seq.steps[i].kind != step_kind::cv_hold) {
      protocol_step rest;
      rest.kind = step_kind::rest;
      rest.rest_s = seq.inter_step_rest_s;
      rest.sampling_hz = plan.back().sampling_hz;
      plan.push_back(rest);
    }
    plan.push_back(seq.steps[i]);
  }
  return plan;
}

class protocol_runner {
 public:
  protocol_runner(pack_model& pack, const run_options& opt)
      : pack_(pack), opt_(opt) {}

  run_result run(const test_sequence& seq) {
    if (seq.steps.empty()) throw usage_error("test sequence has no steps");
    if (!(opt_.dt_s > 0.0 && opt_.dt_s <= 1.0)) {
      throw usage_error("run dt must lie in (0, 1] s");
    }
    init_clock();
    for (int g = 0; g < pack_model::group_count; ++g) {
      const auto& p = pack_.group(g);
      if (p.r_1_ohm > 0.0 && opt_.dt_s > p.r_1_ohm * p.c_1_f) {
        throw usage_error("dt exceeds the RC time constant; reduce dt");
      }
    }

    result_.executed_steps = materialize_plan(seq);
    result_.log.meta.pack_id = opt_.pack_id;
    result_.log.meta.sequence_name = seq.name;
    result_.log.meta.nominal_capacity_ah = opt_.nominal_capacity_ah;

    // Row zero: the rested pack before any current is applied.
    result_.log.samples.push_back({0.0, 0.0, pack_.open_circuit_voltages(), 0});

    for (std::size_t i = 0; i < result_.executed_steps.size(); ++i) {
      if (!run_step(result_.executed_steps[i], static_cast<int>(i))) {
        result_.aborted = true;
        return std::move(result_);
      }
    }
    return std::move(result_);
  }

 private:
  double now() const {
    return ticks_per_second_ > 0.0 ? static_cast<double>(tick_) / ticks_per_second_
                                   : static_cast<double>(tick_) * opt_.dt_s;
  }

  // One-step inversion of the group equations: the current that lands the
  // limiting (highest) cell on the hold voltage after this tick, clamped to
  // the step's cc current. Keeps overshoot well inside the 5 mV tolerance.
  double cv_current(const protocol_step& st, double i_bound) const {
    double current = i_bound;
    for (int g = 0; g < pack_model::group_count; ++g) {
      const auto& p = pack_.group(g);
      const auto& s = pack_.states()[g];
      double decayed_rc = 0.0;
      double denom = p.r_s_ohm + p.r_tab_ohm;
      if (p.r_1_ohm > 0.0) {
        decayed_rc = s.v_rc_v * (1.0 - opt_.dt_s / (p.r_1_ohm * p.c_1_f));
        denom += opt_.dt_s / p.c_1_f;
      }
      if (denom <= 0.0) continue;
      const double needed =
          (st.hold_voltage_v - p.ocv.lookup(s.soc) - decayed_rc) / denom;
      current = std::min(current, needed);
    }
    return std::clamp(current, 0.0, i_bound);
  }

  // Sample times come from one correctly-rounded division so that a 10 Hz
  // grid logs as 560.1 rather than 560.10000000000002.
  void init_clock() {
    const double per_second = 1.0 / opt_.dt_s;
    const double rounded = std::round(per_second);
    ticks_per_second_ = std::abs(per_second - rounded) < 1e-9 ? rounded : 0.0;
  }

  bool safety_ok(const std::array<double, 5>& v, const protocol_step& st,
                 int plan_index) {
    for (int c = 0; c < 5; ++c) {
      if (v[c] < opt_.safety.v_min_v || v[c] > opt_.safety.v_max_v) {
        std::ostringstream os;
        os << "safety abort: cell " << (c + 1) << " at " << v[c]
           << " V outside [" << opt_.safety.v_min_v << ", "
           << opt_.safety.v_max_v << "] V at t=" << now() << " s in step "
           << plan_index << " (" << to_string(st.kind) << ")";
        result_.abort_reason = os.str();
        return false;
      }
    }
    return true;
  }

  bool run_step(const protocol_step& st, int plan_index) {
    st.validate();
    const double dt = opt_.dt_s;
    const long long ticks_per_sample =
        ticks_for(1.0 / st.sampling_hz, dt, "sampling period");
    const double i_cc = c_rate_to_current(st.c_rate_per_h, opt_.nominal_capacity_ah);
    const double i_cutoff = st.i_cutoff_c_rate * opt_.nominal_capacity_ah;
    const long long max_ticks = std::llround(opt_.max_step_s / dt);

    long long interval_ticks = 0;
    long long interrupt_ticks = 0;
    long long pulse_ticks = 0;
    long long pulse_rest_ticks = 0;
    if (st.kind == step_kind::charge_with_interrupts) {
      interval_ticks = ticks_for(st.interval_s, dt, "interval_s");
      interrupt_ticks = ticks_for(st.interrupt_s, dt, "interrupt_s");
    } else if (st.kind == step_kind::discharge_with_interrupts) {
      interrupt_ticks = ticks_for(st.interrupt_s, dt, "interrupt_s");
    } else if (st.kind == step_kind::pulse_train) {
      pulse_ticks = ticks_for(st.pulse_s, dt, "pulse_s");
      pulse_rest_ticks = ticks_for(st.rest_s, dt, "rest_s");
    }

    long long step_ticks = 0;
    long long charging_ticks = 0;
    long long zero_ticks_left = 0;   // active interrupt window
    std::size_t next_trigger = 0;
    bool in_pulse = true;
    long long phase_left = pulse_ticks;
    const int monitored = st.monitored_cell - 1;

    for (;;) {
      double current = 0.0;
      switch (st.kind) {
        case step_kind::cc_charge: current = i_cc; break;
        case step_kind::cc_discharge: current = -i_cc; break;
        case step_kind::rest: current = 0.0; break;
        case step_kind::cv_hold: current = cv_current(st, i_cc); break;
        case step_kind::charge_with_interrupts:
          current = zero_ticks_left > 0 ? 0.0 : i_cc;
          break;
        case step_kind::discharge_with_interrupts:
          current = zero_ticks_left > 0 ? 0.0 : -i_cc;
          break;
        case step_kind::pulse_train: current = in_pulse ? -i_cc : 0.0; break;
      }

      const auto voltages = pack_.step(current, dt);
      ++tick_;
      ++step_ticks;

      if (!safety_ok(voltages, st, plan_index)) return false;

      // Tick-granular phase bookkeeping.
      switch (st.kind) {
        case step_kind::charge_with_interrupts:
          if (current != 0.0) {
            ++charging_ticks;
            if (charging_ticks % interval_ticks == 0) zero_ticks_left = interrupt_ticks;
          } else if (zero_ticks_left > 0) {
            --zero_ticks_left;
          }
          break;
        case step_kind::discharge_with_interrupts:
          if (current == 0.0 && zero_ticks_left > 0) --zero_ticks_left;
          break;
        case step_kind::pulse_train:
          if (--phase_left == 0) {
            in_pulse = !in_pulse;
            phase_left = in_pulse ? pulse_ticks : pulse_rest_ticks;
          }
          break;
        default: break;
      }

      if (step_ticks % ticks_per_sample == 0) {
        result_.log.samples.push_back({now(), current, voltages, plan_index});

        switch (st.kind) {
          case step_kind::cc_charge:
          case step_kind::charge_with_interrupts:
            if (current > 0.0 && any_at_or_above(voltages, st.v_limit_per_cell_v)) return true;
            break;
          case step_kind::cc_discharge:
            if (any_at_or_below(voltages, st.v_limit_per_cell_v)) return true;
            break;
          case step_kind::cv_hold:
            if (std::abs(current) < i_cutoff) return true;
            break;
          case step_kind::rest:
            if (static_cast<double>(step_ticks) * dt >= st.rest_s - 1e-9) return true;
            break;
          case step_kind::discharge_with_interrupts:
            if (current < 0.0) {
              if (next_trigger < st.trigger_voltages_v.size() &&
                  voltages[monitored] <= st.trigger_voltages_v[next_trigger]) {
                zero_ticks_left = interrupt_ticks;
                ++next_trigger;
              } else if (any_at_or_below(voltages, st.v_limit_per_cell_v)) {
                return true;
              }
            }
            break;
          case step_kind::pulse_train:
            if (current < 0.0 && any_at_or_below(voltages, st.v_limit_per_cell_v)) return true;
            break;
        }
      }

      if (step_ticks >= max_ticks) {
        std::ostringstream os;
        os << "step " << plan_index << " (" << to_string(st.kind)
           << ") exceeded max_step_s=" << opt_.max_step_s << " without terminating";
        result_.abort_reason = os.str();
        return false;
      }
    }
  }

  static bool any_at_or_above(const std::array<double, 5>& v, double limit) {
    for (double x : v) {
      if (x >= limit) return true;
    }
    return false;
  }
  static bool any_at_or_below(const std::array<double, 5>& v, double limit) {
    for (double x : v) {
      if (x <= limit) return true;
    }
    return false;
  }

  pack_model& pack_;
  run_options opt_;
  run_result result_;
  long long tick_ = 0;
  double ticks_per_second_ = 0.0;
};

}  // namespace

run_result run_protocol(pack_model& pack, const test_sequence& seq,
                        const run_options& opt) {
  protocol_runner runner(pack, opt);
  return runner.run(seq);
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json step_to_json(const protocol_step& st) {
  ordered_json j;
  j["kind"] = std::string(to_string(st.kind));
  j["c_rate_per_h"] = st.c_rate_per_h;
  j["v_limit_per_cell_v"] = st.v_limit_per_cell_v;
  j["hold_voltage_v"] = st.hold_voltage_v;
  j["i_cutoff_c_rate"] = st.i_cutoff_c_rate;
  j["interval_s"] = st.interval_s;
  j["interrupt_s"] = st.interrupt_s;
  j["pulse_s"] = st.pulse_s;
  j["rest_s"] = st.rest_s;
  j["trigger_voltages_v"] = st.trigger_voltages_v;
  j["monitored_cell"] = st.monitored_cell;
  j["sampling_hz"] = st.sampling_hz;
  return j;
}

protocol_step step_from_json(const ordered_json& j) {
  protocol_step st;
  st.kind = step_kind_from_string(j.at("kind").get<std::string>());
  st.c_rate_per_h = j.value("c_rate_per_h", 0.0);
  st.v_limit_per_cell_v = j.value("v_limit_per_cell_v", 0.0);
  st.hold_voltage_v = j.value("hold_voltage_v", 0.0);
  st.i_cutoff_c_rate = j.value("i_cutoff_c_rate", 0.0);
  st.interval_s = j.value("interval_s", 0.0);
  st.interrupt_s = j.value("interrupt_s", 0.0);
  st.pulse_s = j.value("pulse_s", 0.0);
  st.rest_s = j.value("rest_s", 0.0);
  if (j.contains("trigger_voltages_v")) {
    st.trigger_voltages_v = j.at("trigger_voltages_v").get<std::vector<double>>();
  }
  st.monitored_cell = j.value("monitored_cell", 3);
  st.sampling_hz = j.value("sampling_hz", 1.0);
  st.validate();
  return st;
}

}  // namespace

std::string sequence_to_json(const test_sequence& seq) {
  ordered_json j;
  j["name"] = seq.name;
  j["inter_step_rest_s"] = seq.inter_step_rest_s;
  j["steps"] = ordered_json::array();
  for (const auto& st : seq.steps) j["steps"].push_back(step_to_json(st));
  return j.dump(2) + "\n";
}

test_sequence sequence_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("sequence JSON: ") + e.what());
  }
  try {
    test_sequence seq;
    seq.name = j.value("name", std::string("custom"));
    seq.inter_step_rest_s = j.value("inter_step_rest_s", 0.0);
    for (const auto& js : j.at("steps")) seq.steps.push_back(step_from_json(js));
    if (seq.steps.empty()) throw usage_error("sequence has no steps");
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("sequence JSON: ") + e.what());
  }
}

void save_sequence(const test_sequence& seq, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << sequence_to_json(seq);
}

test_sequence load_sequence(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sequence_from_json(buf.str());
}

}  // namespace cellscreen
