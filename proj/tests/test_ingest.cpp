#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>

#include "cellscreen/errors.hpp"
#include "cellscreen/ingest.hpp"
#include "cellscreen/protocol.hpp"
#include "oracles.hpp"

using namespace cellscreen;

namespace {

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
}

// Round-trip comparison at the wire contract: timestamps and step indices
// are exact, currents and voltages within 1e-9.
bool logs_round_trip(const time_series_log& a, const time_series_log& b) {
  auto close = [](double x, double y) {
    return std::abs(x - y) <= 1e-9 * std::max(1.0, std::max(std::abs(x), std::abs(y)));
  };
  if (a.meta.pack_id != b.meta.pack_id) return false;
  if (a.meta.sequence_name != b.meta.sequence_name) return false;
  if (a.meta.nominal_capacity_ah != b.meta.nominal_capacity_ah) return false;
  if (a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    if (x.t_s != y.t_s || x.step_index != y.step_index) return false;
    if (!close(x.i_pack_a, y.i_pack_a)) return false;
    for (int c = 0; c < 5; ++c) {
      if (!close(x.v_cell_v[c], y.v_cell_v[c])) return false;
    }
  }
  return true;
}

time_series_log simulate_ts4() {
  cell_group_params p;
  p.capacity_ah = 5.0;
  p.r_s_ohm = 0.030;
  p.r_1_ohm = 0.010;
  p.c_1_f = 5000.0;
  auto pack = make_uniform_pack(p, 0.0, 0.05);
  run_options opt;
  opt.pack_id = "RT";
  auto rr = run_protocol(pack, build_standard_sequence(sequence_kind::ts4), opt);
  REQUIRE_FALSE(rr.aborted);
  return std::move(rr.log);
}

}  // namespace

TEST_CASE("empty log round-trips through a header-only file") {
  const auto dir = oracles::make_temp_dir("ingest");
  const auto file = dir / "empty.csv";
  time_series_log log;
  log.meta.pack_id = "E";
  log.meta.sequence_name = "none";
  write_log(log, file);
  std::vector<std::string> warnings;
  const auto back = read_log(file, warnings);
  CHECK(back.samples.empty());
  CHECK(back.meta.pack_id == "E");
  CHECK(warnings.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("hand-written fixture recovers every field exactly") {
  const auto dir = oracles::make_temp_dir("ingest");
  const auto file = dir / "fixture.csv";
  write_text(file,
             "# pack_id: FIX\n"
             "# sequence_name: bench\n"
             "# nominal_capacity_ah: 5\n"
             "# sign_convention: positive=charge\n"
             "time_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index\n"
             "0,0,3.7,3.71,3.72,3.73,3.74,0\n"
             "1,-2,3.64,3.65,3.66,3.67,3.68,0\n"
             "2,-2,3.6399,3.6499,3.6599,3.6699,3.6799,1\n");
  const auto log = read_log(file);
  REQUIRE(log.samples.size() == 3);
  CHECK(log.meta.pack_id == "FIX");
  CHECK(log.meta.sequence_name == "bench");
  CHECK(log.meta.nominal_capacity_ah == 5.0);
  CHECK(log.samples[1].t_s == 1.0);
  CHECK(log.samples[1].i_pack_a == -2.0);
  CHECK(log.samples[1].v_cell_v[0] == 3.64);
  CHECK(log.samples[2].v_cell_v[4] == 3.6799);
  CHECK(log.samples[2].step_index == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a full TS4 log round-trips within the wire contract") {
  const auto log = simulate_ts4();
  REQUIRE(log.samples.size() > 90000);

  const auto dir = oracles::make_temp_dir("ingest");
  const auto file = dir / "ts4.csv";
  write_log(log, file);
  const auto back = read_log(file);
  CHECK(logs_round_trip(log, back));
  std::filesystem::remove_all(dir);
}

TEST_CASE("random logs round-trip exactly") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> volts(2.0, 4.5);
  std::uniform_real_distribution<double> amps(-6.0, 6.0);
  std::uniform_int_distribution<int> rows(0, 300);

  const auto dir = oracles::make_temp_dir("ingest");
  for (int trial = 0; trial < 20; ++trial) {
    time_series_log log;
    log.meta.pack_id = "R" + std::to_string(trial);
    log.meta.sequence_name = "rand";
    log.meta.nominal_capacity_ah = 5.0;
    double t = 0.0;
    const int n = rows(rng);
    for (int i = 0; i < n; ++i) {
      t += 0.1 + std::abs(amps(rng)) * 0.01;
      log_sample s;
      s.t_s = t;
      s.i_pack_a = amps(rng);
      for (int c = 0; c < 5; ++c) s.v_cell_v[c] = volts(rng);
      s.step_index = i / 50;
      log.samples.push_back(s);
    }
    const auto file = dir / ("r" + std::to_string(trial) + ".csv");
    write_log(log, file);
    CHECK(logs_round_trip(log, read_log(file)));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("reader rejects structural defects, naming the offending row") {
  const auto dir = oracles::make_temp_dir("ingest");
  const std::string header =
      "# pack_id: X\n# sequence_name: s\n# nominal_capacity_ah: 5\n"
      "# sign_convention: positive=charge\n"
      "time_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index\n";

  SUBCASE("decreasing time") {
    const auto file = dir / "bad_time.csv";
    write_text(file, header +
                         "0,0,3.7,3.7,3.7,3.7,3.7,0\n"
                         "1,0,3.7,3.7,3.7,3.7,3.7,0\n"
                         "0.5,0,3.7,3.7,3.7,3.7,3.7,0\n");
    try {
      read_log(file);
      FAIL("expected format_error");
    } catch (const format_error& e) {
      CHECK(e.row() == 2);
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }

  SUBCASE("wrong column count") {
    const auto file = dir / "bad_cols.csv";
    write_text(file, header + "0,0,3.7,3.7,3.7,3.7,0\n");
    CHECK_THROWS_AS(read_log(file), format_error);
  }

  SUBCASE("unparsable field") {
    const auto file = dir / "bad_num.csv";
    write_text(file, header + "0,zero,3.7,3.7,3.7,3.7,3.7,0\n");
    CHECK_THROWS_AS(read_log(file), format_error);
  }

  SUBCASE("missing header line") {
    const auto file = dir / "no_header.csv";
    write_text(file, "0,0,3.7,3.7,3.7,3.7,3.7,0\n");
    CHECK_THROWS_AS(read_log(file), format_error);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing metadata defaults with warnings; opposite sign convention flips") {
  const auto dir = oracles::make_temp_dir("ingest");

  const auto bare = dir / "bare.csv";
  write_text(bare,
             "time_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index\n"
             "0,1.5,3.7,3.7,3.7,3.7,3.7,0\n");
  std::vector<std::string> warnings;
  const auto log = read_log(bare, warnings);
  CHECK(warnings.size() == 4);
  CHECK(log.meta.nominal_capacity_ah == 5.0);
  CHECK(log.samples[0].i_pack_a == 1.5);

  // A cycler that logs discharge as positive is flipped on ingest.
  const auto flipped = dir / "flipped.csv";
  write_text(flipped,
             "# pack_id: F\n# sequence_name: s\n# nominal_capacity_ah: 5\n"
             "# sign_convention: positive=discharge\n"
             "time_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index\n"
             "0,2,3.7,3.7,3.7,3.7,3.7,0\n");
  const auto flog = read_log(flipped);
  CHECK(flog.samples[0].i_pack_a == -2.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("validate_log reports anomalies without repairing") {
  SUBCASE("clean simulated log has no findings") {
    const auto log = simulate_ts4();
    CHECK(validate_log(log).empty());
  }

  SUBCASE("duplicated timestamp yields a single finding") {
    time_series_log log;
    for (int i = 0; i < 10; ++i) {
      log_sample s;
      s.t_s = i;
      s.v_cell_v.fill(3.7);
      log.samples.push_back(s);
    }
    log.samples.insert(log.samples.begin() + 5, log.samples[4]);  // repeated row
    const auto findings = validate_log(log);
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].code == "duplicate_time");
    CHECK(findings[0].row == 5);
    CHECK(findings[0].severity == finding_severity::error);
  }

  SUBCASE("a gap inside a TS4 interrupt is a timing finding at that row") {
    auto log = simulate_ts4();
    // Find the first zero-current window and delete two samples inside it.
    std::size_t window_start = 0;
    for (std::size_t i = 1; i < log.samples.size(); ++i) {
      if (log.samples[i].i_pack_a == 0.0 && log.samples[i - 1].i_pack_a != 0.0) {
        window_start = i;
        break;
      }
    }
    REQUIRE(window_start > 0);
    log.samples.erase(log.samples.begin() + static_cast<long>(window_start) + 5,
                      log.samples.begin() + static_cast<long>(window_start) + 7);
    const auto findings = validate_log(log);
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].code == "irregular_spacing");
    CHECK(findings[0].row == window_start + 5);
    CHECK(log.samples[findings[0].row].i_pack_a == 0.0);  // inside the interrupt
  }

  SUBCASE("non-finite values are flagged") {
    time_series_log log;
    log_sample s;
    s.t_s = 0.0;
    s.v_cell_v.fill(3.7);
    log.samples.push_back(s);
    log.samples[0].v_cell_v[3] = std::nan("");
    const auto findings = validate_log(log);
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].code == "non_finite");
  }
}

TEST_CASE("downsampling keeps every n-th sample") {
  time_series_log log;
  for (int i = 0; i < 25; ++i) {
    log_sample s;
    s.t_s = i * 0.1;
    s.i_pack_a = i;
    s.v_cell_v.fill(3.7);
    log.samples.push_back(s);
  }
  const auto down = downsample_log(log, 10);
  REQUIRE(down.samples.size() == 3);
  CHECK(down.samples[0].i_pack_a == 0.0);
  CHECK(down.samples[1].i_pack_a == 10.0);
  CHECK(down.samples[2].i_pack_a == 20.0);
  CHECK_THROWS_AS(downsample_log(log, 0), usage_error);
}

TEST_CASE("io failures surface with path context") {
  time_series_log log;
  CHECK_THROWS_WITH_AS(write_log(log, "/nonexistent-dir/x.csv"),
                       doctest::Contains("/nonexistent-dir/x.csv"),
                       std::runtime_error);
  CHECK_THROWS_AS(read_log("/nonexistent-dir/x.csv"), std::runtime_error);
}
