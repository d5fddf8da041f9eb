// Batch campaign driver: simulate, analyze, fit, screen, report.

#include "cellscreen/campaign.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "cellscreen/diag.hpp"
#include "cellscreen/errors.hpp"
#include "cellscreen/ingest.hpp"
#include "json.hpp"
#include "num_format.hpp"

namespace cellscreen {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using detail::append_double;
using detail::parse_double;

namespace {

constexpr double k_screening_v_target = 4.0;

std::string sanitize_component(std::string_view text) {
  std::string out;
  for (char c : text) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')
               ? c
               : '-';
  }
  return out;
}

void check_pack_id(const std::string& id) {
  if (id.empty()) throw usage_error("pack_id must not be empty");
  for (char c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-') {
      throw usage_error("pack_id may contain only letters, digits and '-': '" + id + "'");
    }
  }
}

void reject_unknown_keys(const ordered_json& j, const char* where,
                         std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw usage_error(std::string("unknown field '") + key + "' in " + where);
    }
  }
}

ordered_json group_to_json(const cell_group_params& p) {
  ordered_json j;
  j["capacity_ah"] = p.capacity_ah;
  j["r_s"] = p.r_s_ohm;
  j["r_1"] = p.r_1_ohm;
  j["c_1"] = p.c_1_f;
  j["r_tab"] = p.r_tab_ohm;
  auto ocv = ordered_json::array();
  for (const auto& pt : p.ocv.points()) {
    ocv.push_back(ordered_json::array({pt.soc, pt.voltage_v}));
  }
  j["ocv"] = ocv;
  return j;
}

cell_group_params group_from_json(const ordered_json& j, const char* where) {
  reject_unknown_keys(j, where, {"capacity_ah", "r_s", "r_1", "c_1", "r_tab", "ocv"});
  cell_group_params p;
  p.capacity_ah = j.value("capacity_ah", p.capacity_ah);
  p.r_s_ohm = j.value("r_s", p.r_s_ohm);
  p.r_1_ohm = j.value("r_1", p.r_1_ohm);
  p.c_1_f = j.value("c_1", p.c_1_f);
  p.r_tab_ohm = j.value("r_tab", p.r_tab_ohm);
  if (j.contains("ocv")) {
    std::vector<ocv_point> points;
    for (const auto& pair : j.at("ocv")) {
      points.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
    }
    p.ocv = ocv_curve(std::move(points));
  }
  p.validate();
  return p;
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::string text(size > 0 ? static_cast<std::size_t>(size) : 0, '\0');
  if (!text.empty()) in.read(text.data(), size);
  if (!in) throw std::runtime_error("read failed for " + file.string());
  return text;
}

void write_text_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

// Runs fn(0..n-1) across up to `jobs` threads, slots striped by index; the
// first failure (by index) is rethrown after all workers join.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::clamp(jobs, 1, std::max(1, n));
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (int i = w; i < n; i += jobs) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<fs::path> sorted_csv_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string_view> split_csv_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

pack_setup load_pack_file(const fs::path& file) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_text_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw format_error("pack file " + file.string() + ": " + e.what());
  }
  try {
    reject_unknown_keys(j, "pack file",
                        {"pack_id", "nominal_capacity_ah", "initial_soc", "groups"});
    const std::string pack_id = j.value("pack_id", std::string("pack"));
    check_pack_id(pack_id);
    const double nominal = j.value("nominal_capacity_ah", 5.0);
    const double initial_soc = j.value("initial_soc", 1.0);
    if (!(initial_soc >= 0.0 && initial_soc <= 1.0)) {
      throw usage_error("initial_soc must lie in [0, 1]");
    }

    const auto& jgroups = j.at("groups");
    if (jgroups.size() != pack_model::group_count) {
      throw usage_error("pack file needs exactly 5 groups, found " +
                        std::to_string(jgroups.size()));
    }
    std::array<cell_group_params, pack_model::group_count> groups{};
    for (int g = 0; g < pack_model::group_count; ++g) {
      groups[g] = group_from_json(jgroups[static_cast<std::size_t>(g)], "pack group");
    }
    std::array<cell_group_state, pack_model::group_count> states{};
    for (auto& s : states) s = {initial_soc, 0.0};
    return {pack_id, pack_model(std::move(groups), states), nominal};
  } catch (const nlohmann::json::exception& e) {
    throw format_error("pack file " + file.string() + ": " + e.what());
  }
}

void save_pack_file(const pack_setup& setup, const fs::path& file) {
  ordered_json j;
  j["pack_id"] = setup.pack_id;
  j["nominal_capacity_ah"] = setup.nominal_capacity_ah;
  j["initial_soc"] = setup.pack.states()[0].soc;
  j["groups"] = ordered_json::array();
  for (int g = 0; g < pack_model::group_count; ++g) {
    j["groups"].push_back(group_to_json(setup.pack.group(g)));
  }
  write_text_file(file, j.dump(2) + "\n");
}

campaign_config campaign_config_from_json(std::string_view text,
                                          const fs::path& base_dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("campaign config: ") + e.what());
  }
  try {
    reject_unknown_keys(j, "campaign config",
                        {"seed", "out_dir", "sequences", "pack_file", "fleet",
                         "initial_soc", "analysis", "screening", "run", "jobs"});
    campaign_config cfg;
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("out_dir")) {
      cfg.out_dir = base_dir / fs::path(j.at("out_dir").get<std::string>());
    }
    if (j.contains("sequences")) {
      for (const auto& s : j.at("sequences")) {
        auto name = s.get<std::string>();
        // Sequence files travel with the config; standard names pass through.
        if (name.ends_with(".json")) {
          name = (base_dir / fs::path(name)).string();
        }
        cfg.sequences.push_back(std::move(name));
      }
    }
    if (j.contains("pack_file")) {
      cfg.pack_file = base_dir / fs::path(j.at("pack_file").get<std::string>());
    }
    if (j.contains("fleet")) {
      const auto& jf = j.at("fleet");
      reject_unknown_keys(jf, "fleet", {"n", "base", "aging"});
      fleet_config fc;
      fc.n = jf.at("n").get<int>();
      if (jf.contains("base")) fc.base = group_from_json(jf.at("base"), "fleet base");
      if (jf.contains("aging")) {
        const auto& ja = jf.at("aging");
        reject_unknown_keys(ja, "aging",
                            {"capacity_fade_range", "resistance_slope_ohm_per_ah",
                             "resistance_noise_sd_ohm", "cell_spread_sd"});
        if (ja.contains("capacity_fade_range")) {
          fc.aging.capacity_fade_range = {
              ja.at("capacity_fade_range").at(0).get<double>(),
              ja.at("capacity_fade_range").at(1).get<double>()};
        }
        fc.aging.resistance_slope_ohm_per_ah =
            ja.value("resistance_slope_ohm_per_ah", 0.0);
        fc.aging.resistance_noise_sd_ohm = ja.value("resistance_noise_sd_ohm", 0.0);
        fc.aging.cell_spread_sd = ja.value("cell_spread_sd", 0.0);
      }
      cfg.fleet = std::move(fc);
    }
    if (j.contains("initial_soc")) cfg.initial_soc = j.at("initial_soc").get<double>();
    if (j.contains("analysis")) {
      const auto& ja = j.at("analysis");
      reject_unknown_keys(ja, "analysis",
                          {"v_max_v", "v_min_v", "v_threshold_v", "min_delta_i_a",
                           "fit_cells", "report_cell"});
      cfg.analysis.v_max_v = ja.value("v_max_v", cfg.analysis.v_max_v);
      cfg.analysis.v_min_v = ja.value("v_min_v", cfg.analysis.v_min_v);
      cfg.analysis.v_threshold_v = ja.value("v_threshold_v", cfg.analysis.v_threshold_v);
      cfg.analysis.min_delta_i_a = ja.value("min_delta_i_a", 0.0);
      if (ja.contains("fit_cells")) {
        cfg.analysis.fit_cells = ja.at("fit_cells").get<std::vector<int>>();
      }
      cfg.analysis.report_cell = ja.value("report_cell", cfg.analysis.report_cell);
    }
    if (j.contains("screening")) {
      const auto& js = j.at("screening");
      reject_unknown_keys(js, "screening",
                          {"pass_fraction", "reject_fraction", "nominal_capacity_ah"});
      cfg.screening.pass_fraction = js.value("pass_fraction", cfg.screening.pass_fraction);
      cfg.screening.reject_fraction =
          js.value("reject_fraction", cfg.screening.pass_fraction - 0.10);
      cfg.screening.nominal_capacity_ah =
          js.value("nominal_capacity_ah", cfg.screening.nominal_capacity_ah);
    }
    if (j.contains("run")) {
      const auto& jr = j.at("run");
      reject_unknown_keys(jr, "run", {"dt_s", "safety_v_min", "safety_v_max", "max_step_s"});
      cfg.run.dt_s = jr.value("dt_s", cfg.run.dt_s);
      cfg.run.safety.v_min_v = jr.value("safety_v_min", cfg.run.safety.v_min_v);
      cfg.run.safety.v_max_v = jr.value("safety_v_max", cfg.run.safety.v_max_v);
      cfg.run.max_step_s = jr.value("max_step_s", cfg.run.max_step_s);
    }
    cfg.jobs = j.value("jobs", 0);

    for (int c : cfg.analysis.fit_cells) {
      if (c < 1 || c > 5) throw usage_error("fit_cells entries must be 1..5");
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("campaign config: ") + e.what());
  }
}

campaign_config load_campaign_config(const fs::path& file) {
  return campaign_config_from_json(read_text_file(file), file.parent_path());
}

namespace {

std::vector<test_sequence> resolve_sequences(const campaign_config& cfg) {
  if (cfg.sequences.empty()) {
    throw usage_error("config field 'sequences' must name at least one sequence");
  }
  std::vector<test_sequence> out;
  for (const auto& name : cfg.sequences) {
    bool standard = true;
    sequence_kind kind{};
    try {
      kind = sequence_kind_from_string(name);
    } catch (const usage_error&) {
      standard = false;
    }
    if (standard) {
      if (kind == sequence_kind::full_campaign) {
        for (auto k : {sequence_kind::ts1, sequence_kind::ts2, sequence_kind::ts3,
                       sequence_kind::ts4, sequence_kind::ts5, sequence_kind::ts6,
                       sequence_kind::ts7}) {
          out.push_back(build_standard_sequence(k));
        }
      } else {
        out.push_back(build_standard_sequence(kind));
      }
    } else if (name.size() > 5 && name.ends_with(".json")) {
      out.push_back(load_sequence(fs::path(name)));
    } else {
      throw usage_error("unknown sequence '" + name +
                        "' (expected TS1..TS7, full, or a .json sequence file)");
    }
  }
  return out;
}

}  // namespace

simulate_result cmd_simulate(const campaign_config& cfg) {
  if (cfg.out_dir.empty()) throw usage_error("config field 'out_dir' is required");
  if (cfg.pack_file.empty() == !cfg.fleet.has_value()) {
    throw usage_error("config needs exactly one of 'pack_file' or 'fleet'");
  }
  const auto sequences = resolve_sequences(cfg);

  const fs::path logs_dir = cfg.out_dir / "logs";
  fs::create_directories(logs_dir);

  simulate_result result;
  std::vector<pack_setup> setups;
  if (cfg.fleet) {
    aging_spec spec = cfg.fleet->aging;
    spec.seed = cfg.seed;
    auto fleet = generate_fleet(cfg.fleet->n, cfg.fleet->base, spec);
    result.manifest_file = cfg.out_dir / "manifest.json";
    write_fleet_manifest(fleet, cfg.fleet->base, spec, result.manifest_file);
    setups.reserve(fleet.size());
    for (auto& sp : fleet) {
      setups.push_back({sp.pack_id, std::move(sp.pack), cfg.fleet->base.capacity_ah});
    }
  } else {
    setups.push_back(load_pack_file(cfg.pack_file));
  }
  if (cfg.initial_soc) {
    if (!(*cfg.initial_soc >= 0.0 && *cfg.initial_soc <= 1.0)) {
      throw usage_error("config field 'initial_soc' must lie in [0, 1]");
    }
    for (auto& s : setups) s.pack.set_soc(*cfg.initial_soc);
  }

  const int n = static_cast<int>(setups.size());
  std::vector<std::vector<fs::path>> files_per_pack(static_cast<std::size_t>(n));
  std::vector<std::string> abort_per_pack(static_cast<std::size_t>(n));

  parallel_for(n, cfg.jobs, [&](int i) {
    auto& setup = setups[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < sequences.size(); ++k) {
      test_sequence seq = sequences[k];
      if (k > 0 && seq.inter_step_rest_s > 0.0 && !seq.steps.empty()) {
        // The rest between chained sequences lands at the head of the next log.
        protocol_step lead;
        lead.kind = step_kind::rest;
        lead.rest_s = seq.inter_step_rest_s;
        lead.sampling_hz = seq.steps.front().sampling_hz;
        seq.steps.insert(seq.steps.begin(), lead);
      }
      run_options opt = cfg.run;
      opt.pack_id = setup.pack_id;
      opt.nominal_capacity_ah = setup.nominal_capacity_ah;
      auto rr = run_protocol(setup.pack, seq, opt);
      const fs::path file =
          logs_dir / (setup.pack_id + "_" + sanitize_component(seq.name) + ".csv");
      write_log(rr.log, file);
      files_per_pack[static_cast<std::size_t>(i)].push_back(file);
      diag_debug("simulated " + setup.pack_id + " " + seq.name + " (" +
                 std::to_string(rr.log.samples.size()) + " samples)");
      if (rr.aborted) {
        abort_per_pack[static_cast<std::size_t>(i)] =
            setup.pack_id + " " + seq.name + ": " + rr.abort_reason;
        break;
      }
    }
  });

  for (int i = 0; i < n; ++i) {
    auto& fp = files_per_pack[static_cast<std::size_t>(i)];
    result.log_files.insert(result.log_files.end(), fp.begin(), fp.end());
    if (!abort_per_pack[static_cast<std::size_t>(i)].empty()) {
      result.aborts.push_back(abort_per_pack[static_cast<std::size_t>(i)]);
    }
  }
  return result;
}

namespace {

std::vector<rs_method> methods_for_sequence(const std::string& name) {
  if (name.starts_with("TS4")) return {rs_method::ci};
  if (name.starts_with("TS2")) return {rs_method::di};
  if (name.starts_with("TS7")) return {rs_method::hppc};
  if (name.starts_with("TS")) return {};
  return {rs_method::ci, rs_method::di, rs_method::hppc};
}

std::string analysis_base_name(const time_series_log& log, const fs::path& source) {
  if (log.meta.pack_id.empty() || log.meta.sequence_name.empty()) {
    return sanitize_component(source.stem().string());
  }
  return sanitize_component(log.meta.pack_id) + "_" +
         sanitize_component(log.meta.sequence_name);
}

std::string profile_csv(const std::vector<std::vector<resistance_estimate>>& per_cell) {
  std::string text = "cell,v_terminal_v,r_s_ohm,dt_sample_s,delta_i_a,t_s\n";
  for (const auto& profile : per_cell) {
    for (const auto& p : profile) {
      text += std::to_string(p.cell_index);
      text += ',';
      append_double(text, p.v_terminal_v);
      text += ',';
      append_double(text, p.r_s_ohm);
      text += ',';
      append_double(text, p.dt_sample_s);
      text += ',';
      append_double(text, p.delta_i_a);
      text += ',';
      append_double(text, p.t_s);
      text += '\n';
    }
  }
  return text;
}

}  // namespace

analyze_result cmd_analyze(const campaign_config& cfg) {
  const fs::path logs_dir = cfg.out_dir / "logs";
  if (!fs::is_directory(logs_dir)) {
    throw usage_error("no logs under " + logs_dir.string() + "; run simulate first");
  }
  const fs::path analysis_dir = cfg.out_dir / "analysis";
  fs::create_directories(analysis_dir);

  const auto log_files = sorted_csv_files(logs_dir);
  const int n = static_cast<int>(log_files.size());
  std::vector<std::vector<fs::path>> files_per_log(static_cast<std::size_t>(n));
  std::vector<std::vector<std::string>> warnings_per_log(static_cast<std::size_t>(n));

  parallel_for(n, cfg.jobs, [&](int i) {
    const auto& source = log_files[static_cast<std::size_t>(i)];
    auto& out_files = files_per_log[static_cast<std::size_t>(i)];
    auto& warnings = warnings_per_log[static_cast<std::size_t>(i)];

    const auto log = read_log(source);
    const std::string base = analysis_base_name(log, source);
    const double min_delta_i = cfg.analysis.min_delta_i_a > 0.0
                                   ? cfg.analysis.min_delta_i_a
                                   : default_min_delta_i(log.meta.nominal_capacity_ah);

    for (rs_method method : methods_for_sequence(log.meta.sequence_name)) {
      std::vector<std::vector<resistance_estimate>> per_cell;
      bool any = false;
      for (int cell = 1; cell <= 5; ++cell) {
        per_cell.push_back(rs_voltage_profile(log, cell, method, min_delta_i));
        any = any || !per_cell.back().empty();
      }
      if (!any) continue;
      const fs::path file =
          analysis_dir / (base + "_rs_" + std::string(to_string(method)) + ".csv");
      write_text_file(file, profile_csv(per_cell));
      out_files.push_back(file);
    }

    bool has_discharge = false;
    for (const auto& s : log.samples) {
      if (s.i_pack_a < -1e-9) {
        has_discharge = true;
        break;
      }
    }
    if (has_discharge) {
      std::string text = "cell,capacity_ah,v_max_v,v_min_v,c_rate_per_h\n";
      int rows = 0;
      for (int cell = 1; cell <= 5; ++cell) {
        try {
          const auto est = coulomb_count_capacity(log, cell, cfg.analysis.v_max_v,
                                                  cfg.analysis.v_min_v);
          text += std::to_string(est.cell_index);
          text += ',';
          append_double(text, est.capacity_ah);
          text += ',';
          append_double(text, est.v_max_v);
          text += ',';
          append_double(text, est.v_min_v);
          text += ',';
          append_double(text, est.c_rate_per_h);
          text += '\n';
          ++rows;
        } catch (const window_error& e) {
          warnings.push_back(base + " cell " + std::to_string(cell) + ": " + e.what());
        }
      }
      if (rows > 0) {
        const fs::path file = analysis_dir / (base + "_capacity.csv");
        write_text_file(file, text);
        out_files.push_back(file);
      }
    }
  });

  analyze_result result;
  for (int i = 0; i < n; ++i) {
    auto& f = files_per_log[static_cast<std::size_t>(i)];
    auto& w = warnings_per_log[static_cast<std::size_t>(i)];
    std::sort(f.begin(), f.end());
    result.files.insert(result.files.end(), f.begin(), f.end());
    result.warnings.insert(result.warnings.end(), w.begin(), w.end());
  }
  return result;
}

namespace {

struct pack_analysis {
  // cell -> CI profile rows (v_terminal, r_s)
  std::map<int, std::vector<std::pair<double, double>>> ci_points;
  // cell -> (|c_rate|, capacity) with the slowest rate retained
  std::map<int, std::pair<double, double>> capacity;
};

std::map<std::string, pack_analysis> collect_analysis(const fs::path& analysis_dir) {
  std::map<std::string, pack_analysis> packs;
  for (const auto& file : sorted_csv_files(analysis_dir)) {
    const std::string name = file.filename().string();
    const auto underscore = name.find('_');
    if (underscore == std::string::npos) continue;
    const std::string pack_id = name.substr(0, underscore);
    const bool is_ci = name.ends_with("_rs_ci.csv");
    const bool is_capacity = name.ends_with("_capacity.csv");
    if (!is_ci && !is_capacity) continue;

    const std::string text = read_text_file(file);
    std::size_t pos = text.find('\n');  // skip header
    if (pos == std::string::npos) continue;
    ++pos;
    std::size_t row = 1;
    while (pos < text.size()) {
      auto eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string_view line(text.data() + pos, eol - pos);
      pos = eol + 1;
      if (line.empty()) continue;
      const auto cells = split_csv_row(line);
      if (is_ci && cells.size() >= 3) {
        const int cell = static_cast<int>(parse_double(cells[0], row, "cell"));
        packs[pack_id].ci_points[cell].push_back(
            {parse_double(cells[1], row, "v_terminal_v"),
             parse_double(cells[2], row, "r_s_ohm")});
      } else if (is_capacity && cells.size() >= 5) {
        const int cell = static_cast<int>(parse_double(cells[0], row, "cell"));
        const double capacity = parse_double(cells[1], row, "capacity_ah");
        const double c_rate = std::abs(parse_double(cells[4], row, "c_rate_per_h"));
        auto it = packs[pack_id].capacity.find(cell);
        if (it == packs[pack_id].capacity.end() || c_rate < it->second.first) {
          packs[pack_id].capacity[cell] = {c_rate, capacity};
        }
      }
      ++row;
    }
  }
  return packs;
}

}  // namespace

fit_result cmd_fit(const campaign_config& cfg) {
  const fs::path analysis_dir = cfg.out_dir / "analysis";
  if (!fs::is_directory(analysis_dir)) {
    throw usage_error("no analysis outputs under " + analysis_dir.string() +
                      "; run analyze first");
  }
  const auto packs = collect_analysis(analysis_dir);

  std::vector<int> cells = cfg.analysis.fit_cells;
  std::sort(cells.begin(), cells.end());

  std::vector<fit_point> points;
  std::string points_csv = "pack_id,cell,r_s_ohm,capacity_ah\n";
  for (const auto& [pack_id, data] : packs) {
    for (int cell : cells) {
      const auto ci = data.ci_points.find(cell);
      const auto cap = data.capacity.find(cell);
      if (ci == data.ci_points.end() || cap == data.capacity.end()) continue;
      double best_rs = 0.0;
      double best_distance = std::numeric_limits<double>::infinity();
      for (const auto& [v_terminal, r_s] : ci->second) {
        const double d = std::abs(v_terminal - k_screening_v_target);
        if (d < best_distance) {
          best_distance = d;
          best_rs = r_s;
        }
      }
      points.push_back({best_rs, cap->second.second});
      points_csv += pack_id + "," + std::to_string(cell) + ",";
      append_double(points_csv, best_rs);
      points_csv += ',';
      append_double(points_csv, cap->second.second);
      points_csv += '\n';
    }
  }

  fit_result result;
  result.fit = fit_capacity_resistance(points);
  result.fit_file = cfg.out_dir / "fit.json";
  result.points_file = cfg.out_dir / "fit_points.csv";
  write_text_file(result.fit_file, fit_to_json(result.fit));
  write_text_file(result.points_file, points_csv);
  return result;
}

screen_result cmd_screen(const campaign_config& cfg, const screen_request& req) {
  if (!req.r_s_ohm && req.log_file.empty()) {
    throw usage_error("screen needs either an r_s value or a log file");
  }
  const fs::path fit_file =
      req.fit_file.empty() ? cfg.out_dir / "fit.json" : req.fit_file;
  if (!fs::exists(fit_file)) {
    throw usage_error("no fit at " + fit_file.string() + "; run fit first");
  }
  const auto fit = fit_from_json(read_text_file(fit_file));

  screen_result result;
  double r_s = 0.0;
  std::string source = "value";
  if (req.r_s_ohm) {
    r_s = *req.r_s_ohm;
  } else if (!req.log_file.empty()) {
    const auto log = read_log(req.log_file);
    const double min_delta_i = cfg.analysis.min_delta_i_a > 0.0
                                   ? cfg.analysis.min_delta_i_a
                                   : default_min_delta_i(log.meta.nominal_capacity_ah);
    const auto profile =
        rs_voltage_profile(log, req.cell_index, rs_method::ci, min_delta_i);
    const auto* point = select_screening_point(profile, k_screening_v_target);
    if (point == nullptr) {
      throw insufficient_data_error("no charge interrupt found in " +
                                    req.log_file.string());
    }
    if (point->v_terminal_v < cfg.analysis.v_threshold_v) {
      diag_info("screening point at " + detail::format_double(point->v_terminal_v) +
                " V is below the " + detail::format_double(cfg.analysis.v_threshold_v) +
                " V flatness threshold");
    }
    r_s = point->r_s_ohm;
    result.v_terminal_v = point->v_terminal_v;
    result.from_log = true;
    source = log.meta.pack_id.empty() ? sanitize_component(req.log_file.stem().string())
                                      : sanitize_component(log.meta.pack_id);
  } else {
    throw usage_error("screen needs either an r_s value or a log file");
  }

  result.decision = screen_cell(r_s, fit, cfg.screening);
  fs::create_directories(cfg.out_dir);
  result.decision_file = cfg.out_dir / ("decision_" + source + ".json");
  write_text_file(result.decision_file, decision_to_json(result.decision));
  return result;
}

std::vector<fs::path> cmd_report(const campaign_config& cfg) {
  const fs::path logs_dir = cfg.out_dir / "logs";
  const fs::path analysis_dir = cfg.out_dir / "analysis";
  const fs::path report_dir = cfg.out_dir / "report";
  fs::create_directories(report_dir);
  std::vector<fs::path> written;

  const int cell = cfg.analysis.report_cell;
  if (cell < 1 || cell > 5) throw usage_error("report_cell must be 1..5");

  // Discharge curves: terminal voltage against discharged charge, one series
  // per (pack, sequence); rows strided to keep the file plottable.
  if (fs::is_directory(logs_dir)) {
    std::string text = "pack_id,sequence,c_rate_per_h,discharged_ah,v_cell\n";
    for (const auto& file : sorted_csv_files(logs_dir)) {
      const auto log = read_log(file);
      std::vector<std::pair<double, double>> curve;  // (discharged_ah, v)
      double discharged_as = 0.0;
      double rate_sum = 0.0;
      std::size_t rate_count = 0;
      for (std::size_t i = 1; i < log.samples.size(); ++i) {
        const auto& prev = log.samples[i - 1];
        const auto& cur = log.samples[i];
        if (cur.i_pack_a < -1e-9) {
          discharged_as += 0.5 * (std::abs(prev.i_pack_a) + std::abs(cur.i_pack_a)) *
                           (cur.t_s - prev.t_s);
          curve.push_back({discharged_as / 3600.0, cur.v_cell_v[cell - 1]});
          rate_sum += -cur.i_pack_a;
          ++rate_count;
        }
      }
      if (curve.empty()) continue;
      const double c_rate = rate_sum / static_cast<double>(rate_count) /
                            log.meta.nominal_capacity_ah;
      const std::size_t stride = std::max<std::size_t>(1, curve.size() / 2000);
      for (std::size_t i = 0; i < curve.size(); i += stride) {
        text += sanitize_component(log.meta.pack_id) + "," +
                sanitize_component(log.meta.sequence_name) + ",";
        append_double(text, c_rate);
        text += ',';
        append_double(text, curve[i].first);
        text += ',';
        append_double(text, curve[i].second);
        text += '\n';
      }
    }
    const fs::path file = report_dir / "discharge_voltage_curves.csv";
    write_text_file(file, text);
    written.push_back(file);
  }

  if (fs::is_directory(analysis_dir)) {
    // CI vs HPPC profiles for the report cell, and per-cell CI profiles.
    std::string methods_text = "pack_id,method,v_terminal_v,r_s_ohm\n";
    std::string cells_text = "pack_id,cell,v_terminal_v,r_s_ohm\n";
    for (const auto& file : sorted_csv_files(analysis_dir)) {
      const std::string name = file.filename().string();
      const bool is_ci = name.ends_with("_rs_ci.csv");
      const bool is_hppc = name.ends_with("_rs_hppc.csv");
      if (!is_ci && !is_hppc) continue;
      const auto underscore = name.find('_');
      const std::string pack_id = name.substr(0, underscore);
      const std::string text = read_text_file(file);
      std::size_t pos = text.find('\n');
      if (pos == std::string::npos) continue;
      ++pos;
      while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const auto row = split_csv_row(line);
        if (row.size() < 3) continue;
        const int row_cell =
            static_cast<int>(parse_double(row[0], format_error::no_row, "cell"));
        if (is_ci) {
          cells_text += pack_id + "," + std::to_string(row_cell) + "," +
                        std::string(row[1]) + "," + std::string(row[2]) + "\n";
        }
        if (row_cell == cell) {
          methods_text += pack_id + std::string(is_ci ? ",ci," : ",hppc,") +
                          std::string(row[1]) + "," + std::string(row[2]) + "\n";
        }
      }
    }
    const fs::path methods_file = report_dir / "rs_ci_vs_hppc.csv";
    write_text_file(methods_file, methods_text);
    written.push_back(methods_file);
    const fs::path cells_file = report_dir / "rs_per_cell.csv";
    write_text_file(cells_file, cells_text);
    written.push_back(cells_file);

    // Capacity against resistance for the fit cells, plus the fitted line
    // when present.
    const auto packs = collect_analysis(analysis_dir);
    std::string scatter = "pack_id,cell,r_s_ohm,capacity_ah\n";
    for (const auto& [pack_id, data] : packs) {
      for (const auto& [c, rows] : data.ci_points) {
        if (std::find(cfg.analysis.fit_cells.begin(), cfg.analysis.fit_cells.end(),
                      c) == cfg.analysis.fit_cells.end()) {
          continue;
        }
        const auto cap = data.capacity.find(c);
        if (cap == data.capacity.end()) continue;
        double best_rs = 0.0;
        double best_distance = std::numeric_limits<double>::infinity();
        for (const auto& [v_terminal, r_s] : rows) {
          const double d = std::abs(v_terminal - k_screening_v_target);
          if (d < best_distance) {
            best_distance = d;
            best_rs = r_s;
          }
        }
        scatter += pack_id + "," + std::to_string(c) + ",";
        append_double(scatter, best_rs);
        scatter += ',';
        append_double(scatter, cap->second.second);
        scatter += '\n';
      }
    }
    const fs::path scatter_file = report_dir / "capacity_vs_rs.csv";
    write_text_file(scatter_file, scatter);
    written.push_back(scatter_file);

    const fs::path fit_file = cfg.out_dir / "fit.json";
    if (fs::exists(fit_file)) {
      const auto fit = fit_from_json(read_text_file(fit_file));
      std::string line_text = "r_s_ohm,predicted_capacity_ah\n";
      constexpr int samples = 50;
      for (int i = 0; i <= samples; ++i) {
        const double r = fit.r_s_min_ohm + (fit.r_s_max_ohm - fit.r_s_min_ohm) *
                                               static_cast<double>(i) / samples;
        line_text += detail::format_double(r) + "," +
                     detail::format_double(fit.intercept_ah + fit.slope_ah_per_ohm * r) +
                     "\n";
      }
      const fs::path line_file = report_dir / "fit_line.csv";
      write_text_file(line_file, line_text);
      written.push_back(line_file);
    }
  }
  return written;
}

}  // namespace cellscreen
