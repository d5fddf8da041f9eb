// cellscreen: batch front end for pack simulation, log analysis, the
// capacity-resistance fit, and screening decisions.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cellscreen/campaign.hpp"
#include "cellscreen/diag.hpp"
#include "cellscreen/errors.hpp"

namespace {

// Exit codes: 0 ok, 1 internal, 2 usage, 3 format, 4 numeric/data,
// 5 simulation aborted.
constexpr int exit_ok = 0;
constexpr int exit_internal = 1;
constexpr int exit_usage = 2;
constexpr int exit_format = 3;
constexpr int exit_numeric = 4;
constexpr int exit_aborted = 5;

struct cli_options {
  std::string config;
  std::string out;
  std::vector<std::string> sequences;
  std::string pack;
  std::optional<std::uint64_t> seed;
  std::optional<double> vmax;
  std::optional<double> vmin;
  std::optional<double> v_threshold;
  std::optional<double> initial_soc;
  std::vector<int> cells;
  std::optional<int> jobs;
};

void add_common_options(CLI::App* cmd, cli_options& opt) {
  cmd->add_option("--config", opt.config, "Campaign config JSON");
  cmd->add_option("--out", opt.out, "Output directory (overrides config)");
  cmd->add_option("--seed", opt.seed, "Campaign seed (overrides config)");
  cmd->add_option("--sequence", opt.sequences,
                  "Sequence selection: TS1..TS7, full, or a sequence JSON file");
  cmd->add_option("--vmax", opt.vmax, "Capacity window upper set point [V]");
  cmd->add_option("--vmin", opt.vmin, "Capacity window lower set point [V]");
  cmd->add_option("--v-threshold", opt.v_threshold,
                  "Terminal-voltage flatness threshold [V]");
  cmd->add_option("--cells", opt.cells, "Cells feeding the fit (default 2,3,4)")
      ->delimiter(',');
  cmd->add_option("--jobs", opt.jobs, "Parallel packs (default: hardware)");
}

cellscreen::campaign_config build_config(const cli_options& opt) {
  cellscreen::campaign_config cfg;
  if (!opt.config.empty()) {
    cfg = cellscreen::load_campaign_config(opt.config);
  }
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.sequences.empty()) cfg.sequences = opt.sequences;
  if (!opt.pack.empty()) {
    cfg.pack_file = opt.pack;
    cfg.fleet.reset();
  }
  if (opt.vmax) cfg.analysis.v_max_v = *opt.vmax;
  if (opt.vmin) cfg.analysis.v_min_v = *opt.vmin;
  if (opt.v_threshold) cfg.analysis.v_threshold_v = *opt.v_threshold;
  if (opt.initial_soc) cfg.initial_soc = opt.initial_soc;
  if (!opt.cells.empty()) cfg.analysis.fit_cells = opt.cells;
  if (opt.jobs) cfg.jobs = *opt.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellscreen - pack characterization and screening toolkit"};
  app.require_subcommand(1);

  cli_options opt;
  std::string fit_file;
  std::optional<double> rs_value;
  std::string screen_log;
  int screen_cell_index = 3;

  auto* simulate = app.add_subcommand(
      "simulate", "Run sequences on a pack or generated fleet; write CSV logs");
  add_common_options(simulate, opt);
  simulate->add_option("--pack", opt.pack, "Pack parameter JSON (overrides config)");
  simulate->add_option("--initial-soc", opt.initial_soc,
                       "Override each pack's starting state of charge");

  auto* analyze = app.add_subcommand(
      "analyze", "Extract resistance profiles and capacities from the logs");
  add_common_options(analyze, opt);

  auto* fit = app.add_subcommand(
      "fit", "Fit capacity against resistance from the analysis outputs");
  add_common_options(fit, opt);

  auto* screen = app.add_subcommand(
      "screen", "Classify a cell from a fitted line plus an r_s value or log");
  add_common_options(screen, opt);
  screen->add_option("--fit", fit_file, "Fit JSON (default: <out>/fit.json)");
  screen->add_option("--rs", rs_value, "Ohmic resistance of the candidate [ohm]");
  screen->add_option("--log", screen_log, "Charge log to take the near-4 V point from");
  screen->add_option("--cell", screen_cell_index, "Cell channel for --log (1..5)");

  auto* report = app.add_subcommand(
      "report", "Write plot-ready summary CSVs from logs and analysis outputs");
  add_common_options(report, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? exit_ok : exit_usage;
  }

  try {
    const auto cfg = build_config(opt);

    if (simulate->parsed()) {
      const auto result = cellscreen::cmd_simulate(cfg);
      std::printf("wrote %zu log file(s) under %s\n", result.log_files.size(),
                  (cfg.out_dir / "logs").c_str());
      if (!result.manifest_file.empty()) {
        std::printf("fleet ground truth: %s\n", result.manifest_file.c_str());
      }
      if (!result.aborts.empty()) {
        for (const auto& line : result.aborts) {
          std::fprintf(stderr, "aborted: %s (partial log retained)\n", line.c_str());
        }
        return exit_aborted;
      }
    } else if (analyze->parsed()) {
      const auto result = cellscreen::cmd_analyze(cfg);
      for (const auto& w : result.warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
      }
      std::printf("wrote %zu analysis file(s) under %s\n", result.files.size(),
                  (cfg.out_dir / "analysis").c_str());
    } else if (fit->parsed()) {
      const auto result = cellscreen::cmd_fit(cfg);
      std::printf("fit: capacity_ah = %.6g + %.6g * r_s_ohm  (R^2 %.4f, n %d)\n",
                  result.fit.intercept_ah, result.fit.slope_ah_per_ohm,
                  result.fit.r_squared, result.fit.n);
      std::printf("wrote %s and %s\n", result.fit_file.c_str(),
                  result.points_file.c_str());
    } else if (screen->parsed()) {
      cellscreen::screen_request req;
      req.fit_file = fit_file;
      req.r_s_ohm = rs_value;
      if (!screen_log.empty()) req.log_file = screen_log;
      req.cell_index = screen_cell_index;
      const auto result = cellscreen::cmd_screen(cfg, req);
      const auto& d = result.decision;
      const double fraction =
          d.predicted_capacity_ah / d.thresholds.nominal_capacity_ah;
      std::printf("decision: %s  predicted %.4f Ah (%.1f%% of nominal)%s\n",
                  std::string(to_string(d.cls)).c_str(), d.predicted_capacity_ah,
                  100.0 * fraction, d.extrapolated ? "  [extrapolated]" : "");
      if (result.from_log) {
        std::printf("source: charge interrupt at %.4f V\n", result.v_terminal_v);
      }
      std::printf("wrote %s\n", result.decision_file.c_str());
    } else if (report->parsed()) {
      const auto files = cellscreen::cmd_report(cfg);
      std::printf("wrote %zu report file(s) under %s\n", files.size(),
                  (cfg.out_dir / "report").c_str());
    }
    return exit_ok;
  } catch (const cellscreen::usage_error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return exit_usage;
  } catch (const cellscreen::format_error& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return exit_format;
  } catch (const cellscreen::numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return exit_numeric;
  } catch (const cellscreen::insufficient_data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return exit_numeric;
  } catch (const cellscreen::degenerate_fit_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return exit_numeric;
  } catch (const cellscreen::window_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return exit_numeric;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return exit_numeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_internal;
  }
}
