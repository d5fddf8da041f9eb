// Synthetic aged-pack populations with capacity/resistance coupling.

#include "cellscreen/fleet.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cellscreen/errors.hpp"
#include "cellscreen/rng.hpp"
#include "json.hpp"

namespace cellscreen {

void aging_spec::validate() const {
  const auto [lo, hi] = capacity_fade_range;
  if (!(lo >= 0.0 && hi >= lo && hi < 1.0)) {
    throw usage_error("capacity_fade_range must satisfy 0 <= lo <= hi < 1");
  }
  if (resistance_slope_ohm_per_ah < 0.0) {
    throw usage_error("resistance_slope must be >= 0");
  }
  if (resistance_noise_sd_ohm < 0.0) {
    throw usage_error("resistance_noise_sd must be >= 0");
  }
  if (cell_spread_sd < 0.0) {
    throw usage_error("cell_spread_sd must be >= 0");
  }
}

std::vector<synthetic_pack> generate_fleet(int n, const cell_group_params& base,
                                           const aging_spec& spec) {
  if (n < 1) throw usage_error("fleet size must be >= 1");
  base.validate();
  spec.validate();

  std::vector<synthetic_pack> fleet;
  fleet.reserve(static_cast<std::size_t>(n));

  for (int p = 0; p < n; ++p) {
    random_stream rng(spec.seed, static_cast<std::uint64_t>(p));

    const double fade =
        spec.capacity_fade_range[0] == spec.capacity_fade_range[1]
            ? spec.capacity_fade_range[0]
            : rng.uniform(spec.capacity_fade_range[0], spec.capacity_fade_range[1]);

    // Per-group capacity dispersion, kept inside (0, nominal].
    std::array<double, pack_model::group_count> capacity{};
    for (int g = 0; g < pack_model::group_count; ++g) {
      double retained = 1.0 - fade;
      if (spec.cell_spread_sd > 0.0) {
        do {
          retained = (1.0 - fade) * (1.0 + rng.normal(0.0, spec.cell_spread_sd));
        } while (!(retained > 0.0 && retained <= 1.0));
      }
      capacity[g] = base.capacity_ah * retained;
    }

    // One noise draw per pack, resampled until every group's resistance stays
    // at or above the fresh value.
    double noise = 0.0;
    if (spec.resistance_noise_sd_ohm > 0.0) {
      bool admissible = false;
      while (!admissible) {
        noise = rng.normal(0.0, spec.resistance_noise_sd_ohm);
        admissible = true;
        for (int g = 0; g < pack_model::group_count; ++g) {
          const double lost_ah = base.capacity_ah - capacity[g];
          if (spec.resistance_slope_ohm_per_ah * lost_ah + noise < 0.0) {
            admissible = false;
            break;
          }
        }
      }
    }

    std::array<cell_group_params, pack_model::group_count> groups{
        base, base, base, base, base};
    for (int g = 0; g < pack_model::group_count; ++g) {
      const double lost_ah = base.capacity_ah - capacity[g];
      groups[g].capacity_ah = capacity[g];
      groups[g].r_s_ohm =
          base.r_s_ohm + spec.resistance_slope_ohm_per_ah * lost_ah + noise;
      groups[g].r_tab_ohm =
          (g == 0 || g == pack_model::group_count - 1) ? base.r_tab_ohm : 0.0;
    }

    std::array<cell_group_state, pack_model::group_count> states{};
    for (auto& s : states) s = {1.0, 0.0};

    char id[16];
    std::snprintf(id, sizeof id, "P%02d", p + 1);
    fleet.push_back({id, pack_model(std::move(groups), states), fade});
  }
  return fleet;
}

void write_fleet_manifest(const std::vector<synthetic_pack>& fleet,
                          const cell_group_params& base, const aging_spec& spec,
                          const std::filesystem::path& file) {
  using ordered_json = nlohmann::ordered_json;
  ordered_json j;
  j["rng"] = random_stream::algorithm();
  j["seed"] = spec.seed;
  j["aging"] = {
      {"capacity_fade_range", spec.capacity_fade_range},
      {"resistance_slope_ohm_per_ah", spec.resistance_slope_ohm_per_ah},
      {"resistance_noise_sd_ohm", spec.resistance_noise_sd_ohm},
      {"cell_spread_sd", spec.cell_spread_sd},
  };
  j["base"] = {
      {"capacity_ah", base.capacity_ah}, {"r_s", base.r_s_ohm},
      {"r_1", base.r_1_ohm},             {"c_1", base.c_1_f},
      {"r_tab", base.r_tab_ohm},
  };
  auto ocv = ordered_json::array();
  for (const auto& p : base.ocv.points()) {
    ocv.push_back(ordered_json::array({p.soc, p.voltage_v}));
  }
  j["base"]["ocv"] = ocv;

  j["packs"] = ordered_json::array();
  for (const auto& sp : fleet) {
    ordered_json jp;
    jp["pack_id"] = sp.pack_id;
    jp["fade"] = sp.fade;
    jp["groups"] = ordered_json::array();
    for (int g = 0; g < pack_model::group_count; ++g) {
      const auto& gp = sp.pack.group(g);
      jp["groups"].push_back({
          {"capacity_ah", gp.capacity_ah},
          {"r_s", gp.r_s_ohm},
          {"r_1", gp.r_1_ohm},
          {"c_1", gp.c_1_f},
          {"r_tab", gp.r_tab_ohm},
      });
    }
    j["packs"].push_back(jp);
  }

  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

}  // namespace cellscreen
