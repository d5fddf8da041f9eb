#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cellscreen/ecm.hpp"

namespace cellscreen {

/// Knobs for generating an aged population. Capacity fade is drawn per pack;
/// the resistance rise is a linear function of the ampere-hours lost (the
/// film-growth coupling), plus per-pack gaussian scatter truncated so that
/// resistance never falls below the fresh value. cell_spread_sd disperses the
/// groups inside one pack.
struct aging_spec {
  std::array<double, 2> capacity_fade_range{0.0, 0.0};
  double resistance_slope_ohm_per_ah = 0.0;
  double resistance_noise_sd_ohm = 0.0;
  double cell_spread_sd = 0.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws usage_error
};

/// A generated pack together with its identity. The pack's group parameters
/// are the ground-truth labels estimators are later scored against.
struct synthetic_pack {
  std::string pack_id;
  pack_model pack;
  double fade = 0.0;
};

/// Deterministic population generator: the same (n, base, spec) always yields
/// byte-identical packs, independently of threading or call order. The base
/// r_tab is applied to the end groups only.
std::vector<synthetic_pack> generate_fleet(int n, const cell_group_params& base,
                                           const aging_spec& spec);

/// Ground-truth manifest for scoring estimators against the generated fleet.
void write_fleet_manifest(const std::vector<synthetic_pack>& fleet,
                          const cell_group_params& base, const aging_spec& spec,
                          const std::filesystem::path& file);

}  // namespace cellscreen
