#pragma once

// ModelParams as a flat JSON object with unit-bearing keys:
//
//   omega_z_rad_per_us, gamma_z_per_us, gamma_plus_per_us,
//   gamma_minus_per_us, kernel ("delta" | "exp" | "rational2"),
//   kernel_b0_per_us (exp) or kernel_a0_per_us, kernel_b0_per_us2,
//   kernel_b1_per_us (rational2)

#include <json.hpp>

#include "pmme/model.hpp"

namespace pmme {

nlohmann::json params_to_json(const ModelParams& theta);

/// Throws ValidationError on missing keys or invalid values.
ModelParams params_from_json(const nlohmann::json& j);

}  // namespace pmme
