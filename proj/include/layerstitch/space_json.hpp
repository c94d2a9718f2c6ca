#pragma once

#include <nlohmann/json.hpp>

#include "layerstitch/space.hpp"

namespace layerstitch {

nlohmann::json to_json(const SpaceSpec& spec);
// Missing grids fall back to the defaults; remove_count, when present, must
// equal ceil(l * sparsity). Throws ParseError naming the bad field.
SpaceSpec space_spec_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const Config& config);
Config config_from_json(const nlohmann::json& doc);

}  // namespace layerstitch
