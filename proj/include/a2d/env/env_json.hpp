// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "a2d/common/json_util.hpp"
#include "a2d/env/env.hpp"

namespace a2d::env {

/// {"name": "chain" | "bandit" | "grid_pixels", ...parameters}
Json env_config_to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const Json& j, Issues& issues, const std::string& where = "env");

}  // namespace a2d::env
