// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/env/env_json.hpp"

namespace a2d::env {

Json env_config_to_json(const EnvConfig& cfg) {
    return std::visit(
        [](const auto& c) -> Json {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, ChainConfig>) {
                return {{"name", "chain"},
                        {"num_states", c.num_states},
                        {"start_state", c.start_state},
                        {"max_episode_steps", c.max_episode_steps},
                        {"discount", c.discount}};
            } else if constexpr (std::is_same_v<T, BanditConfig>) {
                return {{"name", "bandit"}, {"arm_probs", c.arm_probs}, {"discount", c.discount}};
            } else {
                return {{"name", "grid_pixels"},         {"size", c.size},
                        {"cell_px", c.cell_px},           {"wall_density", c.wall_density},
                        {"layout_seed", c.layout_seed},   {"random_start", c.random_start},
                        {"step_penalty", c.step_penalty}, {"max_episode_steps", c.max_episode_steps},
                        {"discount", c.discount}};
            }
        },
        cfg);
}

EnvConfig env_config_from_json(const Json& j, Issues& issues, const std::string& where) {
    if (!j.is_object() || !j.contains("name") || !j.at("name").is_string()) {
        issues.add(where + ": expected an object with a string 'name'");
        return GridConfig{};
    }
    const std::string name = j.at("name").get<std::string>();
    if (name == "chain") {
        ChainConfig c;
        reject_unknown_keys(j, {"name", "num_states", "start_state", "max_episode_steps", "discount"}, where, issues);
        read_field(j, "num_states", c.num_states, where, issues);
        read_field(j, "start_state", c.start_state, where, issues);
        read_field(j, "max_episode_steps", c.max_episode_steps, where, issues);
        read_field(j, "discount", c.discount, where, issues);
        if (c.num_states < 2) issues.add(where + ".num_states: must be >= 2");
        if (c.start_state >= c.num_states) issues.add(where + ".start_state: out of range");
        if (!(c.discount > 0.0 && c.discount < 1.0)) issues.add(where + ".discount: must lie in (0,1)");
        if (c.max_episode_steps == 0) issues.add(where + ".max_episode_steps: must be positive");
        return c;
    }
    if (name == "bandit") {
        BanditConfig c;
        reject_unknown_keys(j, {"name", "arm_probs", "discount"}, where, issues);
        read_field(j, "arm_probs", c.arm_probs, where, issues);
        read_field(j, "discount", c.discount, where, issues);
        if (c.arm_probs.size() < 2) issues.add(where + ".arm_probs: at least 2 arms required");
        for (double p : c.arm_probs) {
            if (!(p >= 0.0 && p <= 1.0)) issues.add(where + ".arm_probs: probabilities must lie in [0,1]");
        }
        if (!(c.discount > 0.0 && c.discount < 1.0)) issues.add(where + ".discount: must lie in (0,1)");
        return c;
    }
    if (name == "grid_pixels") {
        GridConfig c;
        reject_unknown_keys(j, {"name", "size", "cell_px", "wall_density", "layout_seed", "random_start",
                                "step_penalty", "max_episode_steps", "discount"},
                            where, issues);
        read_field(j, "size", c.size, where, issues);
        read_field(j, "cell_px", c.cell_px, where, issues);
        read_field(j, "wall_density", c.wall_density, where, issues);
        read_field(j, "layout_seed", c.layout_seed, where, issues);
        read_field(j, "random_start", c.random_start, where, issues);
        read_field(j, "step_penalty", c.step_penalty, where, issues);
        read_field(j, "max_episode_steps", c.max_episode_steps, where, issues);
        read_field(j, "discount", c.discount, where, issues);
        if (c.size < 2) issues.add(where + ".size: must be >= 2");
        if (c.cell_px == 0) issues.add(where + ".cell_px: must be positive");
        if (!(c.wall_density >= 0.0 && c.wall_density < 1.0)) issues.add(where + ".wall_density: must lie in [0,1)");
        if (!(c.discount > 0.0 && c.discount < 1.0)) issues.add(where + ".discount: must lie in (0,1)");
        if (c.max_episode_steps == 0) issues.add(where + ".max_episode_steps: must be positive");
        return c;
    }
    issues.add(where + ".name: unknown environment '" + name + "'");
    return GridConfig{};
}

}  // namespace a2d::env
