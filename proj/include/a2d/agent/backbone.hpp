// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Backbone configuration, the nine-way candidate-op catalogue, and analytic
// compute accounting (FLOPs = 2 x multiply-accumulates of every conv/dense).

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2d/common/config_error.hpp"
#include "a2d/common/json_util.hpp"
#include "a2d/env/env.hpp"

namespace a2d::agent {

using a2d::ConfigError;

enum class BackboneKind {
    mlp,             // flatten -> dense; for non-image observations
    plain,           // stem + plain conv layers
    fixed_residual,  // stem + basic residual blocks
    supernet,        // stem + cells mixing all nine candidate ops
    searched,        // stem + cells holding one chosen candidate op each
};

enum class OpKind : std::size_t {
    conv_k3 = 0,
    conv_k5,
    ir_k3_e1,
    ir_k3_e3,
    ir_k3_e5,
    ir_k5_e1,
    ir_k5_e3,
    ir_k5_e5,
    skip,
};

inline constexpr std::size_t kNumCandidateOps = 9;

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);
std::string to_string(OpKind op);
OpKind op_kind_from_string(const std::string& s);
std::size_t op_kernel(OpKind op);     // 0 for skip
std::size_t op_expansion(OpKind op);  // 0 for plain convs and skip
bool op_is_inverted_residual(OpKind op);

struct GroupConfig {
    std::size_t num_blocks = 1;  // residual blocks, plain convs or searchable cells
    std::size_t channels = 8;
    std::size_t first_stride = 1;
    bool operator==(const GroupConfig&) const = default;
};

struct StemConfig {
    std::size_t out_channels = 8;
    std::size_t kernel = 3;
    std::size_t stride = 2;
    bool operator==(const StemConfig&) const = default;
};

struct BackboneConfig {
    BackboneKind kind = BackboneKind::fixed_residual;
    std::vector<GroupConfig> groups;
    StemConfig stem;
    std::size_t feature_dim = 64;
    std::size_t header_hidden = 0;  // 0 means "same as feature_dim"
    bool batch_norm = false;
    bool global_pool = false;  // pool the final map instead of flattening it
    std::vector<OpKind> cell_ops;  // searched kind: one op per cell

    std::size_t num_cells() const;
    std::size_t hidden() const { return header_hidden == 0 ? feature_dim : header_hidden; }
    bool operator==(const BackboneConfig&) const = default;
};

/// Named size ladder: "tiny", "res-s", "res-m", "res-l"; plus "mlp",
/// "supernet" (2/2/2 cells) and "supernet-14" (5/4/5 cells).
BackboneConfig preset(const std::string& name);
std::vector<std::string> ladder_names();

/// Shape and placement of one searchable cell.
struct CellGeometry {
    std::size_t index = 0;
    std::size_t c_in = 0, c_out = 0, stride = 1;
    std::size_t h_in = 0, w_in = 0, h_out = 0, w_out = 0;
};

/// Cell placements for supernet/searched configs given the observation shape.
std::vector<CellGeometry> cell_geometry(const BackboneConfig& cfg, const env::ObsShape& obs);

/// FLOPs of a single candidate op at a cell's geometry.
double op_flops(OpKind op, const CellGeometry& cell);

/// cost[cell][op] for every candidate at every cell.
std::vector<std::array<double, kNumCandidateOps>> candidate_cost_table(const BackboneConfig& cfg,
                                                                       const env::ObsShape& obs);

struct NetworkCost {
    double flops = 0.0;  // per observation, whole actor-critic network
    std::size_t params = 0;
};

/// Validates the config against the observation shape (throws ConfigError on
/// spatial underflow or malformed groups) and returns analytic cost.
NetworkCost network_cost(const BackboneConfig& cfg, const env::EnvSpec& spec);

Json backbone_to_json(const BackboneConfig& cfg);
BackboneConfig backbone_from_json(const Json& j, Issues& issues, const std::string& where = "backbone");
Json env_spec_to_json(const env::EnvSpec& spec);
env::EnvSpec env_spec_from_json(const Json& j);

}  // namespace a2d::agent
