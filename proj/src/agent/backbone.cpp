// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/agent/backbone.hpp"

#include <algorithm>

#include "a2d/autodiff/ops.hpp"

namespace a2d::agent {

namespace {

constexpr std::array<const char*, kNumCandidateOps> kOpNames = {
    "conv_k3", "conv_k5", "ir_k3_e1", "ir_k3_e3", "ir_k3_e5", "ir_k5_e1", "ir_k5_e3", "ir_k5_e5", "skip"};

constexpr std::array<const char*, 5> kKindNames = {"mlp", "plain", "fixed_residual", "supernet", "searched"};

// Running tally of cost while walking a network description.
struct CostWalker {
    bool batch_norm = false;
    NetworkCost cost;

    void conv(std::size_t k, std::size_t c_in, std::size_t c_out, std::size_t h_out, std::size_t w_out) {
        cost.flops += 2.0 * static_cast<double>(k * k * c_in * c_out * h_out * w_out);
        cost.params += k * k * c_in * c_out + (batch_norm ? 2 * c_out : c_out);
    }
    void depthwise(std::size_t k, std::size_t c, std::size_t h_out, std::size_t w_out) {
        cost.flops += 2.0 * static_cast<double>(k * k * c * h_out * w_out);
        cost.params += k * k * c + (batch_norm ? 2 * c : c);
    }
    void dense(std::size_t in, std::size_t out) {
        cost.flops += 2.0 * static_cast<double>(in * out);
        cost.params += in * out + out;
    }
};

std::size_t strided(std::size_t in, std::size_t stride, const std::string& where) {
    if (stride > 1 && in < stride) {
        throw ConfigError(where + ": spatial underflow (size " + std::to_string(in) + " cannot take stride " +
                          std::to_string(stride) + ")");
    }
    return (in - 1) / stride + 1;  // odd kernel, padding k/2
}

void add_op_cost(CostWalker& w, OpKind op, const CellGeometry& g) {
    const std::size_t k = op_kernel(op);
    switch (op) {
        case OpKind::conv_k3:
        case OpKind::conv_k5:
            w.conv(k, g.c_in, g.c_out, g.h_out, g.w_out);
            break;
        case OpKind::skip:
            if (g.stride != 1 || g.c_in != g.c_out) w.conv(1, g.c_in, g.c_out, g.h_out, g.w_out);
            break;
        default: {
            const std::size_t e = op_expansion(op);
            const std::size_t hidden = g.c_in * e;
            if (e > 1) w.conv(1, g.c_in, hidden, g.h_in, g.w_in);
            w.depthwise(k, hidden, g.h_out, g.w_out);
            w.conv(1, hidden, g.c_out, g.h_out, g.w_out);
            break;
        }
    }
}

void validate_groups(const BackboneConfig& cfg, Issues& issues) {
    if (cfg.feature_dim == 0) issues.add("feature_dim must be positive");
    if (cfg.kind == BackboneKind::mlp) return;
    if (cfg.stem.out_channels == 0 || cfg.stem.stride == 0 || cfg.stem.kernel % 2 == 0) {
        issues.add("stem needs positive channels/stride and an odd kernel");
    }
    for (std::size_t i = 0; i < cfg.groups.size(); ++i) {
        const auto& g = cfg.groups[i];
        if (g.num_blocks == 0 || g.channels == 0 || g.first_stride == 0) {
            issues.add("group " + std::to_string(i) + " needs positive num_blocks/channels/first_stride");
        }
    }
    if (cfg.kind == BackboneKind::searched && cfg.cell_ops.size() != cfg.num_cells()) {
        issues.add("searched backbone needs one op per cell (" + std::to_string(cfg.num_cells()) + "), got " +
                   std::to_string(cfg.cell_ops.size()));
    }
}

}  // namespace

std::string to_string(BackboneKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

BackboneKind backbone_kind_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (s == kKindNames[i]) return static_cast<BackboneKind>(i);
    }
    throw ConfigError("unknown backbone kind '" + s + "'");
}

std::string to_string(OpKind op) { return kOpNames[static_cast<std::size_t>(op)]; }

OpKind op_kind_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kOpNames.size(); ++i) {
        if (s == kOpNames[i]) return static_cast<OpKind>(i);
    }
    throw ConfigError("unknown candidate op '" + s + "'");
}

std::size_t op_kernel(OpKind op) {
    switch (op) {
        case OpKind::conv_k3:
        case OpKind::ir_k3_e1:
        case OpKind::ir_k3_e3:
        case OpKind::ir_k3_e5:
            return 3;
        case OpKind::skip:
            return 0;
        default:
            return 5;
    }
}

std::size_t op_expansion(OpKind op) {
    switch (op) {
        case OpKind::ir_k3_e1:
        case OpKind::ir_k5_e1:
            return 1;
        case OpKind::ir_k3_e3:
        case OpKind::ir_k5_e3:
            return 3;
        case OpKind::ir_k3_e5:
        case OpKind::ir_k5_e5:
            return 5;
        default:
            return 0;
    }
}

bool op_is_inverted_residual(OpKind op) { return op_expansion(op) > 0; }

std::size_t BackboneConfig::num_cells() const {
    if (kind != BackboneKind::supernet && kind != BackboneKind::searched) return 0;
    std::size_t n = 0;
    for (const auto& g : groups) n += g.num_blocks;
    return n;
}

std::vector<std::string> ladder_names() { return {"tiny", "res-s", "res-m", "res-l"}; }

BackboneConfig preset(const std::string& name) {
    BackboneConfig cfg;
    auto three_groups = [](std::size_t blocks) {
        return std::vector<GroupConfig>{{blocks, 8, 1}, {blocks, 16, 2}, {blocks, 32, 2}};
    };
    if (name == "mlp") {
        cfg.kind = BackboneKind::mlp;
    } else if (name == "tiny") {
        cfg.kind = BackboneKind::plain;
        cfg.groups = {{1, 16, 2}};
    } else if (name == "res-s") {
        cfg.groups = three_groups(1);
    } else if (name == "res-m") {
        cfg.groups = three_groups(2);
    } else if (name == "res-l") {
        cfg.groups = three_groups(4);
    } else if (name == "supernet") {
        cfg.kind = BackboneKind::supernet;
        cfg.groups = three_groups(2);
    } else if (name == "supernet-14") {
        cfg.kind = BackboneKind::supernet;
        cfg.groups = {{5, 8, 1}, {4, 16, 2}, {5, 32, 2}};
    } else {
        throw ConfigError("unknown backbone preset '" + name + "'");
    }
    return cfg;
}

std::vector<CellGeometry> cell_geometry(const BackboneConfig& cfg, const env::ObsShape& obs) {
    std::vector<CellGeometry> cells;
    if (cfg.kind != BackboneKind::supernet && cfg.kind != BackboneKind::searched) return cells;
    std::size_t h = strided(obs.height, cfg.stem.stride, "stem");
    std::size_t w = strided(obs.width, cfg.stem.stride, "stem");
    std::size_t c = cfg.stem.out_channels;
    for (std::size_t gi = 0; gi < cfg.groups.size(); ++gi) {
        const auto& g = cfg.groups[gi];
        for (std::size_t b = 0; b < g.num_blocks; ++b) {
            CellGeometry geo;
            geo.index = cells.size();
            geo.c_in = c;
            geo.c_out = g.channels;
            geo.stride = b == 0 ? g.first_stride : 1;
            geo.h_in = h;
            geo.w_in = w;
            const std::string where = "cell " + std::to_string(geo.index);
            geo.h_out = strided(h, geo.stride, where);
            geo.w_out = strided(w, geo.stride, where);
            cells.push_back(geo);
            h = geo.h_out;
            w = geo.w_out;
            c = g.channels;
        }
    }
    return cells;
}

double op_flops(OpKind op, const CellGeometry& cell) {
    CostWalker w;
    add_op_cost(w, op, cell);
    return w.cost.flops;
}

std::vector<std::array<double, kNumCandidateOps>> candidate_cost_table(const BackboneConfig& cfg,
                                                                       const env::ObsShape& obs) {
    std::vector<std::array<double, kNumCandidateOps>> table;
    for (const auto& cell : cell_geometry(cfg, obs)) {
        std::array<double, kNumCandidateOps> row{};
        for (std::size_t i = 0; i < kNumCandidateOps; ++i) row[i] = op_flops(static_cast<OpKind>(i), cell);
        table.push_back(row);
    }
    return table;
}

NetworkCost network_cost(const BackboneConfig& cfg, const env::EnvSpec& spec) {
    Issues issues;
    validate_groups(cfg, issues);
    issues.throw_if_any();

    CostWalker w;
    w.batch_norm = cfg.batch_norm;
    std::size_t flat = 0;
    const auto& obs = spec.obs_shape;
    if (cfg.kind == BackboneKind::mlp) {
        flat = obs.size();
    } else {
        std::size_t h = strided(obs.height, cfg.stem.stride, "stem");
        std::size_t wd = strided(obs.width, cfg.stem.stride, "stem");
        std::size_t c = cfg.stem.out_channels;
        w.conv(cfg.stem.kernel, obs.channels, c, h, wd);
        if (cfg.kind == BackboneKind::plain || cfg.kind == BackboneKind::fixed_residual) {
            for (std::size_t gi = 0; gi < cfg.groups.size(); ++gi) {
                const auto& g = cfg.groups[gi];
                for (std::size_t b = 0; b < g.num_blocks; ++b) {
                    const std::size_t stride = b == 0 ? g.first_stride : 1;
                    const std::string where = "group " + std::to_string(gi) + " block " + std::to_string(b);
                    const std::size_t ho = strided(h, stride, where), wo = strided(wd, stride, where);
                    w.conv(3, c, g.channels, ho, wo);
                    if (cfg.kind == BackboneKind::fixed_residual) {
                        w.conv(3, g.channels, g.channels, ho, wo);
                        if (stride != 1 || c != g.channels) w.conv(1, c, g.channels, ho, wo);
                    }
                    h = ho;
                    wd = wo;
                    c = g.channels;
                }
            }
        } else {
            const auto cells = cell_geometry(cfg, obs);
            for (const auto& cell : cells) {
                if (cfg.kind == BackboneKind::supernet) {
                    for (std::size_t i = 0; i < kNumCandidateOps; ++i) add_op_cost(w, static_cast<OpKind>(i), cell);
                } else {
                    add_op_cost(w, cfg.cell_ops[cell.index], cell);
                }
                h = cell.h_out;
                wd = cell.w_out;
                c = cell.c_out;
            }
        }
        flat = cfg.global_pool ? c : c * h * wd;
    }
    w.dense(flat, cfg.feature_dim);
    const std::size_t hidden = cfg.hidden();
    w.dense(cfg.feature_dim, hidden);
    w.dense(hidden, spec.num_actions);
    w.dense(cfg.feature_dim, hidden);
    w.dense(hidden, 1);
    return w.cost;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

Json backbone_to_json(const BackboneConfig& cfg) {
    Json j;
    j["kind"] = to_string(cfg.kind);
    j["groups"] = Json::array();
    for (const auto& g : cfg.groups) {
        j["groups"].push_back({{"num_blocks", g.num_blocks}, {"channels", g.channels}, {"first_stride", g.first_stride}});
    }
    j["stem"] = {{"out_channels", cfg.stem.out_channels}, {"kernel", cfg.stem.kernel}, {"stride", cfg.stem.stride}};
    j["feature_dim"] = cfg.feature_dim;
    j["header_hidden"] = cfg.header_hidden;
    j["batch_norm"] = cfg.batch_norm;
    j["global_pool"] = cfg.global_pool;
    j["cell_ops"] = Json::array();
    for (auto op : cfg.cell_ops) j["cell_ops"].push_back(to_string(op));
    return j;
}

BackboneConfig backbone_from_json(const Json& j, Issues& issues, const std::string& where) {
    BackboneConfig cfg;
    if (j.is_string()) {
        try {
            return preset(j.get<std::string>());
        } catch (const ConfigError& e) {
            issues.add(where + ": " + e.issues().front());
            return cfg;
        }
    }
    reject_unknown_keys(j, {"preset", "kind", "groups", "stem", "feature_dim", "header_hidden", "batch_norm",
                            "global_pool", "cell_ops"},
                        where, issues);
    if (!j.is_object()) return cfg;
    if (j.contains("preset")) {
        try {
            cfg = preset(j.at("preset").get<std::string>());
        } catch (const std::exception& e) {
            issues.add(where + ".preset: " + e.what());
        }
    }
    if (j.contains("kind")) {
        try {
            cfg.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
        } catch (const std::exception& e) {
            issues.add(where + ".kind: " + e.what());
        }
    }
    if (j.contains("groups")) {
        cfg.groups.clear();
        if (!j.at("groups").is_array()) {
            issues.add(where + ".groups: expected an array");
        } else {
            for (std::size_t i = 0; i < j.at("groups").size(); ++i) {
                const auto& gj = j.at("groups")[i];
                const std::string gw = where + ".groups[" + std::to_string(i) + "]";
                reject_unknown_keys(gj, {"num_blocks", "channels", "first_stride"}, gw, issues);
                GroupConfig g;
                read_field(gj, "num_blocks", g.num_blocks, gw, issues);
                read_field(gj, "channels", g.channels, gw, issues);
                read_field(gj, "first_stride", g.first_stride, gw, issues);
                cfg.groups.push_back(g);
            }
        }
    }
    if (j.contains("stem")) {
        const auto& sj = j.at("stem");
        reject_unknown_keys(sj, {"out_channels", "kernel", "stride"}, where + ".stem", issues);
        read_field(sj, "out_channels", cfg.stem.out_channels, where + ".stem", issues);
        read_field(sj, "kernel", cfg.stem.kernel, where + ".stem", issues);
        read_field(sj, "stride", cfg.stem.stride, where + ".stem", issues);
    }
    read_field(j, "feature_dim", cfg.feature_dim, where, issues);
    read_field(j, "header_hidden", cfg.header_hidden, where, issues);
    read_field(j, "batch_norm", cfg.batch_norm, where, issues);
    read_field(j, "global_pool", cfg.global_pool, where, issues);
    if (j.contains("cell_ops")) {
        try {
            cfg.cell_ops.clear();
            for (const auto& op : j.at("cell_ops")) cfg.cell_ops.push_back(op_kind_from_string(op.get<std::string>()));
        } catch (const std::exception& e) {
            issues.add(where + ".cell_ops: " + e.what());
        }
    }
    validate_groups(cfg, issues);
    return cfg;
}

Json env_spec_to_json(const env::EnvSpec& spec) {
    return {{"name", spec.name},
            {"obs_shape", {spec.obs_shape.channels, spec.obs_shape.height, spec.obs_shape.width}},
            {"num_actions", spec.num_actions},
            {"max_episode_steps", spec.max_episode_steps},
            {"discount", spec.discount}};
}

env::EnvSpec env_spec_from_json(const Json& j) {
    env::EnvSpec spec;
    spec.name = j.at("name").get<std::string>();
    const auto& shape = j.at("obs_shape");
    spec.obs_shape = {shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>(), shape.at(2).get<std::size_t>()};
    spec.num_actions = j.at("num_actions").get<std::size_t>();
    spec.max_episode_steps = j.at("max_episode_steps").get<std::size_t>();
    spec.discount = j.at("discount").get<double>();
    return spec;
}

}  // namespace a2d::agent
