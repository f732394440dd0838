// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/agent/agent.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "a2d/autodiff/ops.hpp"

namespace a2d::agent {

using ad::Tensor;

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

std::uint64_t path_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ParamGroup group_of(const std::string& path) {
    if (path.rfind("actor.", 0) == 0) return ParamGroup::actor;
    if (path.rfind("critic.", 0) == 0) return ParamGroup::critic;
    return ParamGroup::backbone;
}

struct Buffer {
    std::string path;
    ad::Shape shape;
    std::shared_ptr<std::vector<double>> data;
};

// Owns parameter/buffer registration and seeded initialization.
struct Registry {
    std::uint64_t seed = 0;
    std::vector<Parameter> params;
    std::vector<Buffer> buffers;

    Rng rng_for(const std::string& path) const { return Rng(derive_seed(seed, {path_hash(path)})); }

    Tensor add(const std::string& path, ad::Shape shape, std::vector<double> data) {
        Tensor t = Tensor::from(std::move(shape), std::move(data), true);
        params.push_back({path, t, group_of(path)});
        return t;
    }

    Tensor uniform(const std::string& path, ad::Shape shape, double bound) {
        Rng rng = rng_for(path);
        std::vector<double> d(ad::numel_of(shape));
        for (auto& v : d) v = rng.uniform(-bound, bound);
        return add(path, std::move(shape), std::move(d));
    }

    Tensor constant(const std::string& path, ad::Shape shape, double value) {
        std::vector<double> d(ad::numel_of(shape), value);
        return add(path, std::move(shape), std::move(d));
    }

    // Dense weight [in, out] with orthonormal rows or columns scaled by gain.
    Tensor orthogonal(const std::string& path, std::size_t in, std::size_t out, double gain) {
        Rng rng = rng_for(path);
        const std::size_t rows = std::max(in, out), cols = std::min(in, out);
        std::vector<double> q(rows * cols);
        for (auto& v : q) v = rng.normal();
        // modified Gram-Schmidt on the columns of a rows x cols matrix
        for (std::size_t j = 0; j < cols; ++j) {
            for (std::size_t p = 0; p < j; ++p) {
                double dot = 0.0;
                for (std::size_t i = 0; i < rows; ++i) dot += q[i * cols + j] * q[i * cols + p];
                for (std::size_t i = 0; i < rows; ++i) q[i * cols + j] -= dot * q[i * cols + p];
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < rows; ++i) norm += q[i * cols + j] * q[i * cols + j];
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < rows; ++i) q[i * cols + j] /= norm;
        }
        std::vector<double> w(in * out);
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t o = 0; o < out; ++o)
                w[i * out + o] = gain * (in >= out ? q[i * cols + o] : q[o * cols + i]);
        return add(path, {in, out}, std::move(w));
    }

    std::shared_ptr<std::vector<double>> buffer(const std::string& path, std::size_t n, double value) {
        auto data = std::make_shared<std::vector<double>>(n, value);
        buffers.push_back({path, {n}, data});
        return data;
    }
};

// Fan-in uniform bounds: gain sqrt(2) ahead of a relu, 1 for linear outputs.
constexpr double kReluGain = 1.4142135623730951;
constexpr double kLinearGain = 1.0;

// Convolution (plain or depthwise) with an optional batch-norm.
struct ConvUnit {
    Tensor w, b, gamma, beta;
    std::shared_ptr<std::vector<double>> run_mean, run_var;
    std::size_t stride = 1, pad = 0;
    bool depthwise = false;

    static ConvUnit make(Registry& reg, const std::string& path, std::size_t c_in, std::size_t c_out,
                         std::size_t k, std::size_t stride, bool depthwise, bool bn, double gain = kReluGain) {
        ConvUnit u;
        u.stride = stride;
        u.pad = k / 2;
        u.depthwise = depthwise;
        const std::size_t fan_in = (depthwise ? 1 : c_in) * k * k;
        const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
        if (depthwise) {
            u.w = reg.uniform(path + ".w", {c_out, 1, k, k}, bound);
        } else {
            u.w = reg.uniform(path + ".w", {c_out, c_in, k, k}, bound);
        }
        if (bn) {
            u.gamma = reg.constant(path + ".bn.gamma", {c_out}, 1.0);
            u.beta = reg.constant(path + ".bn.beta", {c_out}, 0.0);
            u.run_mean = reg.buffer(path + ".bn.running_mean", c_out, 0.0);
            u.run_var = reg.buffer(path + ".bn.running_var", c_out, 1.0);
        } else {
            u.b = reg.constant(path + ".b", {c_out}, 0.0);
        }
        return u;
    }

    Tensor forward(const Tensor& x, const ForwardContext& ctx) const {
        Tensor y = depthwise ? ad::depthwise_conv2d(x, w, b, stride, pad) : ad::conv2d(x, w, b, stride, pad);
        if (!gamma.defined()) return y;
        if (ctx.training) {
            update_running_stats(y);
            return ad::batch_norm2d(y, gamma, beta, kBnEps);
        }
        const std::size_t c = gamma.numel();
        std::vector<double> inv(c), mu(c);
        for (std::size_t i = 0; i < c; ++i) {
            inv[i] = 1.0 / std::sqrt((*run_var)[i] + kBnEps);
            mu[i] = (*run_mean)[i];
        }
        Tensor s = ad::mul(gamma, Tensor::from({c}, std::move(inv)));
        Tensor shift = ad::sub(beta, ad::mul(s, Tensor::from({c}, std::move(mu))));
        return ad::add_bias(ad::scale_channels(y, s), shift);
    }

    void update_running_stats(const Tensor& y) const {
        const std::size_t n = y.dim(0), c = y.dim(1), hw = y.dim(2) * y.dim(3);
        const double count = static_cast<double>(n * hw);
        const auto d = y.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            double m = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t k = 0; k < hw; ++k) m += d[(b * c + ch) * hw + k];
            m /= count;
            double v = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t k = 0; k < hw; ++k) {
                    const double e = d[(b * c + ch) * hw + k] - m;
                    v += e * e;
                }
            v = count > 1 ? v / (count - 1) : 0.0;
            (*run_mean)[ch] = (1 - kBnMomentum) * (*run_mean)[ch] + kBnMomentum * m;
            (*run_var)[ch] = (1 - kBnMomentum) * (*run_var)[ch] + kBnMomentum * v;
        }
    }
};

struct DenseUnit {
    Tensor w, b;
    Tensor forward(const Tensor& x) const { return ad::dense(x, w, b); }
};

DenseUnit fan_in_dense(Registry& reg, const std::string& path, std::size_t in, std::size_t out) {
    return {reg.uniform(path + ".w", {in, out}, kReluGain * std::sqrt(3.0 / static_cast<double>(in))),
            reg.constant(path + ".b", {out}, 0.0)};
}

DenseUnit ortho_dense(Registry& reg, const std::string& path, std::size_t in, std::size_t out, double gain) {
    return {reg.orthogonal(path + ".w", in, out, gain), reg.constant(path + ".b", {out}, 0.0)};
}

// One block of the fixed backbones, or one candidate op of a cell.
struct Block {
    enum class Type { plain, residual, conv_op, inverted_residual, skip };
    Type type = Type::plain;
    std::vector<ConvUnit> convs;  // layout depends on type
    std::optional<ConvUnit> shortcut;
    bool has_expand = false;
    bool residual_add = false;

    Tensor forward(const Tensor& x, const ForwardContext& ctx) const {
        switch (type) {
            case Type::plain:
            case Type::conv_op:
                return ad::relu(convs[0].forward(x, ctx));
            case Type::residual: {
                Tensor h = ad::relu(convs[0].forward(x, ctx));
                h = convs[1].forward(h, ctx);
                Tensor s = shortcut ? shortcut->forward(x, ctx) : x;
                return ad::relu(ad::add(h, s));
            }
            case Type::inverted_residual: {
                std::size_t i = 0;
                Tensor h = x;
                if (has_expand) h = ad::relu(convs[i++].forward(h, ctx));
                h = ad::relu(convs[i++].forward(h, ctx));
                h = convs[i].forward(h, ctx);
                return residual_add ? ad::add(h, x) : h;
            }
            case Type::skip:
                return shortcut ? shortcut->forward(x, ctx) : x;
        }
        return x;
    }
};

Block make_op(Registry& reg, const std::string& path, OpKind op, const CellGeometry& g, bool bn) {
    Block blk;
    const std::size_t k = op_kernel(op);
    if (op == OpKind::conv_k3 || op == OpKind::conv_k5) {
        blk.type = Block::Type::conv_op;
        blk.convs.push_back(ConvUnit::make(reg, path + ".conv", g.c_in, g.c_out, k, g.stride, false, bn));
    } else if (op == OpKind::skip) {
        blk.type = Block::Type::skip;
        if (g.stride != 1 || g.c_in != g.c_out) {
            blk.shortcut = ConvUnit::make(reg, path + ".proj", g.c_in, g.c_out, 1, g.stride, false, bn, kLinearGain);
        }
    } else {
        blk.type = Block::Type::inverted_residual;
        const std::size_t e = op_expansion(op);
        const std::size_t hidden = g.c_in * e;
        blk.has_expand = e > 1;
        if (blk.has_expand) blk.convs.push_back(ConvUnit::make(reg, path + ".expand", g.c_in, hidden, 1, 1, false, bn));
        blk.convs.push_back(ConvUnit::make(reg, path + ".dw", hidden, hidden, k, g.stride, true, bn));
        blk.convs.push_back(ConvUnit::make(reg, path + ".project", hidden, g.c_out, 1, 1, false, bn, kLinearGain));
        blk.residual_add = g.stride == 1 && g.c_in == g.c_out;
    }
    return blk;
}

struct Cell {
    std::vector<std::size_t> op_indices;  // candidate index of each entry in ops
    std::vector<Block> ops;
};

}  // namespace

struct AgentNet::Impl {
    BackboneConfig config;
    env::EnvSpec spec;
    std::uint64_t seed = 0;
    Registry reg;
    std::unordered_map<std::string, std::size_t> index;

    std::optional<ConvUnit> stem;
    std::vector<Block> blocks;
    std::vector<Cell> cells;
    DenseUnit fc, actor1, actor2, critic1, critic2;

    void build() {
        network_cost(config, spec);  // validates; throws ConfigError
        reg.seed = seed;
        const auto& obs = spec.obs_shape;
        std::size_t flat = obs.size();
        if (config.kind != BackboneKind::mlp) {
            stem = ConvUnit::make(reg, "backbone.stem", obs.channels, config.stem.out_channels, config.stem.kernel,
                                  config.stem.stride, false, config.batch_norm);
            std::size_t c = config.stem.out_channels;
            std::size_t h = (obs.height - 1) / config.stem.stride + 1;
            std::size_t w = (obs.width - 1) / config.stem.stride + 1;
            if (config.kind == BackboneKind::plain || config.kind == BackboneKind::fixed_residual) {
                for (std::size_t gi = 0; gi < config.groups.size(); ++gi) {
                    const auto& g = config.groups[gi];
                    for (std::size_t bi = 0; bi < g.num_blocks; ++bi) {
                        const std::size_t stride = bi == 0 ? g.first_stride : 1;
                        const std::string p = "backbone.g" + std::to_string(gi) + ".b" + std::to_string(bi);
                        Block blk;
                        if (config.kind == BackboneKind::plain) {
                            blk.type = Block::Type::plain;
                            blk.convs.push_back(
                                ConvUnit::make(reg, p + ".conv", c, g.channels, 3, stride, false, config.batch_norm));
                        } else {
                            blk.type = Block::Type::residual;
                            blk.convs.push_back(
                                ConvUnit::make(reg, p + ".conv1", c, g.channels, 3, stride, false, config.batch_norm));
                            blk.convs.push_back(ConvUnit::make(reg, p + ".conv2", g.channels, g.channels, 3, 1, false,
                                                               config.batch_norm, kLinearGain));
                            if (stride != 1 || c != g.channels) {
                                blk.shortcut = ConvUnit::make(reg, p + ".shortcut", c, g.channels, 1, stride, false,
                                                              config.batch_norm, kLinearGain);
                            }
                        }
                        blocks.push_back(std::move(blk));
                        h = (h - 1) / stride + 1;
                        w = (w - 1) / stride + 1;
                        c = g.channels;
                    }
                }
            } else {
                for (const auto& geo : cell_geometry(config, obs)) {
                    Cell cell;
                    const std::string p = "backbone.cell" + std::to_string(geo.index);
                    auto add_op = [&](std::size_t i) {
                        cell.op_indices.push_back(i);
                        cell.ops.push_back(make_op(reg, p + ".op" + std::to_string(i), static_cast<OpKind>(i), geo,
                                                   config.batch_norm));
                    };
                    if (config.kind == BackboneKind::supernet) {
                        for (std::size_t i = 0; i < kNumCandidateOps; ++i) add_op(i);
                    } else {
                        add_op(static_cast<std::size_t>(config.cell_ops[geo.index]));
                    }
                    cells.push_back(std::move(cell));
                    h = geo.h_out;
                    w = geo.w_out;
                    c = geo.c_out;
                }
            }
            flat = config.global_pool ? c : c * h * w;
        }
        fc = fan_in_dense(reg, "backbone.fc", flat, config.feature_dim);
        const std::size_t hidden = config.hidden();
        const double root2 = std::sqrt(2.0);
        actor1 = ortho_dense(reg, "actor.fc1", config.feature_dim, hidden, root2);
        actor2 = ortho_dense(reg, "actor.fc2", hidden, spec.num_actions, 0.01);
        critic1 = ortho_dense(reg, "critic.fc1", config.feature_dim, hidden, root2);
        critic2 = ortho_dense(reg, "critic.fc2", hidden, 1, 1.0);
        for (std::size_t i = 0; i < reg.params.size(); ++i) index[reg.params[i].path] = i;
    }

    Tensor cell_forward(std::size_t ci, const Tensor& x, const ForwardContext& ctx) const {
        const Cell& cell = cells.at(ci);
        if (cell.ops.size() == 1) return cell.ops[0].forward(x, ctx);
        if (!ctx.cell_weights) {
            throw std::invalid_argument("supernet forward needs ForwardContext::cell_weights");
        }
        const Tensor weights = ctx.cell_weights(ci);
        if (weights.numel() != kNumCandidateOps) {
            throw ad::ShapeError("supernet cell weights", weights.shape(), ad::Shape{kNumCandidateOps});
        }
        Tensor mixed;
        for (std::size_t i = 0; i < cell.ops.size(); ++i) {
            Tensor wi = ad::index_select(weights, 0, {cell.op_indices[i]});
            Tensor yi = ad::mul(cell.ops[i].forward(x, ctx), wi);
            mixed = mixed.defined() ? ad::add(mixed, yi) : yi;
        }
        return mixed;
    }

    Tensor features(const Tensor& obs, const ForwardContext& ctx) const {
        const auto& os = spec.obs_shape;
        if (obs.rank() != 4 || obs.dim(1) != os.channels || obs.dim(2) != os.height || obs.dim(3) != os.width) {
            throw ad::ShapeError("AgentNet::features", obs.shape(), ad::Shape{0, os.channels, os.height, os.width});
        }
        const std::size_t batch = obs.dim(0);
        if (config.kind == BackboneKind::mlp) {
            return ad::relu(fc.forward(ad::reshape(obs, {batch, os.size()})));
        }
        Tensor x = ad::relu(stem->forward(obs, ctx));
        for (const auto& blk : blocks) x = blk.forward(x, ctx);
        for (std::size_t ci = 0; ci < cells.size(); ++ci) x = cell_forward(ci, x, ctx);
        Tensor flat = config.global_pool ? ad::global_avg_pool(x) : ad::reshape(x, {batch, x.numel() / batch});
        return ad::relu(fc.forward(flat));
    }
};

AgentNet::AgentNet(BackboneConfig config, env::EnvSpec spec, std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>()) {
    impl_->config = std::move(config);
    impl_->spec = std::move(spec);
    impl_->seed = init_seed;
    impl_->build();
}

AgentNet::~AgentNet() = default;
AgentNet::AgentNet(AgentNet&&) noexcept = default;
AgentNet& AgentNet::operator=(AgentNet&&) noexcept = default;

const BackboneConfig& AgentNet::config() const { return impl_->config; }
const env::EnvSpec& AgentNet::env_spec() const { return impl_->spec; }
std::uint64_t AgentNet::init_seed() const { return impl_->seed; }

Tensor AgentNet::features(const Tensor& obs, const ForwardContext& ctx) const { return impl_->features(obs, ctx); }

Tensor AgentNet::actor_logits(const Tensor& features) const {
    return impl_->actor2.forward(ad::relu(impl_->actor1.forward(features)));
}

Tensor AgentNet::critic_values(const Tensor& features) const {
    Tensor v = impl_->critic2.forward(ad::relu(impl_->critic1.forward(features)));
    return ad::reshape(v, {features.dim(0)});
}

PolicyValue AgentNet::forward(const Tensor& obs, const ForwardContext& ctx) const {
    const Tensor f = features(obs, ctx);
    return {ad::log_softmax(actor_logits(f), 1), critic_values(f)};
}

std::vector<Parameter>& AgentNet::parameters() { return impl_->reg.params; }
const std::vector<Parameter>& AgentNet::parameters() const { return impl_->reg.params; }

const Parameter* AgentNet::find(const std::string& path) const {
    auto it = impl_->index.find(path);
    return it == impl_->index.end() ? nullptr : &impl_->reg.params[it->second];
}

std::size_t AgentNet::num_params() const {
    std::size_t n = 0;
    for (const auto& p : impl_->reg.params) n += p.tensor.numel();
    return n;
}

void AgentNet::zero_grad() {
    for (auto& p : impl_->reg.params) p.tensor.zero_grad();
}

void AgentNet::clear_grads() {
    for (auto& p : impl_->reg.params) p.tensor.clear_grad();
}

std::size_t AgentNet::num_cells() const { return impl_->cells.size(); }

Tensor AgentNet::cell_forward(std::size_t cell, const Tensor& x, const ForwardContext& ctx) const {
    return impl_->cell_forward(cell, x, ctx);
}

ad::Checkpoint AgentNet::to_checkpoint() const {
    ad::Checkpoint ck;
    Json meta;
    meta["format"] = "a2d-agent";
    meta["backbone"] = backbone_to_json(impl_->config);
    meta["env_spec"] = env_spec_to_json(impl_->spec);
    meta["init_seed"] = impl_->seed;
    ck.metadata = meta.dump();
    for (const auto& p : impl_->reg.params) {
        ck.entries.push_back({p.path, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
    }
    for (const auto& b : impl_->reg.buffers) ck.entries.push_back({b.path, b.shape, *b.data});
    return ck;
}

void AgentNet::load(const ad::Checkpoint& ckpt, bool strict) {
    std::vector<std::string> problems;
    auto copy = [&](const std::string& path, const ad::Shape& shape, std::span<double> dst) {
        const ad::NamedArray* e = ckpt.find(path);
        if (!e) {
            if (strict) problems.push_back("missing entry '" + path + "'");
            return;
        }
        if (e->shape != shape) {
            problems.push_back("shape mismatch for '" + path + "': " + ad::shape_str(e->shape) + " vs " +
                               ad::shape_str(shape));
            return;
        }
        std::copy(e->data.begin(), e->data.end(), dst.begin());
    };
    for (auto& p : impl_->reg.params) copy(p.path, p.tensor.shape(), p.tensor.mutable_data());
    for (auto& b : impl_->reg.buffers) copy(b.path, b.shape, *b.data);
    if (!problems.empty()) {
        std::string msg = "checkpoint does not match network:";
        for (const auto& s : problems) msg += "\n  " + s;
        throw ad::CheckpointError(msg);
    }
}

AgentNet AgentNet::clone() const {
    AgentNet copy(impl_->config, impl_->spec, impl_->seed);
    copy.load(to_checkpoint(), true);
    return copy;
}

AgentNet build_agent(const BackboneConfig& config, const env::EnvSpec& spec, std::uint64_t init_seed) {
    return AgentNet(config, spec, init_seed);
}

Tensor make_obs_batch(const std::vector<std::vector<double>>& observations, const env::ObsShape& shape) {
    std::vector<double> data;
    data.reserve(observations.size() * shape.size());
    for (const auto& o : observations) {
        if (o.size() != shape.size()) {
            throw ad::ShapeError("make_obs_batch", ad::Shape{o.size()}, ad::Shape{shape.size()});
        }
        data.insert(data.end(), o.begin(), o.end());
    }
    return Tensor::from({observations.size(), shape.channels, shape.height, shape.width}, std::move(data));
}

PolicyValue policy_and_value(const AgentNet& net, const Tensor& obs_batch, const ForwardContext& ctx) {
    return net.forward(obs_batch, ctx);
}

std::size_t sample_action(std::span<const double> log_probs, Rng& rng) {
    const double top = *std::max_element(log_probs.begin(), log_probs.end());
    std::vector<double> w(log_probs.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_probs[i] - top);
    return rng.categorical(w);
}

void save_agent(const AgentNet& net, const std::filesystem::path& file) {
    ad::save_checkpoint(file, net.to_checkpoint());
}

AgentNet load_agent(const std::filesystem::path& file) {
    const ad::Checkpoint ck = ad::load_checkpoint(file);
    Json meta;
    try {
        meta = Json::parse(ck.metadata);
    } catch (const Json::exception& e) {
        throw ad::CheckpointError(file.string() + ": unreadable metadata: " + e.what());
    }
    if (meta.value("format", "") != "a2d-agent") throw ad::CheckpointError(file.string() + ": not an agent checkpoint");
    Issues issues;
    BackboneConfig cfg = backbone_from_json(meta.at("backbone"), issues);
    issues.throw_if_any();
    AgentNet net(cfg, env_spec_from_json(meta.at("env_spec")), meta.at("init_seed").get<std::uint64_t>());
    net.load(ck, true);
    return net;
}

}  // namespace a2d::agent
