// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Actor-critic network: feature extractor + two-layer actor header (logits)
// + two-layer critic header (scalar value).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "a2d/agent/backbone.hpp"
#include "a2d/autodiff/checkpoint.hpp"
#include "a2d/autodiff/tensor.hpp"
#include "a2d/common/rng.hpp"
#include "a2d/env/env.hpp"

namespace a2d::agent {

enum class ParamGroup { backbone, actor, critic };

struct Parameter {
    std::string path;
    ad::Tensor tensor;
    ParamGroup group;
};

struct ForwardContext {
    // Supernet only: returns the [9] mixture weights for a cell.
    std::function<ad::Tensor(std::size_t cell)> cell_weights;
    // Batch-norm uses batch statistics (and updates running stats) when true.
    bool training = false;
};

struct PolicyValue {
    ad::Tensor log_probs;  // [B, num_actions], rows log-normalized
    ad::Tensor values;     // [B]
};

class AgentNet {
public:
    AgentNet(BackboneConfig config, env::EnvSpec spec, std::uint64_t init_seed);
    ~AgentNet();
    AgentNet(AgentNet&&) noexcept;
    AgentNet& operator=(AgentNet&&) noexcept;
    AgentNet(const AgentNet&) = delete;
    AgentNet& operator=(const AgentNet&) = delete;

    const BackboneConfig& config() const;
    const env::EnvSpec& env_spec() const;
    std::uint64_t init_seed() const;

    ad::Tensor features(const ad::Tensor& obs, const ForwardContext& ctx = {}) const;
    PolicyValue forward(const ad::Tensor& obs, const ForwardContext& ctx = {}) const;
    ad::Tensor actor_logits(const ad::Tensor& features) const;
    ad::Tensor critic_values(const ad::Tensor& features) const;

    std::vector<Parameter>& parameters();
    const std::vector<Parameter>& parameters() const;
    const Parameter* find(const std::string& path) const;
    std::size_t num_params() const;
    void zero_grad();
    void clear_grads();

    /// Parameters and batch-norm buffers; metadata carries the configs.
    ad::Checkpoint to_checkpoint() const;
    /// Copies every entry whose path exists here (shapes must agree). With
    /// `strict`, every local parameter must be present in the checkpoint.
    void load(const ad::Checkpoint& ckpt, bool strict = true);
    AgentNet clone() const;

    std::size_t num_cells() const;
    /// One cell applied to its input map: the weighted mixture for a
    /// supernet, the chosen op for a searched network.
    ad::Tensor cell_forward(std::size_t cell, const ad::Tensor& x, const ForwardContext& ctx = {}) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Builds an agent for the environment; throws ConfigError when the backbone
/// does not fit the observation shape.
AgentNet build_agent(const BackboneConfig& config, const env::EnvSpec& spec, std::uint64_t init_seed);

/// Batches observations into [B, C, H, W].
ad::Tensor make_obs_batch(const std::vector<std::vector<double>>& observations, const env::ObsShape& shape);

PolicyValue policy_and_value(const AgentNet& net, const ad::Tensor& obs_batch, const ForwardContext& ctx = {});

/// Draws an action from one row of log-probabilities.
std::size_t sample_action(std::span<const double> log_probs, Rng& rng);

/// Checkpoint with self-describing metadata (backbone + env spec).
void save_agent(const AgentNet& net, const std::filesystem::path& file);
AgentNet load_agent(const std::filesystem::path& file);

}  // namespace a2d::agent
