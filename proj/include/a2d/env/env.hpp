// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seedable toy environments: a chain MDP, a multi-armed bandit and a pixel
// gridworld. All three expose an enumerable tabular model so value oracles can
// be computed exactly.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "a2d/common/rng.hpp"

namespace a2d::env {

class EnvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ObsShape {
    std::size_t channels = 1, height = 1, width = 1;
    std::size_t size() const { return channels * height * width; }
    bool operator==(const ObsShape&) const = default;
};

struct EnvSpec {
    std::string name;
    ObsShape obs_shape;
    std::size_t num_actions = 2;
    std::size_t max_episode_steps = 100;
    double discount = 0.99;
};

struct Transition {
    std::vector<double> state;
    std::size_t action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;       // terminal state reached
    bool truncated = false;  // time limit hit without reaching a terminal state

    bool episode_over() const { return done || truncated; }
};

struct Outcome {
    double prob;
    std::size_t next_state;
    double reward;
    bool terminal;
};

// outcomes[s][a] lists the successor distribution of action a in state s.
struct TabularModel {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::vector<std::vector<std::vector<Outcome>>> outcomes;
};

// policy[s][a] = probability of action a in state s
using TabularPolicy = std::vector<std::vector<double>>;

class Environment {
public:
    virtual ~Environment() = default;

    virtual const EnvSpec& spec() const = 0;
    virtual std::unique_ptr<Environment> clone() const = 0;

    /// Starts an episode. A uniformly drawn number of no-op steps in
    /// [0, null_op_max] is applied before the first observation.
    std::vector<double> reset(std::uint64_t seed, std::size_t null_op_max = 0);
    Transition step(std::size_t action);

    bool episode_over() const { return over_; }
    std::size_t steps() const { return steps_; }
    std::vector<double> observation() const { return observe(); }

    virtual TabularModel tabular_model() const = 0;
    virtual std::size_t state_index() const = 0;
    virtual std::vector<double> observation_of(std::size_t state) const = 0;

protected:
    virtual void reset_state(Rng& rng) = 0;
    // Effect of one no-op step; returns false when no further no-ops apply.
    virtual bool apply_noop(Rng& rng) = 0;
    // Applies an action; returns (reward, terminal).
    virtual std::pair<double, bool> apply(std::size_t action, Rng& rng) = 0;
    virtual std::vector<double> observe() const = 0;

private:
    Rng rng_{0};
    std::size_t steps_ = 0;
    bool over_ = true;
};

// --- concrete environments -------------------------------------------------

struct ChainConfig {
    std::size_t num_states = 10;
    std::size_t start_state = 0;
    std::size_t max_episode_steps = 200;
    double discount = 0.99;
};

// States 0..n-1, actions {0: left, 1: right}. Any action taken in the far
// end state n-1 pays reward 1 and terminates. The no-op is a left move.
class ChainMDP final : public Environment {
public:
    explicit ChainMDP(ChainConfig cfg);
    const EnvSpec& spec() const override { return spec_; }
    std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainMDP>(*this); }
    TabularModel tabular_model() const override;
    std::size_t state_index() const override { return pos_; }
    std::vector<double> observation_of(std::size_t state) const override;
    const ChainConfig& config() const { return cfg_; }

protected:
    void reset_state(Rng& rng) override;
    bool apply_noop(Rng& rng) override;
    std::pair<double, bool> apply(std::size_t action, Rng& rng) override;
    std::vector<double> observe() const override { return observation_of(pos_); }

private:
    ChainConfig cfg_;
    EnvSpec spec_;
    std::size_t pos_ = 0;
};

struct BanditConfig {
    std::vector<double> arm_probs{0.2, 0.8};
    double discount = 0.99;
};

// One-step episodes; arm a pays Bernoulli(arm_probs[a]). No-ops have no effect.
class Bandit final : public Environment {
public:
    explicit Bandit(BanditConfig cfg);
    const EnvSpec& spec() const override { return spec_; }
    std::unique_ptr<Environment> clone() const override { return std::make_unique<Bandit>(*this); }
    TabularModel tabular_model() const override;
    std::size_t state_index() const override { return 0; }
    std::vector<double> observation_of(std::size_t state) const override;
    const BanditConfig& config() const { return cfg_; }

protected:
    void reset_state(Rng&) override {}
    bool apply_noop(Rng&) override { return false; }
    std::pair<double, bool> apply(std::size_t action, Rng& rng) override;
    std::vector<double> observe() const override { return observation_of(0); }

private:
    BanditConfig cfg_;
    EnvSpec spec_;
};

struct GridConfig {
    std::size_t size = 6;       // cells per side
    std::size_t cell_px = 2;    // rendered pixels per cell
    double wall_density = 0.0;  // fraction of interior cells turned into walls
    std::uint64_t layout_seed = 0;
    bool random_start = true;
    double step_penalty = 0.0;
    std::size_t max_episode_steps = 30;
    double discount = 0.99;
};

// N x N gridworld rendered as a 3-channel image (agent, goal, wall). The goal
// sits in the bottom-right corner; the fixed start is the top-left corner.
// Actions {0: up, 1: down, 2: left, 3: right}; blocked moves leave the agent
// in place. Entering the goal pays +1 and terminates. No-ops have no effect.
class GridPixels final : public Environment {
public:
    explicit GridPixels(GridConfig cfg);
    const EnvSpec& spec() const override { return spec_; }
    std::unique_ptr<Environment> clone() const override { return std::make_unique<GridPixels>(*this); }
    TabularModel tabular_model() const override;
    std::size_t state_index() const override { return agent_; }
    std::vector<double> observation_of(std::size_t state) const override;

    const GridConfig& config() const { return cfg_; }
    bool is_wall(std::size_t cell) const { return walls_[cell]; }
    std::size_t goal_cell() const { return goal_; }
    std::size_t start_cell() const { return 0; }
    // Cell reached from `cell` by `action` (walls/borders block).
    std::size_t move(std::size_t cell, std::size_t action) const;
    // Free non-goal cells an episode may start in.
    std::vector<std::size_t> start_cells() const;

protected:
    void reset_state(Rng& rng) override;
    bool apply_noop(Rng&) override { return false; }
    std::pair<double, bool> apply(std::size_t action, Rng& rng) override;
    std::vector<double> observe() const override { return observation_of(agent_); }

private:
    GridConfig cfg_;
    EnvSpec spec_;
    std::vector<bool> walls_;
    std::size_t goal_ = 0;
    std::size_t agent_ = 0;
};

using EnvConfig = std::variant<ChainConfig, BanditConfig, GridConfig>;

std::unique_ptr<Environment> make_env(const EnvConfig& cfg);
std::string env_name(const EnvConfig& cfg);

/// State values by value iteration (residual below `tolerance`). With no
/// policy, returns the optimal V*; otherwise V of the given tabular policy.
std::vector<double> oracle_values(const TabularModel& model, double discount,
                                  const std::optional<TabularPolicy>& policy = std::nullopt,
                                  double tolerance = 1e-10);

TabularPolicy uniform_policy(const TabularModel& model);
TabularPolicy greedy_policy(const TabularModel& model, const std::vector<double>& values, double discount);

}  // namespace a2d::env
