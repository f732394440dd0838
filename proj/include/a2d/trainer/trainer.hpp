// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synchronous advantage actor-critic: rollout collection over W environments,
// one-step td-error advantages, RMSProp with global-norm clipping and a
// constant-then-linear learning-rate schedule.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2d/agent/agent.hpp"
#include "a2d/autodiff/tensor.hpp"
#include "a2d/common/json_util.hpp"
#include "a2d/common/rng.hpp"
#include "a2d/env/env.hpp"

namespace a2d::trainer {

using agent::AgentNet;
using agent::ForwardContext;
using agent::Parameter;

/// Raised when optimization hits a non-finite gradient or loss.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::size_t total_steps = 100000;  // environment steps summed over all envs
    std::size_t rollout_length = 5;
    std::size_t num_envs = 8;
    double gamma = 0.99;
    double entropy_coef = 1e-2;
    double lr_initial = 1e-3;
    double lr_final = 1e-4;
    double lr_constant_fraction = 1.0 / 3.0;
    double rms_decay = 0.99;
    double rms_eps = 1e-5;
    double max_grad_norm = 0.5;  // <= 0 disables clipping
    std::size_t eval_episodes = 30;
    std::size_t eval_null_op_max = 30;
    std::size_t eval_interval = 10000;       // steps between evaluations; 0 = final only
    std::size_t checkpoint_interval = 0;     // steps between checkpoints; 0 = none
    bool train_actor = true;                 // false: value loss only, critic head params only
    std::uint64_t seed = 0;

    bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError listing every violated invariant.
void validate(const TrainConfig& cfg);
Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, Issues& issues, const std::string& where = "train");

/// Learning rate at a global step: constant for the first fraction of
/// total_steps, then linear to lr_final at total_steps.
double learning_rate(const TrainConfig& cfg, std::size_t step);

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

/// Up to L consecutive steps of one environment.
struct Segment {
    std::vector<std::vector<double>> obs;
    std::vector<std::size_t> actions;
    std::vector<double> rewards;
    std::vector<double> log_probs;  // behaviour log pi(a_t|s_t)
    std::vector<double> values;     // behaviour V(s_t)
    bool terminal = false;          // ended in a terminal state
    bool truncated = false;         // ended on the time limit
    std::optional<double> bootstrap;  // V(s_{t+1}) of the final state; absent iff terminal
    std::vector<double> final_next_obs;

    std::size_t size() const { return actions.size(); }
};

struct Rollout {
    std::vector<Segment> segments;  // one per environment

    std::size_t num_steps() const;
    /// Observations of every record, segment-major.
    ad::Tensor obs_batch(const env::ObsShape& shape) const;
    std::vector<std::size_t> actions() const;
};

/// Owns W environments that persist across rollouts.
class EnvPool {
public:
    EnvPool(const env::EnvConfig& cfg, std::size_t num_envs, std::uint64_t seed, std::size_t null_op_max = 0);

    std::size_t size() const { return envs_.size(); }
    const env::EnvSpec& spec() const { return envs_.front()->spec(); }
    env::Environment& env(std::size_t i) { return *envs_[i]; }

    /// Resets environment i if its episode has ended; returns its observation.
    const std::vector<double>& ensure_started(std::size_t i);
    void record_step(std::size_t i, const env::Transition& t);

    // Undiscounted returns of training episodes finished since the last call.
    std::vector<double> take_finished_returns();

private:
    std::vector<std::unique_ptr<env::Environment>> envs_;
    std::vector<std::vector<double>> obs_;
    std::vector<std::uint64_t> episodes_;
    std::vector<double> running_return_;
    std::vector<double> finished_;
    std::uint64_t seed_;
    std::size_t null_op_max_;
};

/// Runs every environment for up to L steps (stopping early at episode end)
/// with actions sampled from the current policy.
Rollout collect_rollout(const AgentNet& net, EnvPool& pool, std::size_t L, Rng& rng, const ForwardContext& ctx = {});

/// Value of V(s_{t+1}) for each record in segment-major order, drawing on the
/// following record, the segment bootstrap, or 0 at a terminal step.
std::vector<double> next_values(const Rollout& rollout, std::span<const double> values);

/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t).
std::vector<double> td_error(const Rollout& rollout, std::span<const double> values, double gamma);

/// r_t + gamma * V(s_{t+1}) * (1 - done_t).
std::vector<double> td_targets(const Rollout& rollout, std::span<const double> values, double gamma);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Scalar loss components, their weights and the differentiable total.
struct LossBreakdown {
    double policy = 0.0, value = 0.0, entropy = 0.0, actor_distill = 0.0, critic_distill = 0.0, cost = 0.0;
    double w_policy = 1.0, w_value = 1.0, w_entropy = 0.0, w_actor_distill = 0.0, w_critic_distill = 0.0,
           w_cost = 0.0;
    double total = 0.0;
    ad::Tensor total_tensor;

    double weighted_sum() const;
    Json to_json() const;
};

/// Differentiable loss terms; undefined tensors are absent terms.
struct LossTerms {
    ad::Tensor policy, value, entropy, actor_distill, critic_distill, cost;
};

struct LossWeights {
    double policy = 1.0, value = 1.0, entropy = 1e-2, actor_distill = 0.0, critic_distill = 0.0, cost = 0.0;
};

/// Weighted total of the present terms; zero-weight terms stay out of the graph.
LossBreakdown combine(const LossTerms& terms, const LossWeights& weights);

/// Policy, value and entropy terms from a forward pass over
/// rollout.obs_batch(). `critic_values` supplies the detached estimates used
/// inside delta and the value targets; the value term regresses pv.values.
LossTerms a2c_terms(const Rollout& rollout, const agent::PolicyValue& pv, std::span<const double> critic_values,
                    double gamma);

LossBreakdown a2c_losses(const Rollout& rollout, const AgentNet& net, const TrainConfig& cfg,
                         const ForwardContext& ctx = {});

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

/// Global L2 norm of the gradients; throws TrainingError naming the first
/// parameter whose gradient is not finite.
double global_grad_norm(std::span<const Parameter> params);

/// Scales gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(std::span<Parameter> params, double max_norm);

class RmsProp {
public:
    RmsProp(std::vector<Parameter> params, double decay = 0.99, double eps = 1e-5, double max_grad_norm = 0.5);

    /// Clips, then applies one update at learning rate lr. Returns the
    /// pre-clip gradient norm.
    double step(double lr);
    void zero_grad();
    const std::vector<Parameter>& params() const { return params_; }

private:
    std::vector<Parameter> params_;
    std::vector<std::vector<double>> sq_;
    double decay_, eps_, max_norm_;
};

// ---------------------------------------------------------------------------
// Evaluation and the training loop
// ---------------------------------------------------------------------------

struct EvalResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> returns;  // undiscounted, one per episode
};

/// Runs `episodes` episodes with actions sampled from the policy, after
/// null-op starts. Episodes are processed in lockstep batches split across
/// `workers` threads; results do not depend on the worker count.
EvalResult evaluate(const AgentNet& net, const env::EnvConfig& env_cfg, std::size_t episodes, std::size_t null_op_max,
                    std::uint64_t seed, const ForwardContext& ctx = {}, std::size_t workers = 1);

/// Mean return of the uniform random policy under the same protocol.
EvalResult evaluate_random(const env::EnvConfig& env_cfg, std::size_t episodes, std::size_t null_op_max,
                           std::uint64_t seed);

struct EvalPoint {
    std::size_t step = 0;
    double mean_score = 0.0;
    LossBreakdown loss;
    double lr = 0.0;
    std::optional<double> tau;
};

struct TrainResult {
    std::vector<EvalPoint> evals;
    double final_score = 0.0;
    std::size_t steps = 0;
    std::size_t updates = 0;
};

/// Receives one JSON record per evaluation.
using MetricsCallback = std::function<void(const Json&)>;

struct TrainHooks {
    MetricsCallback on_eval;
    std::filesystem::path checkpoint_dir;  // empty: no checkpoints
    std::size_t workers = 1;
    // Context for acting during rollouts and for evaluation (supernets).
    std::function<ForwardContext()> act_context;
    std::function<ForwardContext()> eval_context;
    // When set and false for an update index, the weight step is skipped.
    std::function<bool(std::size_t update)> update_weights;
    // Runs after every backward pass (and weight step), e.g. an architecture step.
    std::function<void(std::size_t steps, std::size_t update)> after_update;
    // Temperature reported with each evaluation.
    std::function<double()> tau;
};

/// Builds the differentiable loss for one rollout.
using LossFn = std::function<LossBreakdown(const Rollout&)>;

/// Generic A2C-style loop: collect, compute `loss`, backprop, RMSProp step
/// over `params`, evaluate on schedule.
TrainResult run_training(AgentNet& net, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                         std::vector<Parameter> params, const LossFn& loss, const TrainHooks& hooks = {});

/// Plain A2C training of `net`.
TrainResult train(AgentNet& net, const env::EnvConfig& env_cfg, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Parameters updated by the plain trainer under cfg.train_actor.
std::vector<Parameter> trainable_params(AgentNet& net, const TrainConfig& cfg);

/// Json of a breakdown that failed with a non-finite value, then throws.
[[noreturn]] void abort_non_finite(const LossBreakdown& loss, const std::string& where);

}  // namespace a2d::trainer
