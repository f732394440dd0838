// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "a2d/autodiff/ops.hpp"

namespace a2d::trainer {

using ad::Tensor;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void validate(const TrainConfig& c) {
    Issues issues;
    if (c.total_steps == 0) issues.add("train.total_steps: must be positive");
    if (c.rollout_length == 0) issues.add("train.rollout_length: must be >= 1");
    if (c.num_envs == 0) issues.add("train.num_envs: must be >= 1");
    if (!(c.gamma > 0.0 && c.gamma < 1.0)) issues.add("train.gamma: must lie in (0,1)");
    if (!(c.entropy_coef >= 0.0)) issues.add("train.entropy_coef: must be >= 0");
    if (!(c.lr_initial > 0.0)) issues.add("train.lr_initial: must be positive");
    if (!(c.lr_final > 0.0)) issues.add("train.lr_final: must be positive");
    if (!(c.lr_constant_fraction >= 0.0 && c.lr_constant_fraction <= 1.0)) {
        issues.add("train.lr_constant_fraction: must lie in [0,1]");
    }
    if (!(c.rms_decay >= 0.0 && c.rms_decay < 1.0)) issues.add("train.rms_decay: must lie in [0,1)");
    if (!(c.rms_eps > 0.0)) issues.add("train.rms_eps: must be positive");
    if (c.eval_episodes == 0) issues.add("train.eval_episodes: must be >= 1");
    issues.throw_if_any();
}

Json to_json(const TrainConfig& c) {
    return {{"total_steps", c.total_steps},
            {"rollout_length", c.rollout_length},
            {"num_envs", c.num_envs},
            {"gamma", c.gamma},
            {"entropy_coef", c.entropy_coef},
            {"lr_initial", c.lr_initial},
            {"lr_final", c.lr_final},
            {"lr_constant_fraction", c.lr_constant_fraction},
            {"rms_decay", c.rms_decay},
            {"rms_eps", c.rms_eps},
            {"max_grad_norm", c.max_grad_norm},
            {"eval_episodes", c.eval_episodes},
            {"eval_null_op_max", c.eval_null_op_max},
            {"eval_interval", c.eval_interval},
            {"checkpoint_interval", c.checkpoint_interval},
            {"train_actor", c.train_actor},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, Issues& issues, const std::string& where) {
    TrainConfig c;
    reject_unknown_keys(j,
                        {"total_steps", "rollout_length", "num_envs", "gamma", "entropy_coef", "lr_initial",
                         "lr_final", "lr_constant_fraction", "rms_decay", "rms_eps", "max_grad_norm", "eval_episodes",
                         "eval_null_op_max", "eval_interval", "checkpoint_interval", "train_actor", "seed"},
                        where, issues);
    read_field(j, "total_steps", c.total_steps, where, issues);
    read_field(j, "rollout_length", c.rollout_length, where, issues);
    read_field(j, "num_envs", c.num_envs, where, issues);
    read_field(j, "gamma", c.gamma, where, issues);
    read_field(j, "entropy_coef", c.entropy_coef, where, issues);
    read_field(j, "lr_initial", c.lr_initial, where, issues);
    read_field(j, "lr_final", c.lr_final, where, issues);
    read_field(j, "lr_constant_fraction", c.lr_constant_fraction, where, issues);
    read_field(j, "rms_decay", c.rms_decay, where, issues);
    read_field(j, "rms_eps", c.rms_eps, where, issues);
    read_field(j, "max_grad_norm", c.max_grad_norm, where, issues);
    read_field(j, "eval_episodes", c.eval_episodes, where, issues);
    read_field(j, "eval_null_op_max", c.eval_null_op_max, where, issues);
    read_field(j, "eval_interval", c.eval_interval, where, issues);
    read_field(j, "checkpoint_interval", c.checkpoint_interval, where, issues);
    read_field(j, "train_actor", c.train_actor, where, issues);
    read_field(j, "seed", c.seed, where, issues);
    try {
        validate(c);
    } catch (const ConfigError& e) {
        for (const auto& s : e.issues()) issues.add(s);
    }
    return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
    const double total = static_cast<double>(cfg.total_steps);
    const double knee = cfg.lr_constant_fraction * total;
    const double s = static_cast<double>(step);
    if (s <= knee) return cfg.lr_initial;
    if (s >= total) return cfg.lr_final;
    const double frac = (s - knee) / (total - knee);
    return cfg.lr_initial + (cfg.lr_final - cfg.lr_initial) * frac;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

std::size_t Rollout::num_steps() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.size();
    return n;
}

Tensor Rollout::obs_batch(const env::ObsShape& shape) const {
    std::vector<std::vector<double>> all;
    all.reserve(num_steps());
    for (const auto& s : segments) all.insert(all.end(), s.obs.begin(), s.obs.end());
    return agent::make_obs_batch(all, shape);
}

std::vector<std::size_t> Rollout::actions() const {
    std::vector<std::size_t> out;
    for (const auto& s : segments) out.insert(out.end(), s.actions.begin(), s.actions.end());
    return out;
}

EnvPool::EnvPool(const env::EnvConfig& cfg, std::size_t num_envs, std::uint64_t seed, std::size_t null_op_max)
    : seed_(seed), null_op_max_(null_op_max) {
    for (std::size_t i = 0; i < num_envs; ++i) envs_.push_back(env::make_env(cfg));
    obs_.resize(num_envs);
    episodes_.assign(num_envs, 0);
    running_return_.assign(num_envs, 0.0);
}

const std::vector<double>& EnvPool::ensure_started(std::size_t i) {
    if (envs_[i]->episode_over()) {
        obs_[i] = envs_[i]->reset(derive_seed(seed_, {i, episodes_[i]++}), null_op_max_);
        running_return_[i] = 0.0;
    }
    return obs_[i];
}

void EnvPool::record_step(std::size_t i, const env::Transition& t) {
    obs_[i] = t.next_state;
    running_return_[i] += t.reward;
    if (t.episode_over()) finished_.push_back(running_return_[i]);
}

std::vector<double> EnvPool::take_finished_returns() {
    std::vector<double> out;
    out.swap(finished_);
    return out;
}

Rollout collect_rollout(const AgentNet& net, EnvPool& pool, std::size_t L, Rng& rng, const ForwardContext& ctx) {
    const std::size_t W = pool.size();
    const auto& shape = pool.spec().obs_shape;
    const std::size_t A = pool.spec().num_actions;
    Rollout r;
    r.segments.resize(W);
    std::vector<bool> active(W, true);
    std::vector<std::vector<double>> current(W);
    for (std::size_t i = 0; i < W; ++i) current[i] = pool.ensure_started(i);

    ad::NoGradGuard no_grad;
    for (std::size_t t = 0; t < L; ++t) {
        std::vector<std::size_t> idx;
        std::vector<std::vector<double>> batch;
        for (std::size_t i = 0; i < W; ++i) {
            if (!active[i]) continue;
            idx.push_back(i);
            batch.push_back(current[i]);
        }
        if (idx.empty()) break;
        const agent::PolicyValue pv = net.forward(agent::make_obs_batch(batch, shape), ctx);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const std::size_t i = idx[k];
            const auto row = pv.log_probs.data().subspan(k * A, A);
            const std::size_t a = agent::sample_action(row, rng);
            const env::Transition tr = pool.env(i).step(a);
            pool.record_step(i, tr);
            Segment& seg = r.segments[i];
            seg.obs.push_back(std::move(batch[k]));
            seg.actions.push_back(a);
            seg.rewards.push_back(tr.reward);
            seg.log_probs.push_back(row[a]);
            seg.values.push_back(pv.values.at(k));
            current[i] = tr.next_state;
            if (tr.episode_over()) {
                active[i] = false;
                seg.terminal = tr.done;
                seg.truncated = tr.truncated;
            }
        }
    }

    std::vector<std::size_t> need;
    std::vector<std::vector<double>> finals;
    for (std::size_t i = 0; i < W; ++i) {
        Segment& seg = r.segments[i];
        seg.final_next_obs = current[i];
        if (!seg.terminal && seg.size() > 0) {
            need.push_back(i);
            finals.push_back(current[i]);
        }
    }
    if (!need.empty()) {
        const agent::PolicyValue pv = net.forward(agent::make_obs_batch(finals, shape), ctx);
        for (std::size_t k = 0; k < need.size(); ++k) r.segments[need[k]].bootstrap = pv.values.at(k);
    }
    return r;
}

std::vector<double> next_values(const Rollout& rollout, std::span<const double> values) {
    std::vector<double> out;
    out.reserve(values.size());
    std::size_t offset = 0;
    for (const auto& seg : rollout.segments) {
        for (std::size_t t = 0; t < seg.size(); ++t) {
            if (t + 1 < seg.size()) {
                out.push_back(values[offset + t + 1]);
            } else {
                out.push_back(seg.terminal ? 0.0 : seg.bootstrap.value_or(0.0));
            }
        }
        offset += seg.size();
    }
    return out;
}

std::vector<double> td_targets(const Rollout& rollout, std::span<const double> values, double gamma) {
    const auto next = next_values(rollout, values);
    std::vector<double> out;
    out.reserve(next.size());
    std::size_t k = 0;
    for (const auto& seg : rollout.segments) {
        for (std::size_t t = 0; t < seg.size(); ++t, ++k) out.push_back(seg.rewards[t] + gamma * next[k]);
    }
    return out;
}

std::vector<double> td_error(const Rollout& rollout, std::span<const double> values, double gamma) {
    auto out = td_targets(rollout, values, gamma);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= values[k];
    return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double LossBreakdown::weighted_sum() const {
    return w_policy * policy + w_value * value + w_entropy * entropy + w_actor_distill * actor_distill +
           w_critic_distill * critic_distill + w_cost * cost;
}

Json LossBreakdown::to_json() const {
    return {{"policy", policy},
            {"value", value},
            {"entropy", entropy},
            {"actor_distill", actor_distill},
            {"critic_distill", critic_distill},
            {"cost", cost},
            {"weights",
             {{"policy", w_policy},
              {"value", w_value},
              {"entropy", w_entropy},
              {"actor_distill", w_actor_distill},
              {"critic_distill", w_critic_distill},
              {"cost", w_cost}}},
            {"total", total}};
}

LossBreakdown combine(const LossTerms& t, const LossWeights& w) {
    LossBreakdown b;
    Tensor total;
    auto take = [&](const Tensor& term, double weight, double& value_slot, double& weight_slot) {
        if (!term.defined()) {
            weight_slot = 0.0;
            return;
        }
        value_slot = term.item();
        weight_slot = weight;
        if (weight == 0.0) return;
        Tensor part = weight == 1.0 ? term : ad::scale(term, weight);
        total = total.defined() ? ad::add(total, part) : part;
    };
    take(t.policy, w.policy, b.policy, b.w_policy);
    take(t.value, w.value, b.value, b.w_value);
    take(t.entropy, w.entropy, b.entropy, b.w_entropy);
    take(t.actor_distill, w.actor_distill, b.actor_distill, b.w_actor_distill);
    take(t.critic_distill, w.critic_distill, b.critic_distill, b.w_critic_distill);
    take(t.cost, w.cost, b.cost, b.w_cost);
    b.total_tensor = total.defined() ? total : Tensor::scalar(0.0);
    b.total = b.total_tensor.item();
    return b;
}

LossTerms a2c_terms(const Rollout& rollout, const agent::PolicyValue& pv, std::span<const double> critic_values,
                    double gamma) {
    const std::size_t n = rollout.num_steps();
    const std::size_t A = pv.log_probs.dim(1);
    if (pv.log_probs.dim(0) != n || critic_values.size() != n) {
        throw ad::ShapeError("a2c_terms", pv.log_probs.shape(), ad::Shape{n, A});
    }
    const auto delta = td_error(rollout, critic_values, gamma);
    const auto targets = td_targets(rollout, critic_values, gamma);
    const auto actions = rollout.actions();
    std::vector<double> weight(n * A, 0.0);
    for (std::size_t k = 0; k < n; ++k) weight[k * A + actions[k]] = -delta[k] / static_cast<double>(n);

    LossTerms terms;
    terms.policy = ad::sum(ad::mul(pv.log_probs, Tensor::from({n, A}, std::move(weight))));
    const Tensor err = ad::sub(pv.values, Tensor::from({n}, targets));
    terms.value = ad::scale(ad::mean(ad::square(err)), 0.5);
    terms.entropy = ad::scale(ad::sum(ad::mul(ad::exp(pv.log_probs), pv.log_probs)), 1.0 / static_cast<double>(n));
    return terms;
}

LossBreakdown a2c_losses(const Rollout& rollout, const AgentNet& net, const TrainConfig& cfg,
                         const ForwardContext& ctx) {
    const agent::PolicyValue pv = net.forward(rollout.obs_batch(net.env_spec().obs_shape), ctx);
    const std::vector<double> v(pv.values.data().begin(), pv.values.data().end());
    LossTerms terms = a2c_terms(rollout, pv, v, cfg.gamma);
    LossWeights w;
    w.entropy = cfg.entropy_coef;
    if (!cfg.train_actor) {
        terms.policy = {};
        terms.entropy = {};
    }
    return combine(terms, w);
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

double global_grad_norm(std::span<const Parameter> params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + p.path + "'");
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (double& g : p.tensor.mutable_grad()) g *= factor;
        }
    }
    return norm;
}

RmsProp::RmsProp(std::vector<Parameter> params, double decay, double eps, double max_grad_norm)
    : params_(std::move(params)), decay_(decay), eps_(eps), max_norm_(max_grad_norm) {
    for (const auto& p : params_) sq_.emplace_back(p.tensor.numel(), 0.0);
}

double RmsProp::step(double lr) {
    const double norm = clip_grad_norm(params_, max_norm_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& t = params_[i].tensor;
        if (!t.has_grad()) continue;
        auto data = t.mutable_data();
        const auto grad = t.grad();
        auto& sq = sq_[i];
        for (std::size_t k = 0; k < data.size(); ++k) {
            sq[k] = decay_ * sq[k] + (1.0 - decay_) * grad[k] * grad[k];
            data[k] -= lr * grad[k] / (std::sqrt(sq[k]) + eps_);
        }
    }
    return norm;
}

void RmsProp::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

EvalResult summarize(std::vector<double> returns) {
    EvalResult r;
    const double n = static_cast<double>(returns.size());
    r.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
    double var = 0.0;
    for (double x : returns) var += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(var / n);
    r.returns = std::move(returns);
    return r;
}

// Lockstep run of episodes [begin, end); `policy` maps a batch of
// observations to one action per row.
template <typename Policy>
void run_episodes(const env::EnvConfig& env_cfg, std::size_t begin, std::size_t end, std::size_t null_op_max,
                  std::uint64_t seed, Policy&& policy, std::vector<double>& returns) {
    std::vector<std::unique_ptr<env::Environment>> envs;
    std::vector<std::vector<double>> obs;
    std::vector<Rng> rngs;
    for (std::size_t e = begin; e < end; ++e) {
        envs.push_back(env::make_env(env_cfg));
        obs.push_back(envs.back()->reset(derive_seed(seed, {e}), null_op_max));
        rngs.emplace_back(derive_seed(seed, {e, 1}));
    }
    for (;;) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < envs.size(); ++k) {
            if (!envs[k]->episode_over()) idx.push_back(k);
        }
        if (idx.empty()) break;
        const auto actions = policy(idx, obs, rngs);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const std::size_t k = idx[j];
            const env::Transition t = envs[k]->step(actions[j]);
            returns[begin + k] += t.reward;
            obs[k] = t.next_state;
        }
    }
}

template <typename Policy>
EvalResult run_parallel(const env::EnvConfig& env_cfg, std::size_t episodes, std::size_t null_op_max,
                        std::uint64_t seed, std::size_t workers, Policy&& policy) {
    std::vector<double> returns(episodes, 0.0);
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(episodes, 1));
    if (workers == 1) {
        run_episodes(env_cfg, 0, episodes, null_op_max, seed, policy, returns);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (episodes + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk, e = std::min(episodes, b + chunk);
            if (b >= e) break;
            threads.emplace_back([&, w, b, e] {
                try {
                    run_episodes(env_cfg, b, e, null_op_max, seed, policy, returns);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return summarize(std::move(returns));
}

}  // namespace

EvalResult evaluate(const AgentNet& net, const env::EnvConfig& env_cfg, std::size_t episodes, std::size_t null_op_max,
                    std::uint64_t seed, const ForwardContext& ctx, std::size_t workers) {
    const auto shape = net.env_spec().obs_shape;
    const std::size_t A = net.env_spec().num_actions;
    auto policy = [&](const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>& obs,
                      std::vector<Rng>& rngs) {
        ad::NoGradGuard no_grad;
        std::vector<std::vector<double>> batch;
        for (auto k : idx) batch.push_back(obs[k]);
        const agent::PolicyValue pv = net.forward(agent::make_obs_batch(batch, shape), ctx);
        std::vector<std::size_t> actions;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            actions.push_back(agent::sample_action(pv.log_probs.data().subspan(j * A, A), rngs[idx[j]]));
        }
        return actions;
    };
    return run_parallel(env_cfg, episodes, null_op_max, seed, workers, policy);
}

EvalResult evaluate_random(const env::EnvConfig& env_cfg, std::size_t episodes, std::size_t null_op_max,
                           std::uint64_t seed) {
    const std::size_t A = env::make_env(env_cfg)->spec().num_actions;
    auto policy = [A](const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>&,
                      std::vector<Rng>& rngs) {
        std::vector<std::size_t> actions;
        for (auto k : idx) actions.push_back(static_cast<std::size_t>(rngs[k].below(A)));
        return actions;
    };
    return run_parallel(env_cfg, episodes, null_op_max, seed, 1, policy);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

void abort_non_finite(const LossBreakdown& loss, const std::string& where) {
    throw TrainingError(where + ": non-finite loss; breakdown " + loss.to_json().dump());
}

std::vector<Parameter> trainable_params(AgentNet& net, const TrainConfig& cfg) {
    std::vector<Parameter> out;
    for (const auto& p : net.parameters()) {
        if (!cfg.train_actor && p.group != agent::ParamGroup::critic) continue;
        out.push_back(p);
    }
    return out;
}

TrainResult run_training(AgentNet& net, const env::EnvConfig& env_cfg, const TrainConfig& cfg,
                         std::vector<Parameter> params, const LossFn& loss, const TrainHooks& hooks) {
    validate(cfg);
    EnvPool pool(env_cfg, cfg.num_envs, derive_seed(cfg.seed, {1}));
    Rng rng(derive_seed(cfg.seed, {2}));
    const std::uint64_t eval_seed = derive_seed(cfg.seed, {3});
    RmsProp opt(std::move(params), cfg.rms_decay, cfg.rms_eps, cfg.max_grad_norm);

    TrainResult result;
    LossBreakdown last;
    std::size_t next_eval = cfg.eval_interval;
    std::size_t next_ckpt = cfg.checkpoint_interval;
    auto record_eval = [&](double lr) {
        const ForwardContext ctx = hooks.eval_context ? hooks.eval_context() : ForwardContext{};
        const EvalResult ev =
            evaluate(net, env_cfg, cfg.eval_episodes, cfg.eval_null_op_max, eval_seed, ctx, hooks.workers);
        EvalPoint pt{result.steps, ev.mean, last, lr, std::nullopt};
        if (hooks.tau) pt.tau = hooks.tau();
        result.evals.push_back(pt);
        if (hooks.on_eval) {
            Json j{{"step", pt.step}, {"mean_score", pt.mean_score}, {"loss", last.to_json()}, {"lr", lr}};
            if (pt.tau) j["tau"] = *pt.tau;
            hooks.on_eval(j);
        }
    };

    while (result.steps < cfg.total_steps) {
        const double lr = learning_rate(cfg, result.steps);
        const ForwardContext act = hooks.act_context ? hooks.act_context() : ForwardContext{};
        const Rollout rollout = collect_rollout(net, pool, cfg.rollout_length, rng, act);
        result.steps += rollout.num_steps();
        net.clear_grads();
        last = loss(rollout);
        if (!std::isfinite(last.total)) abort_non_finite(last, "training step " + std::to_string(result.steps));
        ad::backward(last.total_tensor);
        if (!hooks.update_weights || hooks.update_weights(result.updates)) opt.step(lr);
        if (hooks.after_update) hooks.after_update(result.steps, result.updates);
        ++result.updates;
        if (cfg.eval_interval > 0 && result.steps >= next_eval && result.steps < cfg.total_steps) {
            record_eval(lr);
            while (next_eval <= result.steps) next_eval += cfg.eval_interval;
        }
        if (cfg.checkpoint_interval > 0 && !hooks.checkpoint_dir.empty() && result.steps >= next_ckpt) {
            std::filesystem::create_directories(hooks.checkpoint_dir);
            agent::save_agent(net, hooks.checkpoint_dir / ("step_" + std::to_string(result.steps) + ".ckpt"));
            while (next_ckpt <= result.steps) next_ckpt += cfg.checkpoint_interval;
        }
    }
    net.clear_grads();
    record_eval(learning_rate(cfg, result.steps));
    result.final_score = result.evals.back().mean_score;
    if (!hooks.checkpoint_dir.empty()) {
        std::filesystem::create_directories(hooks.checkpoint_dir);
        agent::save_agent(net, hooks.checkpoint_dir / "final.ckpt");
    }
    return result;
}

TrainResult train(AgentNet& net, const env::EnvConfig& env_cfg, const TrainConfig& cfg, const TrainHooks& hooks) {
    const bool bn = net.config().batch_norm;
    auto loss = [&](const Rollout& r) {
        ForwardContext ctx;
        ctx.training = bn;
        return a2c_losses(r, net, cfg, ctx);
    };
    return run_training(net, env_cfg, cfg, trainable_params(net, cfg), loss, hooks);
}

}  // namespace a2d::trainer
