// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/env/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace a2d::env {

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

std::vector<double> Environment::reset(std::uint64_t seed, std::size_t null_op_max) {
    rng_.reseed(seed);
    reset_state(rng_);
    const std::size_t noops = null_op_max == 0 ? 0 : static_cast<std::size_t>(rng_.below(null_op_max + 1));
    for (std::size_t i = 0; i < noops; ++i) {
        if (!apply_noop(rng_)) break;
    }
    steps_ = 0;
    over_ = false;
    return observe();
}

Transition Environment::step(std::size_t action) {
    if (over_) throw EnvError(spec().name + ": step() called after the episode ended; call reset()");
    if (action >= spec().num_actions) {
        throw EnvError(spec().name + ": action " + std::to_string(action) + " out of range [0, " +
                       std::to_string(spec().num_actions) + ")");
    }
    Transition t;
    t.state = observe();
    t.action = action;
    auto [reward, terminal] = apply(action, rng_);
    ++steps_;
    t.reward = reward;
    t.done = terminal;
    t.truncated = !terminal && steps_ >= spec().max_episode_steps;
    t.next_state = observe();
    over_ = t.done || t.truncated;
    return t;
}

// ---------------------------------------------------------------------------
// ChainMDP
// ---------------------------------------------------------------------------

ChainMDP::ChainMDP(ChainConfig cfg) : cfg_(cfg) {
    if (cfg_.num_states < 2) throw EnvError("chain: num_states must be >= 2");
    if (cfg_.start_state >= cfg_.num_states) throw EnvError("chain: start_state out of range");
    if (!(cfg_.discount > 0.0 && cfg_.discount < 1.0)) throw EnvError("chain: discount must lie in (0,1)");
    if (cfg_.max_episode_steps == 0) throw EnvError("chain: max_episode_steps must be positive");
    spec_ = EnvSpec{"chain", {1, 1, cfg_.num_states}, 2, cfg_.max_episode_steps, cfg_.discount};
}

void ChainMDP::reset_state(Rng&) { pos_ = cfg_.start_state; }

bool ChainMDP::apply_noop(Rng&) {
    if (pos_ == 0) return false;
    --pos_;
    return true;
}

std::pair<double, bool> ChainMDP::apply(std::size_t action, Rng&) {
    if (pos_ == cfg_.num_states - 1) return {1.0, true};
    if (action == 0) {
        if (pos_ > 0) --pos_;
    } else {
        ++pos_;
    }
    return {0.0, false};
}

std::vector<double> ChainMDP::observation_of(std::size_t state) const {
    std::vector<double> obs(cfg_.num_states, 0.0);
    obs.at(state) = 1.0;
    return obs;
}

TabularModel ChainMDP::tabular_model() const {
    const std::size_t n = cfg_.num_states;
    TabularModel m{n, 2, {}};
    m.outcomes.assign(n, std::vector<std::vector<Outcome>>(2));
    for (std::size_t s = 0; s < n; ++s) {
        if (s == n - 1) {
            m.outcomes[s][0] = {{1.0, s, 1.0, true}};
            m.outcomes[s][1] = {{1.0, s, 1.0, true}};
        } else {
            m.outcomes[s][0] = {{1.0, s == 0 ? 0 : s - 1, 0.0, false}};
            m.outcomes[s][1] = {{1.0, s + 1, 0.0, false}};
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Bandit
// ---------------------------------------------------------------------------

Bandit::Bandit(BanditConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.arm_probs.size() < 2) throw EnvError("bandit: at least 2 arms required");
    for (double p : cfg_.arm_probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw EnvError("bandit: arm probabilities must lie in [0,1]");
    }
    spec_ = EnvSpec{"bandit", {1, 1, 1}, cfg_.arm_probs.size(), 1, cfg_.discount};
}

std::pair<double, bool> Bandit::apply(std::size_t action, Rng& rng) {
    return {rng.uniform() < cfg_.arm_probs[action] ? 1.0 : 0.0, true};
}

std::vector<double> Bandit::observation_of(std::size_t) const { return {1.0}; }

TabularModel Bandit::tabular_model() const {
    TabularModel m{1, cfg_.arm_probs.size(), {}};
    m.outcomes.assign(1, std::vector<std::vector<Outcome>>(m.num_actions));
    for (std::size_t a = 0; a < m.num_actions; ++a) {
        const double p = cfg_.arm_probs[a];
        m.outcomes[0][a] = {{p, 0, 1.0, true}, {1.0 - p, 0, 0.0, true}};
    }
    return m;
}

// ---------------------------------------------------------------------------
// GridPixels
// ---------------------------------------------------------------------------

GridPixels::GridPixels(GridConfig cfg) : cfg_(cfg) {
    if (cfg_.size < 2) throw EnvError("grid: size must be >= 2");
    if (cfg_.cell_px == 0) throw EnvError("grid: cell_px must be positive");
    if (!(cfg_.wall_density >= 0.0 && cfg_.wall_density < 1.0)) throw EnvError("grid: wall_density must lie in [0,1)");
    if (!(cfg_.discount > 0.0 && cfg_.discount < 1.0)) throw EnvError("grid: discount must lie in (0,1)");
    if (cfg_.max_episode_steps == 0) throw EnvError("grid: max_episode_steps must be positive");
    const std::size_t n = cfg_.size;
    const std::size_t px = n * cfg_.cell_px;
    spec_ = EnvSpec{"grid_pixels", {3, px, px}, 4, cfg_.max_episode_steps, cfg_.discount};
    goal_ = n * n - 1;

    // Walls are drawn from the layout seed; cells cut off from the goal are
    // filled in so every free cell can reach it.
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(cfg_.layout_seed, {0x6772696421ULL, attempt}));
        walls_.assign(n * n, false);
        for (std::size_t c = 0; c < n * n; ++c) {
            if (c == goal_ || c == 0) continue;
            walls_[c] = rng.uniform() < cfg_.wall_density;
        }
        std::vector<bool> reach(n * n, false);
        std::deque<std::size_t> queue{goal_};
        reach[goal_] = true;
        while (!queue.empty()) {
            const std::size_t c = queue.front();
            queue.pop_front();
            for (std::size_t a = 0; a < 4; ++a) {
                const std::size_t nb = move(c, a);
                if (!reach[nb]) {
                    reach[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        if (!reach[0]) continue;
        for (std::size_t c = 0; c < n * n; ++c) {
            if (!reach[c]) walls_[c] = true;
        }
        break;
    }
}

std::size_t GridPixels::move(std::size_t cell, std::size_t action) const {
    const std::size_t n = cfg_.size;
    const std::size_t r = cell / n, c = cell % n;
    std::size_t nr = r, nc = c;
    switch (action) {
        case 0: if (r > 0) nr = r - 1; break;
        case 1: if (r + 1 < n) nr = r + 1; break;
        case 2: if (c > 0) nc = c - 1; break;
        case 3: if (c + 1 < n) nc = c + 1; break;
        default: break;
    }
    const std::size_t next = nr * n + nc;
    return walls_[next] ? cell : next;
}

std::vector<std::size_t> GridPixels::start_cells() const {
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < walls_.size(); ++c) {
        if (!walls_[c] && c != goal_) cells.push_back(c);
    }
    return cells;
}

void GridPixels::reset_state(Rng& rng) {
    if (cfg_.random_start) {
        const auto cells = start_cells();
        agent_ = cells[rng.below(cells.size())];
    } else {
        agent_ = 0;
    }
}

std::pair<double, bool> GridPixels::apply(std::size_t action, Rng&) {
    agent_ = move(agent_, action);
    if (agent_ == goal_) return {1.0 - cfg_.step_penalty, true};
    return {-cfg_.step_penalty, false};
}

std::vector<double> GridPixels::observation_of(std::size_t state) const {
    const std::size_t n = cfg_.size, px = cfg_.cell_px, side = n * px;
    std::vector<double> obs(3 * side * side, 0.0);
    auto paint = [&](std::size_t channel, std::size_t cell) {
        const std::size_t r = cell / n, c = cell % n;
        for (std::size_t y = 0; y < px; ++y)
            for (std::size_t x = 0; x < px; ++x) obs[(channel * side + r * px + y) * side + c * px + x] = 1.0;
    };
    paint(0, state);
    paint(1, goal_);
    for (std::size_t c = 0; c < walls_.size(); ++c) {
        if (walls_[c]) paint(2, c);
    }
    return obs;
}

TabularModel GridPixels::tabular_model() const {
    const std::size_t cells = cfg_.size * cfg_.size;
    TabularModel m{cells, 4, {}};
    m.outcomes.assign(cells, std::vector<std::vector<Outcome>>(4));
    for (std::size_t s = 0; s < cells; ++s) {
        for (std::size_t a = 0; a < 4; ++a) {
            if (walls_[s] || s == goal_) {
                m.outcomes[s][a] = {{1.0, s, 0.0, true}};
                continue;
            }
            const std::size_t next = move(s, a);
            if (next == goal_) {
                m.outcomes[s][a] = {{1.0, next, 1.0 - cfg_.step_penalty, true}};
            } else {
                m.outcomes[s][a] = {{1.0, next, -cfg_.step_penalty, false}};
            }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Factory and oracles
// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_env(const EnvConfig& cfg) {
    return std::visit(
        [](const auto& c) -> std::unique_ptr<Environment> {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, ChainConfig>) return std::make_unique<ChainMDP>(c);
            else if constexpr (std::is_same_v<T, BanditConfig>) return std::make_unique<Bandit>(c);
            else return std::make_unique<GridPixels>(c);
        },
        cfg);
}

std::string env_name(const EnvConfig& cfg) {
    switch (cfg.index()) {
        case 0: return "chain";
        case 1: return "bandit";
        default: return "grid_pixels";
    }
}

namespace {

double action_value(const TabularModel& m, const std::vector<double>& v, double discount, std::size_t s,
                    std::size_t a) {
    double q = 0.0;
    for (const auto& o : m.outcomes[s][a]) q += o.prob * (o.reward + (o.terminal ? 0.0 : discount * v[o.next_state]));
    return q;
}

}  // namespace

std::vector<double> oracle_values(const TabularModel& model, double discount, const std::optional<TabularPolicy>& policy,
                                  double tolerance) {
    if (model.num_states == 0) throw EnvError("oracle_values: environment has no enumerable states");
    if (policy && policy->size() != model.num_states) throw EnvError("oracle_values: policy/state count mismatch");
    std::vector<double> v(model.num_states, 0.0), next(model.num_states, 0.0);
    for (std::size_t iter = 0; iter < 10'000'000; ++iter) {
        double residual = 0.0;
        for (std::size_t s = 0; s < model.num_states; ++s) {
            double value;
            if (policy) {
                value = 0.0;
                for (std::size_t a = 0; a < model.num_actions; ++a) {
                    const double p = (*policy)[s][a];
                    if (p != 0.0) value += p * action_value(model, v, discount, s, a);
                }
            } else {
                value = -std::numeric_limits<double>::infinity();
                for (std::size_t a = 0; a < model.num_actions; ++a)
                    value = std::max(value, action_value(model, v, discount, s, a));
            }
            next[s] = value;
            residual = std::max(residual, std::abs(value - v[s]));
        }
        v.swap(next);
        if (residual < tolerance) return v;
    }
    throw EnvError("oracle_values: value iteration did not converge");
}

TabularPolicy uniform_policy(const TabularModel& model) {
    return TabularPolicy(model.num_states, std::vector<double>(model.num_actions, 1.0 / model.num_actions));
}

TabularPolicy greedy_policy(const TabularModel& model, const std::vector<double>& values, double discount) {
    TabularPolicy pi(model.num_states, std::vector<double>(model.num_actions, 0.0));
    for (std::size_t s = 0; s < model.num_states; ++s) {
        std::size_t best = 0;
        double best_q = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < model.num_actions; ++a) {
            const double q = action_value(model, values, discount, s, a);
            if (q > best_q + 1e-12) {
                best_q = q;
                best = a;
            }
        }
        pi[s][best] = 1.0;
    }
    return pi;
}

}  // namespace a2d::env
