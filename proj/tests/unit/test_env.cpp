// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <deque>
#include <map>

#include "a2d/env/env.hpp"
#include "doctest.h"

using namespace a2d;
using namespace a2d::env;

namespace {

// Shortest number of moves from each cell to the goal (-1 when unreachable).
std::vector<int> bfs_distance(const GridPixels& g) {
    const std::size_t cells = g.config().size * g.config().size;
    std::vector<int> dist(cells, -1);
    dist[g.goal_cell()] = 0;
    std::deque<std::size_t> q{g.goal_cell()};
    while (!q.empty()) {
        const std::size_t c = q.front();
        q.pop_front();
        for (std::size_t a = 0; a < 4; ++a) {
            const std::size_t nb = g.move(c, a);
            if (dist[nb] < 0) {
                dist[nb] = dist[c] + 1;
                q.push_back(nb);
            }
        }
    }
    return dist;
}

}  // namespace

TEST_CASE("reset without no-ops is deterministic") {
    GridPixels g(GridConfig{});
    const auto a = g.reset(17, 0);
    const auto b = g.reset(17, 0);
    CHECK(a == b);
    ChainMDP c(ChainConfig{.num_states = 10, .start_state = 4});
    c.reset(1, 0);
    CHECK(c.state_index() == 4);
    c.reset(2, 0);
    CHECK(c.state_index() == 4);
}

TEST_CASE("chain null-op start distribution follows the no-op dynamics") {
    // start 10 on a 20-state chain: k no-ops (k ~ U{0..30}) leave the agent at
    // max(10 - k, 0), so P(s=0) = 21/31 and P(s=j) = 1/31 for j in 1..10.
    ChainMDP c(ChainConfig{.num_states = 20, .start_state = 10});
    std::map<std::size_t, int> counts;
    const int n = 62000;
    for (int i = 0; i < n; ++i) {
        c.reset(static_cast<std::uint64_t>(i) + 1000, 30);
        ++counts[c.state_index()];
    }
    CHECK(counts.rbegin()->first == 10);
    for (const auto& [s, k] : counts) {
        const double p = s == 0 ? 21.0 / 31.0 : 1.0 / 31.0;
        const double se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(static_cast<double>(k) / n - p) < 4 * se);
    }
}

TEST_CASE("chain step dynamics") {
    ChainMDP c(ChainConfig{.num_states = 5});
    c.reset(0, 0);
    Transition t = c.step(1);
    CHECK(c.state_index() == 1);
    CHECK(t.reward == 0.0);
    CHECK_FALSE(t.done);
    c.step(1);
    c.step(1);
    c.step(1);
    t = c.step(0);
    CHECK(t.reward == 1.0);
    CHECK(t.done);
    CHECK_THROWS_AS(c.step(0), EnvError);
}

TEST_CASE("out of range action is rejected") {
    ChainMDP c(ChainConfig{});
    c.reset(0, 0);
    CHECK_THROWS_AS(c.step(2), EnvError);
}

TEST_CASE("grid: moving into the goal pays one and terminates") {
    GridPixels g(GridConfig{.size = 6, .random_start = false});
    g.reset(0, 0);
    // walk along the top row and down the right column
    for (int i = 0; i < 5; ++i) CHECK_FALSE(g.step(3).done);
    for (int i = 0; i < 4; ++i) CHECK_FALSE(g.step(1).done);
    const Transition t = g.step(1);
    CHECK(t.done);
    CHECK(t.reward == 1.0);
}

TEST_CASE("grid observation channels and range") {
    GridPixels g(GridConfig{.size = 6, .cell_px = 2, .wall_density = 0.3, .layout_seed = 4});
    const auto obs = g.reset(3, 0);
    CHECK(g.spec().obs_shape == ObsShape{3, 12, 12});
    CHECK(obs.size() == 3 * 12 * 12);
    double agent = 0, goal = 0;
    for (std::size_t i = 0; i < 144; ++i) agent += obs[i];
    for (std::size_t i = 144; i < 288; ++i) goal += obs[i];
    CHECK(agent == 4.0);
    CHECK(goal == 4.0);
    for (double v : obs) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("grid layouts keep every free cell connected to the goal") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GridPixels g(GridConfig{.size = 7, .wall_density = 0.35, .layout_seed = seed});
        const auto dist = bfs_distance(g);
        CHECK_FALSE(g.is_wall(0));
        for (std::size_t c = 0; c < dist.size(); ++c) {
            if (!g.is_wall(c)) CHECK(dist[c] >= 0);
        }
    }
}

TEST_CASE("bandit arm means follow the configured probabilities") {
    Bandit b(BanditConfig{{0.2, 0.8}});
    double total = 0.0;
    const int pulls = 100000;
    for (int i = 0; i < pulls; ++i) {
        b.reset(static_cast<std::uint64_t>(i), 0);
        total += b.step(1).reward;
    }
    CHECK(std::abs(total / pulls - 0.8) < 0.01);
}

TEST_CASE("episodes are capped at max_episode_steps") {
    ChainMDP c(ChainConfig{.num_states = 10, .max_episode_steps = 7});
    c.reset(0, 0);
    Transition t;
    std::size_t steps = 0;
    while (!c.episode_over()) {
        t = c.step(0);
        ++steps;
    }
    CHECK(steps == 7);
    CHECK(t.truncated);
    CHECK_FALSE(t.done);
}

TEST_CASE("same seed and actions give identical transitions") {
    auto run = [] {
        GridPixels g(GridConfig{.wall_density = 0.2, .layout_seed = 3});
        g.reset(11, 30);
        std::vector<double> trace;
        Rng rng(5);
        while (!g.episode_over()) {
            const Transition t = g.step(rng.below(4));
            trace.push_back(t.reward);
            trace.insert(trace.end(), t.next_state.begin(), t.next_state.end());
        }
        return trace;
    };
    CHECK(run() == run());
}

TEST_CASE("chain optimal values are geometric in the distance to the end") {
    ChainMDP c(ChainConfig{.num_states = 10, .discount = 0.99});
    const auto v = oracle_values(c.tabular_model(), 0.99);
    for (std::size_t s = 0; s < 10; ++s) CHECK(v[s] == doctest::Approx(std::pow(0.99, 9.0 - s)).epsilon(1e-9));
}

TEST_CASE("zero discount gives the expected immediate reward") {
    Bandit b(BanditConfig{{0.3, 0.6, 0.1}});
    const auto model = b.tabular_model();
    const auto v = oracle_values(model, 0.0, uniform_policy(model));
    CHECK(v[0] == doctest::Approx((0.3 + 0.6 + 0.1) / 3.0).epsilon(1e-12));
    const auto vstar = oracle_values(model, 0.0);
    CHECK(vstar[0] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("grid optimal values match the shortest-path oracle") {
    GridPixels g(GridConfig{.size = 6, .wall_density = 0.25, .layout_seed = 9});
    const auto v = oracle_values(g.tabular_model(), 0.99);
    const auto dist = bfs_distance(g);
    for (std::size_t c = 0; c < dist.size(); ++c) {
        if (g.is_wall(c) || c == g.goal_cell()) {
            CHECK(v[c] == 0.0);
        } else {
            CHECK(v[c] == doctest::Approx(std::pow(0.99, dist[c] - 1)).epsilon(1e-9));
        }
    }
}

TEST_CASE("Monte Carlo returns match policy values") {
    ChainConfig cfg{.num_states = 5, .start_state = 2, .max_episode_steps = 2000, .discount = 0.9};
    ChainMDP c(cfg);
    const auto model = c.tabular_model();
    const auto pi = uniform_policy(model);
    const auto v = oracle_values(model, cfg.discount, pi);
    Rng act(77);
    const int episodes = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int e = 0; e < episodes; ++e) {
        c.reset(static_cast<std::uint64_t>(e), 0);
        double ret = 0.0, disc = 1.0;
        while (!c.episode_over()) {
            const Transition t = c.step(act.categorical(pi[c.state_index()]));
            ret += disc * t.reward;
            disc *= cfg.discount;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    const double mean = sum / episodes;
    const double se = std::sqrt((sum_sq / episodes - mean * mean) / episodes);
    CHECK(std::abs(mean - v[2]) < 3 * se);
}

TEST_CASE("greedy policy from V* reaches the chain end") {
    ChainMDP c(ChainConfig{.num_states = 6});
    const auto model = c.tabular_model();
    const auto v = oracle_values(model, 0.99);
    const auto pi = greedy_policy(model, v, 0.99);
    for (std::size_t s = 0; s + 1 < 6; ++s) CHECK(pi[s][1] == 1.0);
}

TEST_CASE("make_env dispatches on the config type") {
    CHECK(make_env(ChainConfig{})->spec().name == "chain");
    CHECK(make_env(BanditConfig{})->spec().name == "bandit");
    CHECK(make_env(GridConfig{})->spec().name == "grid_pixels");
    CHECK(env_name(GridConfig{}) == "grid_pixels");
}
