// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "a2d/autodiff/ops.hpp"
#include "a2d/trainer/trainer.hpp"
#include "doctest.h"

using namespace a2d;
using namespace a2d::trainer;
using ad::Tensor;

namespace {

env::EnvSpec spec_of(const env::EnvConfig& cfg) { return env::make_env(cfg)->spec(); }

// Actor output layer set so that the policy is fixed: logits = bias.
void force_policy(AgentNet& net, const std::vector<double>& logits) {
    for (auto& p : net.parameters()) {
        if (p.path == "actor.fc2.w") std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 0.0);
        if (p.path == "actor.fc2.b") std::copy(logits.begin(), logits.end(), p.tensor.mutable_data().begin());
    }
}

Segment make_segment(std::vector<double> rewards, bool terminal, std::optional<double> bootstrap) {
    Segment s;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        s.obs.push_back({1.0});
        s.actions.push_back(0);
        s.log_probs.push_back(0.0);
        s.values.push_back(0.0);
    }
    s.rewards = std::move(rewards);
    s.terminal = terminal;
    s.bootstrap = bootstrap;
    return s;
}

}  // namespace

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;
    cfg.total_steps = 300;
    CHECK(learning_rate(cfg, 0) == 1e-3);
    CHECK(learning_rate(cfg, 100) == 1e-3);
    CHECK(learning_rate(cfg, 200) == doctest::Approx(5.5e-4));
    CHECK(learning_rate(cfg, 300) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(learning_rate(cfg, 10000) == doctest::Approx(1e-4).epsilon(1e-12));
    for (std::size_t s = 0; s <= 300; s += 7) CHECK(learning_rate(cfg, s) > 0.0);
}

TEST_CASE("td error arithmetic") {
    Rollout r;
    r.segments.push_back(make_segment({1.0}, false, 2.0));
    const std::vector<double> v{1.0};
    CHECK(td_error(r, v, 0.99)[0] == doctest::Approx(1.98));

    Rollout term;
    term.segments.push_back(make_segment({1.0}, true, std::nullopt));
    CHECK(td_error(term, v, 0.99)[0] == doctest::Approx(0.0));

    Rollout multi;
    multi.segments.push_back(make_segment({0.0, 0.5, 1.0}, false, 4.0));
    const std::vector<double> vals{1.0, 2.0, 3.0};
    const auto d = td_error(multi, vals, 0.5);
    CHECK(d[0] == doctest::Approx(0.0 + 0.5 * 2.0 - 1.0));
    CHECK(d[1] == doctest::Approx(0.5 + 0.5 * 3.0 - 2.0));
    CHECK(d[2] == doctest::Approx(1.0 + 0.5 * 4.0 - 3.0));
}

TEST_CASE("td error has zero mean under the policy's own values") {
    env::ChainConfig cfg{.num_states = 6, .start_state = 0, .max_episode_steps = 1000, .discount = 0.9};
    env::ChainMDP chain(cfg);
    const auto model = chain.tabular_model();
    const auto pi = env::uniform_policy(model);
    const auto v = env::oracle_values(model, cfg.discount, pi);
    Rng rng(3);
    Rollout r;
    std::vector<double> values;
    const int n = 60000;
    Segment seg;
    chain.reset(1, 0);
    for (int i = 0; i < n; ++i) {
        values.push_back(v[chain.state_index()]);
        const auto t = chain.step(rng.below(2));
        seg.obs.push_back(t.state);
        seg.actions.push_back(t.action);
        seg.rewards.push_back(t.reward);
        if (t.episode_over() || i + 1 == n) {
            seg.terminal = t.done;
            if (!t.done) seg.bootstrap = v[chain.state_index()];
            r.segments.push_back(std::move(seg));
            seg = Segment{};
            chain.reset(static_cast<std::uint64_t>(i) + 2, 0);
        }
    }
    const auto d = td_error(r, values, cfg.discount);
    double mean = 0.0, sq = 0.0;
    for (double x : d) {
        mean += x;
        sq += x * x;
    }
    mean /= n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("rollouts without terminals have L records per env") {
    env::EnvConfig cfg = env::ChainConfig{.num_states = 20};
    AgentNet net = agent::build_agent(agent::preset("mlp"), spec_of(cfg), 1);
    EnvPool pool(cfg, 8, 11);
    Rng rng(2);
    const Rollout r = collect_rollout(net, pool, 5, rng);
    REQUIRE(r.segments.size() == 8);
    for (const auto& s : r.segments) {
        CHECK(s.size() == 5);
        CHECK_FALSE(s.terminal);
        CHECK(s.bootstrap.has_value());
    }
    CHECK(r.num_steps() == 40);
}

TEST_CASE("terminal step ends the segment without a bootstrap") {
    env::EnvConfig cfg = env::ChainConfig{.num_states = 2};
    AgentNet net = agent::build_agent(agent::preset("mlp"), spec_of(cfg), 1);
    force_policy(net, {-1e3, 1e3});
    EnvPool pool(cfg, 3, 11);
    Rng rng(2);
    const Rollout r = collect_rollout(net, pool, 5, rng);
    for (const auto& s : r.segments) {
        CHECK(s.size() == 2);
        CHECK(s.terminal);
        CHECK_FALSE(s.bootstrap.has_value());
        CHECK(s.rewards.back() == 1.0);
    }
}

TEST_CASE("rollouts are reproducible") {
    env::EnvConfig cfg = env::GridConfig{};
    auto run = [&] {
        AgentNet net = agent::build_agent(agent::preset("tiny"), spec_of(cfg), 4);
        EnvPool pool(cfg, 4, 9);
        Rng rng(5);
        std::vector<double> trace;
        for (int k = 0; k < 3; ++k) {
            const Rollout r = collect_rollout(net, pool, 5, rng);
            for (const auto& s : r.segments) {
                for (auto a : s.actions) trace.push_back(static_cast<double>(a));
                trace.insert(trace.end(), s.values.begin(), s.values.end());
            }
        }
        return trace;
    };
    CHECK(run() == run());
}

TEST_CASE("uniform policy entropy term is -log A") {
    env::EnvConfig cfg = env::GridConfig{};
    AgentNet net = agent::build_agent(agent::preset("tiny"), spec_of(cfg), 4);
    force_policy(net, {0, 0, 0, 0});
    EnvPool pool(cfg, 4, 9);
    Rng rng(5);
    const Rollout r = collect_rollout(net, pool, 5, rng);
    TrainConfig tc;
    const LossBreakdown b = a2c_losses(r, net, tc);
    CHECK(b.entropy == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
    CHECK(b.total == doctest::Approx(b.weighted_sum()).epsilon(1e-12));
    CHECK(std::abs(b.total - b.weighted_sum()) < 1e-12);
}

TEST_CASE("zero td error gives zero policy loss and zero actor gradient") {
    env::EnvConfig cfg = env::BanditConfig{};
    AgentNet net = agent::build_agent(agent::preset("mlp"), spec_of(cfg), 4);
    Rollout r;
    r.segments.push_back(make_segment({1.0, 0.0, 2.0}, true, std::nullopt));
    r.segments[0].actions = {1, 0, 1};
    const double g = 0.9;
    std::vector<double> v(3);
    v[2] = 2.0;
    v[1] = 0.0 + g * v[2];
    v[0] = 1.0 + g * v[1];
    const agent::PolicyValue pv = net.forward(r.obs_batch(net.env_spec().obs_shape));
    const LossTerms t = a2c_terms(r, pv, v, g);
    CHECK(t.policy.item() == 0.0);
    net.clear_grads();
    ad::backward(t.policy);
    for (const auto& p : net.parameters()) {
        if (p.group != agent::ParamGroup::actor || !p.tensor.has_grad()) continue;
        for (double x : p.tensor.grad()) CHECK(x == 0.0);
    }
}

TEST_CASE("policy gradient matches the enumerated expectation on a bandit") {
    const std::vector<double> probs{0.2, 0.8};
    env::EnvConfig cfg = env::BanditConfig{probs};
    AgentNet net = agent::build_agent(agent::preset("mlp"), spec_of(cfg), 7);
    force_policy(net, {0.3, -0.2});
    std::vector<Parameter> actor;
    for (const auto& p : net.parameters()) {
        if (p.path == "actor.fc2.b") actor.push_back(p);
    }
    const auto grad_of = [&](const Tensor& loss) {
        net.clear_grads();
        ad::backward(loss);
        const auto g = actor[0].tensor.grad();
        return std::vector<double>(g.begin(), g.end());
    };

    // expected gradient: sum_a pi(a) E_r[-(r - V) grad log pi(a)]
    const Tensor one = Tensor::from({1, 1, 1, 1}, {1.0});
    const agent::PolicyValue pv = net.forward(one);
    const double V = pv.values.item();
    std::vector<double> w(2);
    for (std::size_t a = 0; a < 2; ++a) w[a] = -std::exp(pv.log_probs.at(a)) * (probs[a] - V);
    const auto expected = grad_of(ad::sum(ad::mul(pv.log_probs, Tensor::from({1, 2}, w))));

    env::Bandit bandit(env::BanditConfig{probs});
    Rng rng(99);
    const int batches = 40, per_batch = 500;
    std::vector<double> mean(2, 0.0), sq(2, 0.0);
    for (int b = 0; b < batches; ++b) {
        Rollout r;
        for (int i = 0; i < per_batch; ++i) {
            bandit.reset(static_cast<std::uint64_t>(b * per_batch + i), 0);
            const std::size_t a = agent::sample_action(pv.log_probs.data(), rng);
            const auto t = bandit.step(a);
            Segment s = make_segment({t.reward}, true, std::nullopt);
            s.actions = {a};
            r.segments.push_back(std::move(s));
        }
        const agent::PolicyValue bpv = net.forward(r.obs_batch(net.env_spec().obs_shape));
        const std::vector<double> vals(per_batch, V);
        const auto g = grad_of(a2c_terms(r, bpv, vals, 0.99).policy);
        for (std::size_t k = 0; k < 2; ++k) {
            mean[k] += g[k] / batches;
            sq[k] += g[k] * g[k] / batches;
        }
    }
    for (std::size_t k = 0; k < 2; ++k) {
        const double se = std::sqrt((sq[k] - mean[k] * mean[k]) / batches);
        CHECK(std::abs(mean[k] - expected[k]) < 3 * se);
    }
}

TEST_CASE("RMSProp step under a constant gradient approaches lr * sign(g)") {
    Tensor p = Tensor::from({2}, {0.0, 0.0}, true);
    RmsProp opt({{"p", p, agent::ParamGroup::backbone}}, 0.99, 1e-5, 0.0);
    double prev0 = 0.0;
    double step0 = 0.0;
    for (int k = 0; k < 3000; ++k) {
        p.mutable_grad()[0] = 0.3;
        p.mutable_grad()[1] = -2.0;
        opt.step(1e-3);
        step0 = p.at(0) - prev0;
        prev0 = p.at(0);
    }
    CHECK(step0 == doctest::Approx(-1e-3 * 0.3 / (0.3 + 1e-5)).epsilon(1e-6));
}

TEST_CASE("gradient clipping scales by max_norm / norm") {
    Tensor a = Tensor::from({2}, {0.0, 0.0}, true);
    Tensor b = Tensor::from({1}, {0.0}, true);
    a.mutable_grad()[0] = 3.0;
    a.mutable_grad()[1] = 0.0;
    b.mutable_grad()[0] = 4.0;
    std::vector<Parameter> params{{"a", a, agent::ParamGroup::backbone}, {"b", b, agent::ParamGroup::backbone}};
    CHECK(clip_grad_norm(params, 0.5) == doctest::Approx(5.0));
    CHECK(a.grad()[0] == doctest::Approx(0.3));
    CHECK(b.grad()[0] == doctest::Approx(0.4));
}

TEST_CASE("non-finite gradient aborts naming the parameter") {
    Tensor a = Tensor::from({1}, {0.0}, true);
    a.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
    RmsProp opt({{"critic.fc2.b", a, agent::ParamGroup::critic}});
    try {
        opt.step(1e-3);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("critic.fc2.b") != std::string::npos);
    }
}

TEST_CASE("evaluation of a deterministic optimal chain policy") {
    env::EnvConfig cfg = env::ChainConfig{.num_states = 8};
    AgentNet net = agent::build_agent(agent::preset("mlp"), spec_of(cfg), 3);
    force_policy(net, {-1e3, 1e3});
    const EvalResult r = evaluate(net, cfg, 30, 30, 5);
    CHECK(r.returns.size() == 30);
    CHECK(r.mean == 1.0);
}

TEST_CASE("evaluation is reproducible and independent of the worker count") {
    env::EnvConfig cfg = env::GridConfig{};
    AgentNet net = agent::build_agent(agent::preset("tiny"), spec_of(cfg), 3);
    const EvalResult a = evaluate(net, cfg, 30, 30, 8, {}, 1);
    const EvalResult b = evaluate(net, cfg, 30, 30, 8, {}, 1);
    const EvalResult c = evaluate(net, cfg, 30, 30, 8, {}, 4);
    CHECK(a.returns == b.returns);
    CHECK(a.returns == c.returns);
    CHECK(a.returns.size() == 30);
}

TEST_CASE("bandit training prefers the better arm") {
    env::EnvConfig cfg = env::BanditConfig{{0.2, 0.8}};
    AgentNet net = agent::build_agent(agent::preset("mlp"), spec_of(cfg), 1);
    TrainConfig tc;
    tc.total_steps = 20000;
    tc.eval_interval = 0;
    tc.seed = 1;
    const TrainResult res = train(net, cfg, tc);
    const agent::PolicyValue pv = net.forward(Tensor::from({1, 1, 1, 1}, {1.0}));
    CHECK(std::exp(pv.log_probs.at(1)) > 0.95);
    CHECK(res.steps >= 20000);
    CHECK(res.evals.size() == 1);
}

TEST_CASE("train config JSON round trip and validation") {
    TrainConfig tc;
    tc.total_steps = 1234;
    tc.train_actor = false;
    Issues issues;
    CHECK(train_config_from_json(to_json(tc), issues) == tc);
    CHECK(issues.empty());
    Issues bad;
    train_config_from_json(Json{{"gamma", 1.5}, {"rollout_length", 0}, {"bogus", 1}}, bad);
    CHECK(bad.items().size() == 3);
}
