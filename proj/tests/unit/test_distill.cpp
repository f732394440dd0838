// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include "a2d/autodiff/ops.hpp"
#include "a2d/distill/distill.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace a2d;
using namespace a2d::distill;
using ad::Tensor;
using trainer::TrainConfig;

namespace {

env::GridConfig grid() { return env::GridConfig{}; }
env::EnvSpec grid_spec() { return env::make_env(grid())->spec(); }

Tensor random_probs(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> d(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += d[r * cols + c] = rng.uniform(0.01, 1.0);
        for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] /= s;
    }
    return Tensor::from({rows, cols}, d);
}

Tensor log_of(const Tensor& p, bool requires_grad = false) {
    std::vector<double> d(p.data().begin(), p.data().end());
    for (auto& v : d) v = std::log(v);
    return Tensor::from(p.shape(), d, requires_grad);
}

// sum over rows and actions of p log(p/q), divided by the row count
double brute_kl(const Tensor& p, const Tensor& q) {
    const std::size_t rows = p.dim(0), cols = p.dim(1);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double pv = p.at(r * cols + c);
            if (pv > 0) total += pv * std::log(pv / std::max(q.at(r * cols + c), 1e-12));
        }
    }
    return total / static_cast<double>(rows);
}

trainer::Rollout frozen_rollout(const agent::AgentNet& net, std::uint64_t seed) {
    trainer::EnvPool pool(grid(), 4, seed);
    Rng rng(seed);
    return trainer::collect_rollout(net, pool, 5, rng);
}

std::vector<double> snapshot(const agent::AgentNet& net) {
    std::vector<double> out;
    for (const auto& p : net.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

DistillConfig with_mode(DistillMode m) {
    DistillConfig c;
    c.mode = m;
    return c;
}

}  // namespace

TEST_CASE("KL of identical distributions is zero") {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const Tensor p = random_probs(3, 4, rng);
        CHECK(std::abs(actor_distill_loss(p, log_of(p)).item()) < 1e-9);
    }
}

TEST_CASE("KL of a one-hot teacher against a uniform student is log 2") {
    const Tensor p = Tensor::from({1, 2}, {1.0, 0.0});
    const Tensor q = Tensor::from({1, 2}, {std::log(0.5), std::log(0.5)});
    CHECK(actor_distill_loss(p, q).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("KL matches direct enumeration and is nonnegative") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const Tensor p = random_probs(5, 6, rng);
        const Tensor q = random_probs(5, 6, rng);
        const double kl = actor_distill_loss(p, log_of(q)).item();
        CHECK(kl == doctest::Approx(brute_kl(p, q)).epsilon(1e-12));
        CHECK(kl >= 0.0);
    }
}

TEST_CASE("student probabilities are floored inside the log") {
    const Tensor p = Tensor::from({1, 2}, {0.5, 0.5});
    const Tensor q = Tensor::from({1, 2}, {0.0, -1e6});
    const double kl = actor_distill_loss(p, q).item();
    CHECK(std::isfinite(kl));
    CHECK(kl == doctest::Approx(0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-12)).epsilon(1e-12));
}

TEST_CASE("KL gradient matches finite differences") {
    Rng rng(3);
    const Tensor p = random_probs(4, 5, rng);
    Tensor logits = a2d::testing::random_tensor({4, 5}, rng);
    const auto r = a2d::testing::gradcheck(
        [&] { return actor_distill_loss(p, ad::log_softmax(logits, 1)); }, {logits});
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("critic MSE values and gradient") {
    CHECK(critic_distill_loss({3.0}, Tensor::from({1}, {1.0})).item() == doctest::Approx(2.0));
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(7);
        for (auto& x : v) x = rng.uniform(-5, 5);
        CHECK(std::abs(critic_distill_loss(v, Tensor::from({7}, v)).item()) < 1e-9);
    }
    std::vector<double> tv{0.5, -1.0, 2.0};
    Tensor sv = Tensor::from({3}, {1.0, 1.0, -1.0}, true);
    ad::backward(critic_distill_loss(tv, sv));
    // d/dv of mean(0.5 (v - t)^2) is (v - t) / n
    for (std::size_t i = 0; i < 3; ++i) CHECK(sv.grad()[i] == doctest::Approx((sv.at(i) - tv[i]) / 3.0));
}

TEST_CASE("config validation, weights per mode and JSON") {
    DistillConfig bad;
    bad.alpha1 = -1;
    bad.alpha3 = -2;
    try {
        validate(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.issues().size() == 2);
    }
    CHECK_THROWS_AS(validate(with_mode(DistillMode::proposed), true), ConfigError);
    CHECK_NOTHROW(validate(with_mode(DistillMode::none), true));
    CHECK_THROWS_AS(parse_mode("soft"), ConfigError);

    const auto none = effective_weights(with_mode(DistillMode::none));
    CHECK(none.actor_distill == 0.0);
    CHECK(none.critic_distill == 0.0);
    CHECK(none.entropy == 1e-2);
    const auto actor = effective_weights(with_mode(DistillMode::actor_only));
    CHECK(actor.actor_distill == 1e-1);
    CHECK(actor.critic_distill == 0.0);
    const auto reuse = effective_weights(with_mode(DistillMode::actor_plus_reuse_critic));
    CHECK(reuse.value == 0.0);
    CHECK(reuse.critic_distill == 0.0);
    const auto prop = effective_weights(with_mode(DistillMode::proposed));
    CHECK(prop.actor_distill == 1e-1);
    CHECK(prop.critic_distill == 1e-3);

    DistillConfig c = with_mode(DistillMode::actor_only);
    c.teacher = "t.ckpt";
    Issues issues;
    CHECK(distill_config_from_json(to_json(c), issues) == c);
    CHECK(issues.empty());
    Json j = to_json(c);
    j["temperature"] = 2.0;
    (void)distill_config_from_json(j, issues);
    CHECK_FALSE(issues.empty());
}

TEST_CASE("mode none reproduces the plain actor-critic breakdown") {
    auto net = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    const auto rollout = frozen_rollout(net, 7);
    TrainConfig tc;
    const auto a = trainer::a2c_losses(rollout, net, tc);
    const auto b = total_loss(rollout, net, nullptr, with_mode(DistillMode::none), tc);
    CHECK(a.policy == b.policy);
    CHECK(a.value == b.value);
    CHECK(a.entropy == b.entropy);
    CHECK(a.total == b.total);
    CHECK(b.actor_distill == 0.0);
    CHECK(b.critic_distill == 0.0);
}

TEST_CASE("teacher identical to the student gives zero distillation terms") {
    auto student = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    auto teacher = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    const auto rollout = frozen_rollout(student, 8);
    TrainConfig tc;
    const auto b = total_loss(rollout, student, &teacher, with_mode(DistillMode::proposed), tc);
    const auto a = trainer::a2c_losses(rollout, student, tc);
    CHECK(std::abs(b.actor_distill) < 1e-9);
    CHECK(std::abs(b.critic_distill) < 1e-9);
    CHECK(b.total == doctest::Approx(a.total).epsilon(1e-12));
}

TEST_CASE("scaling alpha2 scales exactly the actor-distillation contribution") {
    auto student = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    auto teacher = agent::build_agent(agent::preset("res-s"), grid_spec(), 6);
    const auto rollout = frozen_rollout(student, 9);
    TrainConfig tc;
    DistillConfig c1 = with_mode(DistillMode::proposed);
    DistillConfig c2 = c1;
    const double k = 3.5;
    c2.alpha2 = c1.alpha2 * k;
    const auto b1 = total_loss(rollout, student, &teacher, c1, tc);
    const auto b2 = total_loss(rollout, student, &teacher, c2, tc);
    CHECK(b1.actor_distill == b2.actor_distill);
    CHECK(b2.w_actor_distill == doctest::Approx(k * b1.w_actor_distill));
    // total difference is exactly the extra actor-distill contribution
    const double expected = (k - 1.0) * b1.w_actor_distill * b1.actor_distill;
    CHECK(b2.total - b1.total == doctest::Approx(expected).epsilon(1e-9));
    CHECK(b1.weighted_sum() == doctest::Approx(b1.total).epsilon(1e-12));
}

TEST_CASE("reuse mode bootstraps from the teacher critic") {
    auto student = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    auto teacher = agent::build_agent(agent::preset("res-s"), grid_spec(), 6);
    const auto rollout = frozen_rollout(student, 10);
    TrainConfig tc;
    const auto b = total_loss(rollout, student, &teacher, with_mode(DistillMode::actor_plus_reuse_critic), tc);
    CHECK(b.w_value == 0.0);
    CHECK(b.w_critic_distill == 0.0);

    // Oracle: policy loss from advantages built out of teacher values only.
    const Tensor obs = rollout.obs_batch(grid_spec().obs_shape);
    const auto tea = teacher_outputs(teacher, obs);
    trainer::Rollout tr = rollout;
    for (auto& seg : tr.segments) {
        if (seg.bootstrap) {
            ad::NoGradGuard g;
            const auto s = grid_spec().obs_shape;
            const Tensor x = Tensor::from({1, s.channels, s.height, s.width}, seg.final_next_obs);
            seg.bootstrap = teacher.forward(x).values.at(0);
        }
    }
    const auto delta = trainer::td_error(tr, tea.values, tc.gamma);
    const auto pv = student.forward(obs);
    const auto acts = rollout.actions();
    double expect = 0.0;
    for (std::size_t i = 0; i < acts.size(); ++i) expect -= pv.log_probs.at(i * 4 + acts[i]) * delta[i];
    expect /= static_cast<double>(acts.size());
    CHECK(b.policy == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("total loss is differentiable in every trainable student parameter") {
    auto student = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    auto teacher = agent::build_agent(agent::preset("tiny"), grid_spec(), 6);
    const auto rollout = frozen_rollout(student, 11);
    const DistillConfig cfg = with_mode(DistillMode::proposed);
    TrainConfig tc;
    const Tensor obs = rollout.obs_batch(grid_spec().obs_shape);
    const auto tea = teacher_outputs(teacher, obs);

    // delta and the value targets are detached, so the oracle holds them at
    // the values of the base point.
    std::vector<double> frozen;
    {
        ad::NoGradGuard g;
        const auto v = student.forward(obs).values;
        frozen.assign(v.data().begin(), v.data().end());
    }
    auto frozen_loss = [&] {
        const auto pv = student.forward(obs);
        auto terms = trainer::a2c_terms(rollout, pv, frozen, tc.gamma);
        terms.actor_distill = actor_distill_loss(tea.probs, pv.log_probs);
        terms.critic_distill = critic_distill_loss(tea.values, pv.values);
        return trainer::combine(terms, effective_weights(cfg)).total_tensor;
    };

    std::vector<Tensor> inputs;
    for (auto& p : student_params(student, cfg, tc)) inputs.push_back(p.tensor);
    REQUIRE(inputs.size() == student.parameters().size());

    // at the base point the library loss and the frozen oracle agree in value and gradient
    student.clear_grads();
    const auto lib = total_loss(rollout, student, &teacher, cfg, tc);
    ad::backward(lib.total_tensor);
    std::vector<std::vector<double>> lib_grads;
    for (auto& t : inputs) lib_grads.emplace_back(t.grad().begin(), t.grad().end());
    student.clear_grads();
    const Tensor oracle = frozen_loss();
    CHECK(oracle.item() == lib.total);
    ad::backward(oracle);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t k = 0; k < lib_grads[i].size(); ++k) CHECK(inputs[i].grad()[k] == lib_grads[i][k]);
    }

    // head parameters sit behind no relu kink near the base point
    std::vector<Tensor> heads;
    for (auto& p : student.parameters()) {
        if (p.group != agent::ParamGroup::backbone) heads.push_back(p.tensor);
    }
    const auto r = a2d::testing::gradcheck(frozen_loss, heads);
    CHECK(r.checked > 100);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("incompatible teacher is rejected") {
    auto student = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    env::GridConfig big;
    big.size = 8;
    auto teacher = agent::build_agent(agent::preset("tiny"), env::make_env(big)->spec(), 5);
    CHECK_THROWS_AS(check_compatible(student, teacher), ConfigError);
    TrainConfig tc;
    tc.total_steps = 40;
    CHECK_THROWS_AS(train_with_distillation(student, &teacher, grid(), tc, with_mode(DistillMode::proposed)),
                    ConfigError);
    CHECK_THROWS_AS(train_with_distillation(student, nullptr, grid(), tc, with_mode(DistillMode::proposed)),
                    ConfigError);
}

TEST_CASE("teacher stays frozen; reuse mode leaves the student critic unchanged") {
    auto student = agent::build_agent(agent::preset("tiny"), grid_spec(), 5);
    auto teacher = agent::build_agent(agent::preset("tiny"), grid_spec(), 6);
    const auto teacher_before = snapshot(teacher);
    std::vector<double> critic_before;
    for (const auto& p : student.parameters()) {
        if (p.group == agent::ParamGroup::critic) {
            critic_before.insert(critic_before.end(), p.tensor.data().begin(), p.tensor.data().end());
        }
    }
    TrainConfig tc;
    tc.total_steps = 400;
    tc.eval_interval = 0;
    tc.eval_episodes = 2;
    const auto student_before = snapshot(student);
    (void)train_with_distillation(student, &teacher, grid(), tc, with_mode(DistillMode::actor_plus_reuse_critic));
    CHECK(bit_equal(snapshot(teacher), teacher_before));
    for (const auto& p : teacher.parameters()) CHECK_FALSE(p.tensor.has_grad());
    std::vector<double> critic_after;
    for (const auto& p : student.parameters()) {
        if (p.group == agent::ParamGroup::critic) {
            critic_after.insert(critic_after.end(), p.tensor.data().begin(), p.tensor.data().end());
        }
    }
    CHECK(bit_equal(critic_after, critic_before));
    CHECK_FALSE(bit_equal(snapshot(student), student_before));
}
