// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/distill/distill.hpp"

#include <cmath>
#include <numeric>

#include "a2d/autodiff/ops.hpp"

namespace a2d::distill {

using ad::Tensor;

namespace {

constexpr double kStudentFloor = 1e-12;

}  // namespace

const char* mode_name(DistillMode mode) {
    switch (mode) {
        case DistillMode::none: return "none";
        case DistillMode::actor_only: return "actor_only";
        case DistillMode::actor_plus_reuse_critic: return "actor_plus_reuse_critic";
        case DistillMode::proposed: return "proposed";
    }
    return "?";
}

const std::vector<DistillMode>& all_modes() {
    static const std::vector<DistillMode> modes{DistillMode::none, DistillMode::actor_only,
                                                DistillMode::actor_plus_reuse_critic, DistillMode::proposed};
    return modes;
}

DistillMode parse_mode(const std::string& name) {
    for (auto m : all_modes()) {
        if (name == mode_name(m)) return m;
    }
    throw ConfigError("distill.mode: unknown mode '" + name +
                      "' (expected none, actor_only, actor_plus_reuse_critic or proposed)");
}

bool needs_teacher(DistillMode mode) { return mode != DistillMode::none; }

void validate(const DistillConfig& cfg, bool require_teacher_path) {
    Issues issues;
    if (!(cfg.alpha1 >= 0.0)) issues.add("distill.alpha1: must be >= 0");
    if (!(cfg.alpha2 >= 0.0)) issues.add("distill.alpha2: must be >= 0");
    if (!(cfg.alpha3 >= 0.0)) issues.add("distill.alpha3: must be >= 0");
    if (require_teacher_path && needs_teacher(cfg.mode) && cfg.teacher.empty()) {
        issues.add(std::string("distill.teacher: required for mode ") + mode_name(cfg.mode));
    }
    issues.throw_if_any();
}

trainer::LossWeights effective_weights(const DistillConfig& cfg) {
    trainer::LossWeights w;
    w.entropy = cfg.alpha1;
    w.actor_distill = cfg.mode == DistillMode::none ? 0.0 : cfg.alpha2;
    w.critic_distill = cfg.mode == DistillMode::proposed ? cfg.alpha3 : 0.0;
    if (cfg.mode == DistillMode::actor_plus_reuse_critic) w.value = 0.0;
    return w;
}

Json to_json(const DistillConfig& cfg) {
    return {{"mode", mode_name(cfg.mode)},
            {"alpha1", cfg.alpha1},
            {"alpha2", cfg.alpha2},
            {"alpha3", cfg.alpha3},
            {"teacher", cfg.teacher.string()}};
}

DistillConfig distill_config_from_json(const Json& j, Issues& issues, const std::string& where) {
    DistillConfig c;
    reject_unknown_keys(j, {"mode", "alpha1", "alpha2", "alpha3", "teacher"}, where, issues);
    std::string mode = mode_name(c.mode);
    read_field(j, "mode", mode, where, issues);
    try {
        c.mode = parse_mode(mode);
    } catch (const ConfigError& e) {
        for (const auto& s : e.issues()) issues.add(s);
    }
    read_field(j, "alpha1", c.alpha1, where, issues);
    read_field(j, "alpha2", c.alpha2, where, issues);
    read_field(j, "alpha3", c.alpha3, where, issues);
    std::string teacher;
    read_field(j, "teacher", teacher, where, issues);
    c.teacher = teacher;
    try {
        validate(c);
    } catch (const ConfigError& e) {
        for (const auto& s : e.issues()) issues.add(s);
    }
    return c;
}

TeacherOutputs teacher_outputs(const AgentNet& teacher, const Tensor& obs_batch) {
    ad::NoGradGuard no_grad;
    const agent::PolicyValue pv = teacher.forward(obs_batch);
    TeacherOutputs out;
    out.probs = ad::detach(ad::exp(pv.log_probs));
    out.values.assign(pv.values.data().begin(), pv.values.data().end());
    return out;
}

Tensor actor_distill_loss(const Tensor& teacher_probs, const Tensor& student_log_probs) {
    if (teacher_probs.shape() != student_log_probs.shape() || teacher_probs.rank() != 2) {
        throw ad::ShapeError("actor_distill_loss", teacher_probs.shape(), student_log_probs.shape());
    }
    const std::size_t n = teacher_probs.dim(0);
    std::vector<double> p_log_p(teacher_probs.numel(), 0.0);
    for (std::size_t i = 0; i < p_log_p.size(); ++i) {
        const double p = teacher_probs.at(i);
        if (p > 0.0) p_log_p[i] = p * std::log(p);
    }
    const Tensor floored = ad::clamp_min(student_log_probs, std::log(kStudentFloor));
    const Tensor cross = ad::sum(ad::mul(ad::detach(teacher_probs), floored));
    const double self = std::accumulate(p_log_p.begin(), p_log_p.end(), 0.0);
    return ad::scale(ad::add_scalar(ad::neg(cross), self), 1.0 / static_cast<double>(n));
}

Tensor critic_distill_loss(const std::vector<double>& teacher_values, const Tensor& student_values) {
    if (student_values.rank() != 1 || student_values.dim(0) != teacher_values.size()) {
        throw ad::ShapeError("critic_distill_loss", ad::Shape{teacher_values.size()}, student_values.shape());
    }
    const Tensor err = ad::sub(student_values, Tensor::from({teacher_values.size()}, teacher_values));
    return ad::scale(ad::mean(ad::square(err)), 0.5);
}

void check_compatible(const AgentNet& student, const AgentNet& teacher) {
    const auto& s = student.env_spec();
    const auto& t = teacher.env_spec();
    Issues issues;
    if (!(s.obs_shape == t.obs_shape)) {
        issues.add("teacher observation shape [" + std::to_string(t.obs_shape.channels) + "," +
                   std::to_string(t.obs_shape.height) + "," + std::to_string(t.obs_shape.width) +
                   "] differs from the student's [" + std::to_string(s.obs_shape.channels) + "," +
                   std::to_string(s.obs_shape.height) + "," + std::to_string(s.obs_shape.width) + "]");
    }
    if (s.num_actions != t.num_actions) {
        issues.add("teacher has " + std::to_string(t.num_actions) + " actions, student has " +
                   std::to_string(s.num_actions));
    }
    issues.throw_if_any();
}

trainer::LossTerms loss_terms(const Rollout& rollout, const AgentNet& student, const AgentNet* teacher,
                              const DistillConfig& cfg, const trainer::TrainConfig& train_cfg,
                              const agent::ForwardContext& ctx) {
    if (needs_teacher(cfg.mode) && teacher == nullptr) {
        throw ConfigError(std::string("distill: mode ") + mode_name(cfg.mode) + " requires a teacher");
    }
    const auto& shape = student.env_spec().obs_shape;
    const Tensor obs = rollout.obs_batch(shape);
    const agent::PolicyValue pv = student.forward(obs, ctx);

    TeacherOutputs tea;
    if (needs_teacher(cfg.mode)) tea = teacher_outputs(*teacher, obs);

    trainer::LossTerms terms;
    if (cfg.mode == DistillMode::actor_plus_reuse_critic) {
        // delta and the targets come from the teacher critic, bootstraps included
        Rollout with_teacher = rollout;
        std::vector<std::vector<double>> finals;
        std::vector<std::size_t> need;
        for (std::size_t i = 0; i < with_teacher.segments.size(); ++i) {
            if (with_teacher.segments[i].bootstrap) {
                need.push_back(i);
                finals.push_back(with_teacher.segments[i].final_next_obs);
            }
        }
        if (!need.empty()) {
            const TeacherOutputs boot = teacher_outputs(*teacher, agent::make_obs_batch(finals, shape));
            for (std::size_t k = 0; k < need.size(); ++k) with_teacher.segments[need[k]].bootstrap = boot.values[k];
        }
        terms = trainer::a2c_terms(with_teacher, pv, tea.values, train_cfg.gamma);
        terms.value = {};
    } else {
        const std::vector<double> v(pv.values.data().begin(), pv.values.data().end());
        terms = trainer::a2c_terms(rollout, pv, v, train_cfg.gamma);
    }
    if (cfg.mode != DistillMode::none) terms.actor_distill = actor_distill_loss(tea.probs, pv.log_probs);
    if (cfg.mode == DistillMode::proposed) terms.critic_distill = critic_distill_loss(tea.values, pv.values);
    if (!train_cfg.train_actor) {
        terms.policy = {};
        terms.entropy = {};
        terms.actor_distill = {};
    }
    return terms;
}

LossBreakdown total_loss(const Rollout& rollout, const AgentNet& student, const AgentNet* teacher,
                         const DistillConfig& cfg, const trainer::TrainConfig& train_cfg,
                         const agent::ForwardContext& ctx) {
    return trainer::combine(loss_terms(rollout, student, teacher, cfg, train_cfg, ctx), effective_weights(cfg));
}

std::vector<agent::Parameter> student_params(AgentNet& student, const DistillConfig& cfg,
                                             const trainer::TrainConfig& train_cfg) {
    std::vector<agent::Parameter> out;
    for (const auto& p : trainer::trainable_params(student, train_cfg)) {
        if (cfg.mode == DistillMode::actor_plus_reuse_critic && p.group == agent::ParamGroup::critic) continue;
        out.push_back(p);
    }
    return out;
}

trainer::TrainResult train_with_distillation(AgentNet& student, const AgentNet* teacher,
                                             const env::EnvConfig& env_cfg, const trainer::TrainConfig& train_cfg,
                                             const DistillConfig& cfg, const trainer::TrainHooks& hooks) {
    validate(cfg);
    if (needs_teacher(cfg.mode)) {
        if (teacher == nullptr) {
            throw ConfigError(std::string("distill: mode ") + mode_name(cfg.mode) + " requires a teacher");
        }
        check_compatible(student, *teacher);
    }
    const bool bn = student.config().batch_norm;
    auto loss = [&](const Rollout& r) {
        agent::ForwardContext ctx;
        ctx.training = bn;
        return total_loss(r, student, teacher, cfg, train_cfg, ctx);
    };
    return trainer::run_training(student, env_cfg, train_cfg, student_params(student, cfg, train_cfg), loss, hooks);
}

}  // namespace a2d::distill
