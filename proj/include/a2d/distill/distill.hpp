// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Actor-critic distillation: a frozen teacher supervises the student's actor
// through a KL term and its critic through a soft MSE term.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "a2d/agent/agent.hpp"
#include "a2d/autodiff/tensor.hpp"
#include "a2d/common/json_util.hpp"
#include "a2d/trainer/trainer.hpp"

namespace a2d::distill {

using agent::AgentNet;
using trainer::LossBreakdown;
using trainer::Rollout;

enum class DistillMode { none, actor_only, actor_plus_reuse_critic, proposed };

const char* mode_name(DistillMode mode);
/// Throws ConfigError on an unknown name.
DistillMode parse_mode(const std::string& name);
const std::vector<DistillMode>& all_modes();

struct DistillConfig {
    DistillMode mode = DistillMode::proposed;
    double alpha1 = 1e-2;  // entropy
    double alpha2 = 1e-1;  // actor distillation
    double alpha3 = 1e-3;  // critic distillation
    std::filesystem::path teacher;

    bool operator==(const DistillConfig&) const = default;
};

/// Throws ConfigError listing every violation. The teacher path is only
/// required when `require_teacher_path` is set and the mode needs a teacher.
void validate(const DistillConfig& cfg, bool require_teacher_path = false);
bool needs_teacher(DistillMode mode);

/// Loss weights the mode actually applies: none zeroes alpha2 and alpha3,
/// actor_only zeroes alpha3, reuse drops the value and critic terms.
trainer::LossWeights effective_weights(const DistillConfig& cfg);

Json to_json(const DistillConfig& cfg);
DistillConfig distill_config_from_json(const Json& j, Issues& issues, const std::string& where = "distill");

/// Detached teacher outputs on a batch of student states.
struct TeacherOutputs {
    ad::Tensor probs;            // [B, A]
    std::vector<double> values;  // [B]
};

TeacherOutputs teacher_outputs(const AgentNet& teacher, const ad::Tensor& obs_batch);

/// Mean over rows of sum_a p(a) * (log p(a) - log max(q(a), 1e-12)).
ad::Tensor actor_distill_loss(const ad::Tensor& teacher_probs, const ad::Tensor& student_log_probs);

/// Mean of 0.5 * (v_student - v_teacher)^2.
ad::Tensor critic_distill_loss(const std::vector<double>& teacher_values, const ad::Tensor& student_values);

/// Differentiable terms for one rollout under the mode (absent terms are
/// undefined). `teacher` may be null only in mode none.
trainer::LossTerms loss_terms(const Rollout& rollout, const AgentNet& student, const AgentNet* teacher,
                              const DistillConfig& cfg, const trainer::TrainConfig& train_cfg,
                              const agent::ForwardContext& ctx = {});

/// loss_terms combined with effective_weights.
LossBreakdown total_loss(const Rollout& rollout, const AgentNet& student, const AgentNet* teacher,
                         const DistillConfig& cfg, const trainer::TrainConfig& train_cfg,
                         const agent::ForwardContext& ctx = {});

/// Throws ConfigError when teacher and student disagree on the observation
/// shape or the action count.
void check_compatible(const AgentNet& student, const AgentNet& teacher);

/// Parameters the student trains under the mode.
std::vector<agent::Parameter> student_params(AgentNet& student, const DistillConfig& cfg,
                                             const trainer::TrainConfig& train_cfg);

trainer::TrainResult train_with_distillation(AgentNet& student, const AgentNet* teacher,
                                             const env::EnvConfig& env_cfg, const trainer::TrainConfig& train_cfg,
                                             const DistillConfig& cfg, const trainer::TrainHooks& hooks = {});

}  // namespace a2d::distill
