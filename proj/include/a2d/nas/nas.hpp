// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable architecture search over the supernet: Gumbel-Softmax cell
// mixtures, an expected-FLOPs penalty, temperature annealing, one-level or
// bi-level updates, and argmax derivation of a standalone backbone.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "a2d/agent/agent.hpp"
#include "a2d/autodiff/tensor.hpp"
#include "a2d/common/json_util.hpp"
#include "a2d/common/rng.hpp"
#include "a2d/distill/distill.hpp"
#include "a2d/trainer/trainer.hpp"

namespace a2d::nas {

using agent::AgentNet;
using agent::BackboneConfig;
using agent::kNumCandidateOps;
using CostTable = std::vector<std::array<double, kNumCandidateOps>>;

/// One standard Gumbel(0, 1) draw per entry.
std::vector<double> sample_gumbel(std::size_t n, Rng& rng);

/// softmax((logits + g) / tau) over a rank-1 row, differentiable in logits.
ad::Tensor gumbel_softmax(const ad::Tensor& logits_row, double tau, std::span<const double> noise);
ad::Tensor gumbel_softmax(const ad::Tensor& logits_row, double tau, Rng& rng);

/// Architecture logits [cells x 9] and the current temperature.
struct ArchParams {
    ad::Tensor logits;
    double tau = 5.0;

    static ArchParams zeros(std::size_t cells, double tau);
    std::size_t num_cells() const { return logits.dim(0); }
    ad::Tensor row(std::size_t cell) const;
    /// softmax(logits) per cell.
    std::vector<std::vector<double>> probabilities() const;
    /// softmax(logits / tau) per cell, without noise.
    std::vector<std::vector<double>> tempered_weights() const;
};

enum class Optimization { one_level, bi_level };
const char* optimization_name(Optimization o);
Optimization parse_optimization(const std::string& name);

struct SearchConfig {
    double lambda = 0.0;  // cost weight
    double arch_lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double tau0 = 5.0;
    double tau_decay = 0.98;
    std::size_t anneal_events = 200;  // spread evenly over the search steps
    Optimization optimization = Optimization::one_level;
    std::string supernet = "supernet";  // backbone preset

    bool operator==(const SearchConfig&) const = default;
};

void validate(const SearchConfig& cfg);
double final_tau(const SearchConfig& cfg);
Json to_json(const SearchConfig& cfg);
SearchConfig search_config_from_json(const Json& j, Issues& issues, const std::string& where = "search");

/// Softmax-expected cell FLOPs divided by the most expensive architecture's
/// cell FLOPs; differentiable in the logits.
ad::Tensor cost_loss(const ad::Tensor& logits, const CostTable& table);

/// Expected FLOPs of the whole network under softmax(logits).
double expected_flops(const ArchParams& arch, const BackboneConfig& supernet, const env::EnvSpec& spec);

/// Adam over a single tensor.
class Adam {
public:
    Adam(ad::Tensor param, double lr, double beta1, double beta2, double eps);
    void step();

private:
    ad::Tensor param_;
    double lr_, beta1_, beta2_, eps_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

struct ArchRecord {
    std::size_t step = 0;
    std::vector<std::vector<double>> probs;
    double tau = 0.0;
    double expected_flops = 0.0;

    Json to_json() const;
};

struct SearchResult {
    trainer::TrainResult train;
    ArchParams arch;
    std::vector<ArchRecord> history;
};

struct SearchHooks {
    trainer::MetricsCallback on_eval;
    std::function<void(const ArchRecord&)> on_arch;
    std::size_t workers = 1;
};

/// Runs the search on `supernet` (a supernet-kind AgentNet). The search
/// length is train_cfg.total_steps.
SearchResult search(AgentNet& supernet, const env::EnvConfig& env_cfg, const SearchConfig& cfg,
                    const trainer::TrainConfig& train_cfg, const distill::DistillConfig& distill_cfg,
                    const AgentNet* teacher, const SearchHooks& hooks = {});

/// Context whose cell weights are the noise-free tempered softmax.
agent::ForwardContext deterministic_context(const ArchParams& arch);
/// Context whose cell weights are one-hot at the given ops.
agent::ForwardContext one_hot_context(const std::vector<agent::OpKind>& ops);

/// Per-cell argmax of the logits; ties go to the lower-FLOPs op, then the
/// lower index.
std::vector<agent::OpKind> argmax_ops(const ad::Tensor& logits, const CostTable& table);
BackboneConfig derive(const ArchParams& arch, const BackboneConfig& supernet, const env::EnvSpec& spec);

struct RetrainResult {
    AgentNet net;
    trainer::TrainResult train;
    double score = 0.0;
    double mflops = 0.0;
    std::size_t params = 0;

    Json summary() const;
};

/// Fresh initialization of the derived backbone trained with distillation.
RetrainResult retrain_derived(const BackboneConfig& derived, const env::EnvConfig& env_cfg, const AgentNet* teacher,
                              const trainer::TrainConfig& train_cfg, const distill::DistillConfig& distill_cfg,
                              std::uint64_t init_seed, const trainer::TrainHooks& hooks = {});

}  // namespace a2d::nas
