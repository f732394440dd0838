// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/nas/nas.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "a2d/autodiff/ops.hpp"

namespace a2d::nas {

using ad::Tensor;
using agent::OpKind;

std::vector<double> sample_gumbel(std::size_t n, Rng& rng) {
    std::vector<double> g(n);
    for (auto& v : g) v = rng.gumbel();
    return g;
}

Tensor gumbel_softmax(const Tensor& logits_row, double tau, std::span<const double> noise) {
    if (logits_row.rank() != 1 || noise.size() != logits_row.numel()) {
        throw ad::ShapeError("gumbel_softmax", logits_row.shape(), ad::Shape{noise.size()});
    }
    if (!(tau > 0.0)) throw ConfigError("gumbel_softmax: tau must be positive");
    const std::size_t n = logits_row.numel();
    const Tensor perturbed = ad::add(logits_row, Tensor::from({n}, {noise.begin(), noise.end()}));
    return ad::reshape(ad::softmax(ad::reshape(ad::scale(perturbed, 1.0 / tau), {1, n}), 1), {n});
}

Tensor gumbel_softmax(const Tensor& logits_row, double tau, Rng& rng) {
    const auto g = sample_gumbel(logits_row.numel(), rng);
    return gumbel_softmax(logits_row, tau, g);
}

// ---------------------------------------------------------------------------
// ArchParams
// ---------------------------------------------------------------------------

ArchParams ArchParams::zeros(std::size_t cells, double tau) {
    ArchParams a;
    a.logits = Tensor::zeros({cells, kNumCandidateOps}, true);
    a.tau = tau;
    return a;
}

Tensor ArchParams::row(std::size_t cell) const {
    return ad::reshape(ad::index_select(logits, 0, {cell}), {kNumCandidateOps});
}

namespace {

std::vector<std::vector<double>> row_softmax(const Tensor& logits, double inv_temp) {
    std::vector<std::vector<double>> out;
    const std::size_t cells = logits.dim(0);
    for (std::size_t c = 0; c < cells; ++c) {
        std::vector<double> row(kNumCandidateOps);
        double mx = -INFINITY;
        for (std::size_t i = 0; i < kNumCandidateOps; ++i) {
            row[i] = logits.at(c * kNumCandidateOps + i) * inv_temp;
            mx = std::max(mx, row[i]);
        }
        double total = 0.0;
        for (auto& v : row) {
            v = std::exp(v - mx);
            total += v;
        }
        for (auto& v : row) v /= total;
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> ArchParams::probabilities() const { return row_softmax(logits, 1.0); }

std::vector<std::vector<double>> ArchParams::tempered_weights() const { return row_softmax(logits, 1.0 / tau); }

// ---------------------------------------------------------------------------
// SearchConfig
// ---------------------------------------------------------------------------

const char* optimization_name(Optimization o) { return o == Optimization::one_level ? "one_level" : "bi_level"; }

Optimization parse_optimization(const std::string& name) {
    if (name == "one_level") return Optimization::one_level;
    if (name == "bi_level") return Optimization::bi_level;
    throw ConfigError("search.optimization: unknown value '" + name + "' (expected one_level or bi_level)");
}

double final_tau(const SearchConfig& cfg) {
    return cfg.tau0 * std::pow(cfg.tau_decay, static_cast<double>(cfg.anneal_events));
}

void validate(const SearchConfig& c) {
    Issues issues;
    if (!(c.lambda >= 0.0)) issues.add("search.lambda: must be >= 0");
    if (!(c.arch_lr > 0.0)) issues.add("search.arch_lr: must be positive");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) issues.add("search.beta1: must lie in [0,1)");
    if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) issues.add("search.beta2: must lie in [0,1)");
    if (!(c.adam_eps > 0.0)) issues.add("search.adam_eps: must be positive");
    if (!(c.tau0 > 0.0)) issues.add("search.tau0: must be positive");
    if (!(c.tau_decay > 0.0 && c.tau_decay <= 1.0)) issues.add("search.tau_decay: must lie in (0,1]");
    if (issues.empty()) {
        const double t = final_tau(c);
        if (t < 0.05 || t > 0.2) {
            issues.add("search: final temperature " + std::to_string(t) + " falls outside [0.05, 0.2]");
        }
    }
    try {
        if (agent::preset(c.supernet).kind != agent::BackboneKind::supernet) {
            issues.add("search.supernet: preset '" + c.supernet + "' is not a supernet");
        }
    } catch (const std::exception&) {
        issues.add("search.supernet: unknown preset '" + c.supernet + "'");
    }
    issues.throw_if_any();
}

Json to_json(const SearchConfig& c) {
    return {{"lambda", c.lambda},         {"arch_lr", c.arch_lr},
            {"beta1", c.beta1},           {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},     {"tau0", c.tau0},
            {"tau_decay", c.tau_decay},   {"anneal_events", c.anneal_events},
            {"optimization", optimization_name(c.optimization)},
            {"supernet", c.supernet}};
}

SearchConfig search_config_from_json(const Json& j, Issues& issues, const std::string& where) {
    SearchConfig c;
    reject_unknown_keys(j,
                        {"lambda", "arch_lr", "beta1", "beta2", "adam_eps", "tau0", "tau_decay", "anneal_events",
                         "optimization", "supernet"},
                        where, issues);
    read_field(j, "lambda", c.lambda, where, issues);
    read_field(j, "arch_lr", c.arch_lr, where, issues);
    read_field(j, "beta1", c.beta1, where, issues);
    read_field(j, "beta2", c.beta2, where, issues);
    read_field(j, "adam_eps", c.adam_eps, where, issues);
    read_field(j, "tau0", c.tau0, where, issues);
    read_field(j, "tau_decay", c.tau_decay, where, issues);
    read_field(j, "anneal_events", c.anneal_events, where, issues);
    std::string opt = optimization_name(c.optimization);
    read_field(j, "optimization", opt, where, issues);
    try {
        c.optimization = parse_optimization(opt);
    } catch (const ConfigError& e) {
        for (const auto& s : e.issues()) issues.add(s);
    }
    read_field(j, "supernet", c.supernet, where, issues);
    try {
        validate(c);
    } catch (const ConfigError& e) {
        for (const auto& s : e.issues()) issues.add(s);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Cost
// ---------------------------------------------------------------------------

Tensor cost_loss(const Tensor& logits, const CostTable& table) {
    if (logits.rank() != 2 || logits.dim(0) != table.size() || logits.dim(1) != kNumCandidateOps) {
        throw ad::ShapeError("cost_loss", logits.shape(), ad::Shape{table.size(), kNumCandidateOps});
    }
    std::vector<double> flat;
    double max_cost = 0.0;
    for (const auto& row : table) {
        flat.insert(flat.end(), row.begin(), row.end());
        max_cost += *std::max_element(row.begin(), row.end());
    }
    if (!(max_cost > 0.0)) throw ConfigError("cost_loss: every candidate has zero cost");
    const Tensor probs = ad::softmax(logits, 1);
    return ad::scale(ad::sum(ad::mul(probs, Tensor::from(logits.shape(), std::move(flat)))), 1.0 / max_cost);
}

namespace {

// Whole-network FLOPs minus the searchable cells.
double fixed_flops(const BackboneConfig& supernet, const env::EnvSpec& spec, const CostTable& table) {
    BackboneConfig probe = supernet;
    probe.kind = agent::BackboneKind::searched;
    probe.cell_ops.assign(table.size(), OpKind::conv_k3);
    double cells = 0.0;
    for (const auto& row : table) cells += row[0];
    return agent::network_cost(probe, spec).flops - cells;
}

}  // namespace

double expected_flops(const ArchParams& arch, const BackboneConfig& supernet, const env::EnvSpec& spec) {
    const CostTable table = agent::candidate_cost_table(supernet, spec.obs_shape);
    const auto probs = arch.probabilities();
    double total = fixed_flops(supernet, spec, table);
    for (std::size_t c = 0; c < table.size(); ++c) {
        for (std::size_t i = 0; i < kNumCandidateOps; ++i) total += probs[c][i] * table[c][i];
    }
    return total;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(Tensor param, double lr, double beta1, double beta2, double eps)
    : param_(std::move(param)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(param_.numel(), 0.0), v_(param_.numel(), 0.0) {}

void Adam::step() {
    if (!param_.has_grad()) return;
    ++t_;
    const auto grad = param_.grad();
    auto data = param_.mutable_data();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(grad[i])) throw trainer::TrainingError("non-finite architecture gradient");
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        data[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

Json ArchRecord::to_json() const {
    return {{"step", step}, {"probs", probs}, {"tau", tau}, {"expected_flops", expected_flops}};
}

agent::ForwardContext deterministic_context(const ArchParams& arch) {
    agent::ForwardContext ctx;
    auto weights = std::make_shared<std::vector<std::vector<double>>>(arch.tempered_weights());
    ctx.cell_weights = [weights](std::size_t cell) { return Tensor::from({kNumCandidateOps}, weights->at(cell)); };
    return ctx;
}

agent::ForwardContext one_hot_context(const std::vector<OpKind>& ops) {
    agent::ForwardContext ctx;
    ctx.cell_weights = [ops](std::size_t cell) {
        std::vector<double> w(kNumCandidateOps, 0.0);
        w[static_cast<std::size_t>(ops.at(cell))] = 1.0;
        return Tensor::from({kNumCandidateOps}, std::move(w));
    };
    return ctx;
}

namespace {

// Fresh noise per cell per forward pass, seeded by (update, forward, cell).
struct NoiseStream {
    std::uint64_t base = 0;
    std::size_t update = 0;
    std::size_t forward = 0;

    std::vector<double> draw(std::size_t cell) {
        if (cell == 0) ++forward;
        Rng rng(derive_seed(base, {update, forward, cell}));
        return sample_gumbel(kNumCandidateOps, rng);
    }
};

}  // namespace

SearchResult search(AgentNet& supernet, const env::EnvConfig& env_cfg, const SearchConfig& cfg,
                    const trainer::TrainConfig& train_cfg, const distill::DistillConfig& distill_cfg,
                    const AgentNet* teacher, const SearchHooks& hooks) {
    validate(cfg);
    trainer::validate(train_cfg);
    distill::validate(distill_cfg);
    if (supernet.config().kind != agent::BackboneKind::supernet) {
        throw ConfigError("search: the network must be a supernet");
    }
    if (distill::needs_teacher(distill_cfg.mode)) {
        if (teacher == nullptr) {
            throw ConfigError(std::string("search: distill mode ") + distill::mode_name(distill_cfg.mode) +
                              " requires a teacher");
        }
        distill::check_compatible(supernet, *teacher);
    }
    const env::EnvSpec spec = supernet.env_spec();
    const CostTable table = agent::candidate_cost_table(supernet.config(), spec.obs_shape);

    SearchResult result;
    result.arch = ArchParams::zeros(supernet.num_cells(), cfg.tau0);
    ArchParams& arch = result.arch;
    Adam adam(arch.logits, cfg.arch_lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

    auto noise = std::make_shared<NoiseStream>();
    noise->base = derive_seed(train_cfg.seed, {5});
    auto gumbel_ctx = [&arch, noise] {
        agent::ForwardContext ctx;
        ctx.cell_weights = [&arch, noise](std::size_t cell) {
            const auto g = noise->draw(cell);
            return gumbel_softmax(arch.row(cell), arch.tau, g);
        };
        return ctx;
    };

    const double interval = static_cast<double>(train_cfg.total_steps) / static_cast<double>(std::max<std::size_t>(cfg.anneal_events, 1));
    std::size_t events = 0;
    const bool bi = cfg.optimization == Optimization::bi_level;

    trainer::TrainHooks th;
    th.workers = hooks.workers;
    th.act_context = gumbel_ctx;
    th.eval_context = [&arch] { return deterministic_context(arch); };
    th.tau = [&arch] { return arch.tau; };
    th.update_weights = [bi](std::size_t update) { return !bi || update % 2 == 0; };
    th.after_update = [&](std::size_t steps, std::size_t update) {
        if (!bi || update % 2 == 1) adam.step();
        arch.logits.zero_grad();
        while (events < cfg.anneal_events && static_cast<double>(steps) >= interval * static_cast<double>(events + 1)) {
            arch.tau *= cfg.tau_decay;
            ++events;
        }
        noise->update = update + 1;
        noise->forward = 0;
    };
    th.on_eval = [&](const Json& j) {
        ArchRecord rec{j.at("step").get<std::size_t>(), arch.probabilities(), arch.tau,
                       expected_flops(arch, supernet.config(), spec)};
        result.history.push_back(rec);
        if (hooks.on_arch) hooks.on_arch(rec);
        if (hooks.on_eval) hooks.on_eval(j);
    };

    const bool bn = supernet.config().batch_norm;
    auto loss = [&](const trainer::Rollout& r) {
        agent::ForwardContext ctx = gumbel_ctx();
        ctx.training = bn;
        trainer::LossTerms terms = distill::loss_terms(r, supernet, teacher, distill_cfg, train_cfg, ctx);
        trainer::LossWeights w = distill::effective_weights(distill_cfg);
        terms.cost = cost_loss(arch.logits, table);
        w.cost = cfg.lambda;
        return trainer::combine(terms, w);
    };
    result.train = trainer::run_training(supernet, env_cfg, train_cfg,
                                         distill::student_params(supernet, distill_cfg, train_cfg), loss, th);
    return result;
}

// ---------------------------------------------------------------------------
// Derivation and retraining
// ---------------------------------------------------------------------------

std::vector<OpKind> argmax_ops(const Tensor& logits, const CostTable& table) {
    if (logits.rank() != 2 || logits.dim(0) != table.size() || logits.dim(1) != kNumCandidateOps) {
        throw ad::ShapeError("argmax_ops", logits.shape(), ad::Shape{table.size(), kNumCandidateOps});
    }
    std::vector<OpKind> ops;
    for (std::size_t c = 0; c < table.size(); ++c) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < kNumCandidateOps; ++i) {
            const double a = logits.at(c * kNumCandidateOps + i), b = logits.at(c * kNumCandidateOps + best);
            if (a > b || (a == b && table[c][i] < table[c][best])) best = i;
        }
        ops.push_back(static_cast<OpKind>(best));
    }
    return ops;
}

BackboneConfig derive(const ArchParams& arch, const BackboneConfig& supernet, const env::EnvSpec& spec) {
    const CostTable table = agent::candidate_cost_table(supernet, spec.obs_shape);
    BackboneConfig out = supernet;
    out.kind = agent::BackboneKind::searched;
    out.cell_ops = argmax_ops(arch.logits, table);
    return out;
}

Json RetrainResult::summary() const { return {{"score", score}, {"mflops", mflops}, {"params", params}}; }

RetrainResult retrain_derived(const BackboneConfig& derived, const env::EnvConfig& env_cfg, const AgentNet* teacher,
                              const trainer::TrainConfig& train_cfg, const distill::DistillConfig& distill_cfg,
                              std::uint64_t init_seed, const trainer::TrainHooks& hooks) {
    const env::EnvSpec spec = env::make_env(env_cfg)->spec();
    AgentNet net = agent::build_agent(derived, spec, init_seed);
    trainer::TrainResult tr = distill::train_with_distillation(net, teacher, env_cfg, train_cfg, distill_cfg, hooks);
    const agent::NetworkCost cost = agent::network_cost(derived, spec);
    RetrainResult r{std::move(net), std::move(tr), 0.0, cost.flops / 1e6, cost.params};
    r.score = r.train.final_score;
    return r;
}

}  // namespace a2d::nas
