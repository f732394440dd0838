// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "a2d/agent/agent.hpp"
#include "a2d/autodiff/checkpoint.hpp"
#include "a2d/env/env_json.hpp"
#include "a2d/metrics/metrics.hpp"

namespace a2d::cli {

namespace fs = std::filesystem;
using metrics::RunDir;
using metrics::RunRecord;

// ---------------------------------------------------------------------------
// RunConfig <-> JSON
// ---------------------------------------------------------------------------

Json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"env", env::env_config_to_json(c.env)},
            {"model", agent::backbone_to_json(c.model)},
            {"train", trainer::to_json(c.train)},
            {"distill", distill::to_json(c.distill)},
            {"search", nas::to_json(c.search)},
            {"seeds", c.seeds},
            {"models", c.models},
            {"students", c.students},
            {"modes", c.modes},
            {"lambdas", c.lambdas},
            {"baseline", c.baseline},
            {"checkpoint", c.checkpoint},
            {"run", c.run},
            {"derived", c.derived}};
}

RunConfig run_config_from_json(const Json& j) {
    Issues issues;
    RunConfig c;
    reject_unknown_keys(j,
                        {"seed", "env", "model", "train", "distill", "search", "seeds", "models", "students", "modes",
                         "lambdas", "baseline", "checkpoint", "run", "derived"},
                        "config", issues);
    read_field(j, "seed", c.seed, "config", issues);
    if (j.contains("env")) c.env = env::env_config_from_json(j.at("env"), issues, "env");
    if (j.contains("model")) c.model = agent::backbone_from_json(j.at("model"), issues, "model");
    if (j.contains("train")) c.train = trainer::train_config_from_json(j.at("train"), issues, "train");
    if (j.contains("distill")) c.distill = distill::distill_config_from_json(j.at("distill"), issues, "distill");
    if (j.contains("search")) c.search = nas::search_config_from_json(j.at("search"), issues, "search");
    read_field(j, "seeds", c.seeds, "config", issues);
    read_field(j, "models", c.models, "config", issues);
    read_field(j, "students", c.students, "config", issues);
    read_field(j, "modes", c.modes, "config", issues);
    read_field(j, "lambdas", c.lambdas, "config", issues);
    read_field(j, "baseline", c.baseline, "config", issues);
    read_field(j, "checkpoint", c.checkpoint, "config", issues);
    read_field(j, "run", c.run, "config", issues);
    read_field(j, "derived", c.derived, "config", issues);
    if (c.seeds == 0) issues.add("config.seeds: must be >= 1");
    for (const auto& name : c.models) {
        try {
            (void)agent::preset(name);
        } catch (const std::exception&) {
            issues.add("config.models: unknown preset '" + name + "'");
        }
    }
    for (const auto& name : c.students) {
        try {
            (void)agent::preset(name);
        } catch (const std::exception&) {
            issues.add("config.students: unknown preset '" + name + "'");
        }
    }
    for (const auto& m : c.modes) {
        try {
            (void)distill::parse_mode(m);
        } catch (const ConfigError& e) {
            for (const auto& s : e.issues()) issues.add(s);
        }
    }
    for (double l : c.lambdas) {
        if (!(l >= 0.0)) issues.add("config.lambdas: values must be >= 0");
    }
    try {
        (void)agent::preset(c.baseline);
    } catch (const std::exception&) {
        issues.add("config.baseline: unknown preset '" + c.baseline + "'");
    }
    issues.throw_if_any();
    c.train.seed = c.seed;
    return c;
}

namespace {

// ---------------------------------------------------------------------------
// Resolution: flag > env > file > default
// ---------------------------------------------------------------------------

struct Options {
    std::string command;
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps, seeds, episodes;
    std::optional<std::string> model, mode, teacher, optimization, checkpoint, run, derived;
    std::optional<double> lambda;
    std::string out;
    std::string run_id;
    std::size_t workers = 1;
};

// Objects merged key by key; everything else is replaced wholesale.
const std::vector<std::string> kMergedSections{"train", "distill", "search"};

void overlay(Json& base, const Json& file, Provenance& prov, const std::string& source) {
    for (auto it = file.begin(); it != file.end(); ++it) {
        const bool merge = std::find(kMergedSections.begin(), kMergedSections.end(), it.key()) != kMergedSections.end();
        if (merge && it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            for (auto in = it.value().begin(); in != it.value().end(); ++in) {
                base[it.key()][in.key()] = in.value();
                prov[it.key() + "." + in.key()] = source;
            }
        } else {
            base[it.key()] = it.value();
            prov[it.key()] = source;
        }
    }
}

struct Resolved {
    RunConfig cfg;
    Provenance prov;
    fs::path out_root;
};

Resolved resolve(const Options& o) {
    Resolved r;
    Json j = to_json(RunConfig{});
    if (!o.config_file.empty()) {
        Json file;
        try {
            file = metrics::read_json(o.config_file);
        } catch (const metrics::MetricsError& e) {
            throw ConfigError(std::string("--config: ") + e.what());
        }
        if (!file.is_object()) throw ConfigError("--config: top level must be a JSON object");
        overlay(j, file, r.prov, "file");
    }
    if (const char* s = std::getenv("A2D_SEED")) {
        try {
            j["seed"] = std::stoull(s);
        } catch (const std::exception&) {
            throw ConfigError(std::string("A2D_SEED: not an unsigned integer: '") + s + "'");
        }
        r.prov["seed"] = "env A2D_SEED";
    }
    auto flag = [&](const std::string& key, const Json& value) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) {
            j[key] = value;
        } else {
            j[key.substr(0, dot)][key.substr(dot + 1)] = value;
        }
        r.prov[key] = "flag";
    };
    if (o.seed) flag("seed", *o.seed);
    if (o.steps) flag("train.total_steps", *o.steps);
    if (o.episodes) flag("train.eval_episodes", *o.episodes);
    if (o.seeds) flag("seeds", *o.seeds);
    if (o.model) flag("model", *o.model);
    if (o.mode) flag("distill.mode", *o.mode);
    if (o.teacher) flag("distill.teacher", *o.teacher);
    if (o.optimization) flag("search.optimization", *o.optimization);
    if (o.lambda) flag("search.lambda", *o.lambda);
    if (o.checkpoint) flag("checkpoint", *o.checkpoint);
    if (o.run) flag("run", *o.run);
    if (o.derived) flag("derived", *o.derived);
    r.cfg = run_config_from_json(j);
    if (!o.out.empty()) {
        r.out_root = o.out;
    } else if (const char* env_out = std::getenv("A2D_OUT")) {
        r.out_root = env_out;
    } else {
        r.out_root = ".";
    }
    return r;
}

void log_resolution(const Resolved& r, const std::string& command, std::ostream& err) {
    err << "[a2d] " << command << ": resolved configuration (flag > env > file > default)\n";
    for (const auto& [key, source] : r.prov) {
        Json v = to_json(r.cfg);
        const auto dot = key.find('.');
        const Json& shown = dot == std::string::npos ? v[key] : v[key.substr(0, dot)][key.substr(dot + 1)];
        err << "[a2d]   " << key << " = " << shown.dump() << "  (" << source << ")\n";
    }
    err << "[a2d]   all other settings: default\n";
    err << "[a2d]   output root: " << r.out_root.string() << "\n";
}

// ---------------------------------------------------------------------------
// Helpers shared by the commands
// ---------------------------------------------------------------------------

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string default_run_id(const std::string& command, const RunConfig& cfg) {
    Json id = to_json(cfg);
    id["command"] = command;
    return command + "-" + metrics::config_hash(id).substr(0, 10) + "-s" + std::to_string(cfg.seed);
}

env::EnvSpec spec_of(const RunConfig& cfg) { return env::make_env(cfg.env)->spec(); }

std::string task_name(const RunConfig& cfg) {
    return env::env_name(cfg.env) + "-" + metrics::config_hash(env::env_config_to_json(cfg.env)).substr(0, 6);
}

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, {11}); }

std::optional<agent::AgentNet> load_teacher(const distill::DistillConfig& d) {
    if (!distill::needs_teacher(d.mode)) return std::nullopt;
    if (d.teacher.empty()) {
        throw ConfigError(std::string("distill.teacher: required for mode ") + distill::mode_name(d.mode));
    }
    return agent::load_agent(d.teacher);
}

RunRecord make_record(const std::string& run_id, const RunConfig& cfg, std::uint64_t seed,
                      const trainer::TrainResult& tr, const agent::BackboneConfig& model, double wall,
                      std::map<std::string, std::string> labels) {
    RunRecord rec;
    rec.run_id = run_id;
    rec.config_hash = metrics::config_hash(to_json(cfg));
    rec.seed = seed;
    rec.labels = std::move(labels);
    for (const auto& e : tr.evals) rec.evals.push_back({e.step, e.mean_score});
    const agent::NetworkCost cost = agent::network_cost(model, spec_of(cfg));
    rec.final = {tr.final_score, cost.flops / 1e6, cost.params};
    rec.wall_clock_s = wall;
    return rec;
}

trainer::TrainHooks stream_hooks(metrics::JsonlWriter& w, const Json& tags, std::size_t workers) {
    trainer::TrainHooks h;
    h.workers = workers;
    h.on_eval = [&w, tags](const Json& j) {
        Json line = j;
        for (auto it = tags.begin(); it != tags.end(); ++it) line[it.key()] = it.value();
        w.write(line);
    };
    return h;
}

struct Context {
    Options opt;
    Resolved res;
    RunDir dir;
    std::string run_id;
    std::ostream& out;
    std::ostream& err;
};

// One distillation (or plain, mode none) training run of `model`.
RunRecord train_one(Context& ctx, const agent::BackboneConfig& model, const std::string& model_name,
                    const distill::DistillConfig& dcfg, const agent::AgentNet* teacher, std::uint64_t seed,
                    metrics::JsonlWriter& stream, const fs::path& ckpt_dir, std::map<std::string, std::string> labels) {
    const RunConfig& cfg = ctx.res.cfg;
    trainer::TrainConfig tc = cfg.train;
    tc.seed = seed;
    agent::AgentNet net = agent::build_agent(model, spec_of(cfg), init_seed(seed));
    trainer::TrainHooks hooks = stream_hooks(stream, {{"model", model_name}, {"seed", seed}, {"mode", distill::mode_name(dcfg.mode)}}, ctx.opt.workers);
    hooks.checkpoint_dir = ckpt_dir;
    const auto t0 = std::chrono::steady_clock::now();
    const trainer::TrainResult tr = distill::train_with_distillation(net, teacher, cfg.env, tc, dcfg, hooks);
    labels["task"] = task_name(cfg);
    labels["model"] = model_name;
    labels["mode"] = distill::mode_name(dcfg.mode);
    return make_record(ctx.run_id, cfg, seed, tr, model, seconds_since(t0), std::move(labels));
}

void finish_records(Context& ctx, const std::vector<RunRecord>& records) {
    metrics::write_jsonl(ctx.dir.root / "records.jsonl", records);
    if (records.size() == 1) metrics::write_json(ctx.dir.record(), metrics::to_json(records.front()));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_train(Context& ctx, bool with_distill) {
    const RunConfig& cfg = ctx.res.cfg;
    distill::DistillConfig d = cfg.distill;
    if (!with_distill) d.mode = distill::DistillMode::none;
    distill::validate(d, true);
    const auto teacher = load_teacher(d);
    metrics::JsonlWriter stream(ctx.dir.metrics());
    std::string name = cfg.model.kind == agent::BackboneKind::searched ? "searched" : "custom";
    for (const auto& p : {"tiny", "res-s", "res-m", "res-l", "mlp"}) {
        if (agent::preset(p) == cfg.model) name = p;
    }
    RunRecord rec = train_one(ctx, cfg.model, name, d, teacher ? &*teacher : nullptr, cfg.seed, stream,
                              ctx.dir.checkpoints(), {});
    finish_records(ctx, {rec});
    ctx.out << "final score " << rec.final.score << "  MFLOPs " << rec.final.mflops << "  params " << rec.final.params
            << "  run " << ctx.dir.root.string() << "\n";
    return kOk;
}

int cmd_eval(Context& ctx) {
    const RunConfig& cfg = ctx.res.cfg;
    if (cfg.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    const agent::AgentNet net = agent::load_agent(cfg.checkpoint);
    if (net.config().kind == agent::BackboneKind::supernet) {
        throw ConfigError("eval: supernet checkpoints need architecture weights; derive and retrain first");
    }
    const trainer::EvalResult ev = trainer::evaluate(net, cfg.env, cfg.train.eval_episodes, cfg.train.eval_null_op_max,
                                                     derive_seed(cfg.seed, {3}), {}, ctx.opt.workers);
    const agent::NetworkCost cost = agent::network_cost(net.config(), net.env_spec());
    const Json result{{"checkpoint", cfg.checkpoint}, {"episodes", ev.returns.size()}, {"mean_score", ev.mean},
                      {"std", ev.stddev}, {"returns", ev.returns}, {"mflops", cost.flops / 1e6},
                      {"params", cost.params}};
    metrics::write_json(ctx.dir.root / "eval.json", result);
    ctx.out << "mean score " << ev.mean << " +- " << ev.stddev << " over " << ev.returns.size() << " episodes\n";
    return kOk;
}

Json arch_document(const nas::ArchParams& arch, const agent::BackboneConfig& supernet, const env::EnvSpec& spec) {
    return {{"logits", std::vector<double>(arch.logits.data().begin(), arch.logits.data().end())},
            {"num_cells", arch.num_cells()},
            {"tau", arch.tau},
            {"supernet", agent::backbone_to_json(supernet)},
            {"env_spec", agent::env_spec_to_json(spec)}};
}

Json derived_document(const agent::BackboneConfig& derived, const env::EnvSpec& spec) {
    const agent::NetworkCost cost = agent::network_cost(derived, spec);
    return {{"backbone", agent::backbone_to_json(derived)}, {"mflops", cost.flops / 1e6}, {"params", cost.params}};
}

struct SearchOutcome {
    agent::BackboneConfig derived;
    nas::SearchResult result;
};

SearchOutcome search_one(Context& ctx, const nas::SearchConfig& scfg, const agent::AgentNet* teacher,
                         std::uint64_t seed, const RunDir& dir) {
    const RunConfig& cfg = ctx.res.cfg;
    trainer::TrainConfig tc = cfg.train;
    tc.seed = seed;
    const env::EnvSpec spec = spec_of(cfg);
    agent::BackboneConfig super_cfg = agent::preset(scfg.supernet);
    agent::AgentNet supernet = agent::build_agent(super_cfg, spec, init_seed(seed));
    metrics::JsonlWriter stream(dir.metrics());
    metrics::JsonlWriter history(dir.root / "arch_history.jsonl");
    nas::SearchHooks hooks;
    hooks.workers = ctx.opt.workers;
    hooks.on_eval = [&](const Json& j) { stream.write(j); };
    hooks.on_arch = [&](const nas::ArchRecord& r) { history.write(r.to_json()); };
    SearchOutcome o{{}, nas::search(supernet, cfg.env, scfg, tc, cfg.distill, teacher, hooks)};
    o.derived = nas::derive(o.result.arch, super_cfg, spec);
    metrics::write_json(dir.root / "arch.json", arch_document(o.result.arch, super_cfg, spec));
    metrics::write_json(dir.derived_arch(), derived_document(o.derived, spec));
    agent::save_agent(supernet, dir.checkpoints() / "supernet.ckpt");
    return o;
}

int cmd_search(Context& ctx) {
    const RunConfig& cfg = ctx.res.cfg;
    distill::validate(cfg.distill, true);
    const auto teacher = load_teacher(cfg.distill);
    const SearchOutcome o = search_one(ctx, cfg.search, teacher ? &*teacher : nullptr, cfg.seed, ctx.dir);
    const agent::NetworkCost cost = agent::network_cost(o.derived, spec_of(cfg));
    ctx.out << "search final score " << o.result.train.final_score << "  tau " << o.result.arch.tau << "\nderived:";
    for (auto op : o.derived.cell_ops) ctx.out << " " << agent::to_string(op);
    ctx.out << "\nMFLOPs " << cost.flops / 1e6 << "  params " << cost.params << "  -> "
            << ctx.dir.derived_arch().string() << "\n";
    return kOk;
}

fs::path source_run(const Context& ctx) { return ctx.res.out_root / "runs" / ctx.res.cfg.run; }

int cmd_derive(Context& ctx) {
    if (ctx.res.cfg.run.empty()) throw ConfigError("derive: --run is required");
    const fs::path src = source_run(ctx);
    const Json doc = metrics::read_json(src / "arch.json");
    Issues issues;
    const agent::BackboneConfig super_cfg = agent::backbone_from_json(doc.at("supernet"), issues, "arch.supernet");
    issues.throw_if_any();
    const env::EnvSpec spec = agent::env_spec_from_json(doc.at("env_spec"));
    const auto logits = doc.at("logits").get<std::vector<double>>();
    nas::ArchParams arch;
    arch.logits = ad::Tensor::from({doc.at("num_cells").get<std::size_t>(), agent::kNumCandidateOps}, logits);
    arch.tau = doc.at("tau").get<double>();
    const agent::BackboneConfig derived = nas::derive(arch, super_cfg, spec);
    const Json out = derived_document(derived, spec);
    metrics::write_json(src / "derived_arch.json", out);
    metrics::write_json(ctx.dir.derived_arch(), out);
    ctx.out << out.dump(2) << "\n";
    return kOk;
}

agent::BackboneConfig read_derived(const fs::path& file) {
    const Json doc = metrics::read_json(file);
    Issues issues;
    agent::BackboneConfig b = agent::backbone_from_json(doc.contains("backbone") ? doc.at("backbone") : doc, issues,
                                                        "derived");
    issues.throw_if_any();
    if (b.kind != agent::BackboneKind::searched) throw ConfigError("derived: backbone kind must be 'searched'");
    return b;
}

int cmd_retrain(Context& ctx) {
    const RunConfig& cfg = ctx.res.cfg;
    fs::path file;
    if (!cfg.derived.empty()) {
        file = cfg.derived;
    } else if (!cfg.run.empty()) {
        file = source_run(ctx) / "derived_arch.json";
    } else {
        throw ConfigError("retrain: --derived or --run is required");
    }
    const agent::BackboneConfig derived = read_derived(file);
    distill::validate(cfg.distill, true);
    const auto teacher = load_teacher(cfg.distill);
    metrics::JsonlWriter stream(ctx.dir.metrics());
    RunRecord rec = train_one(ctx, derived, "searched", cfg.distill, teacher ? &*teacher : nullptr, cfg.seed, stream,
                              ctx.dir.checkpoints(), {{"kind", "searched"}});
    finish_records(ctx, {rec});
    ctx.out << "retrained score " << rec.final.score << "  MFLOPs " << rec.final.mflops << "  params "
            << rec.final.params << "\n";
    return kOk;
}

std::vector<std::uint64_t> seed_list(const RunConfig& cfg) {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < cfg.seeds; ++i) s.push_back(cfg.seed + i);
    return s;
}

int cmd_ablate_scaling(Context& ctx) {
    const RunConfig& cfg = ctx.res.cfg;
    distill::DistillConfig plain = cfg.distill;
    plain.mode = distill::DistillMode::none;
    metrics::JsonlWriter stream(ctx.dir.metrics());
    std::vector<RunRecord> records;
    for (const auto& name : cfg.models) {
        for (auto seed : seed_list(cfg)) {
            records.push_back(train_one(ctx, agent::preset(name), name, plain, nullptr, seed, stream, {}, {}));
            ctx.err << "[a2d] " << name << " seed " << seed << ": " << records.back().final.score << "\n";
        }
    }
    finish_records(ctx, records);
    const auto rows = metrics::aggregate(records, {"model"});
    metrics::write_text(ctx.dir.root / "summary.csv", metrics::summary_csv({"model"}, rows));
    metrics::write_text(ctx.dir.root / "tradeoff.csv", metrics::tradeoff_report(records).csv());
    ctx.out << metrics::summary_csv({"model"}, rows);
    return kOk;
}

int cmd_ablate_distill(Context& ctx) {
    const RunConfig& cfg = ctx.res.cfg;
    std::optional<agent::AgentNet> teacher;
    metrics::JsonlWriter stream(ctx.dir.metrics());
    std::vector<RunRecord> records;
    for (const auto& mode_str : cfg.modes) {
        distill::DistillConfig d = cfg.distill;
        d.mode = distill::parse_mode(mode_str);
        if (distill::needs_teacher(d.mode) && !teacher) teacher = load_teacher(d);
        for (const auto& student : cfg.students) {
            for (auto seed : seed_list(cfg)) {
                records.push_back(train_one(ctx, agent::preset(student), student, d,
                                            teacher ? &*teacher : nullptr, seed, stream, {}, {}));
                ctx.err << "[a2d] " << mode_str << " " << student << " seed " << seed << ": "
                        << records.back().final.score << "\n";
            }
        }
    }
    finish_records(ctx, records);
    const auto rows = metrics::aggregate(records, {"mode", "model"});
    metrics::write_text(ctx.dir.root / "summary.csv", metrics::summary_csv({"mode", "model"}, rows));
    // rows: modes, columns: students
    std::string matrix = "mode";
    for (const auto& s : cfg.students) matrix += "," + s + "_mean," + s + "_std";
    matrix += "\n";
    for (const auto& mode_str : cfg.modes) {
        matrix += mode_str;
        for (const auto& s : cfg.students) {
            for (const auto& r : rows) {
                if (r.key[0] == mode_str && r.key[1] == s) {
                    matrix += "," + std::to_string(r.mean) + "," + std::to_string(r.stddev);
                }
            }
        }
        matrix += "\n";
    }
    metrics::write_text(ctx.dir.root / "score_matrix.csv", matrix);
    ctx.out << matrix;
    return kOk;
}

int cmd_sweep_lambda(Context& ctx) {
    const RunConfig& cfg = ctx.res.cfg;
    distill::validate(cfg.distill, true);
    const auto teacher = load_teacher(cfg.distill);
    const agent::AgentNet* tp = teacher ? &*teacher : nullptr;
    const env::EnvSpec spec = spec_of(cfg);
    metrics::JsonlWriter stream(ctx.dir.metrics());
    std::vector<RunRecord> records;
    std::string lambda_csv = "lambda,seed,search_score,derived_mflops,retrained_score\n";
    for (double lambda : cfg.lambdas) {
        nas::SearchConfig scfg = cfg.search;
        scfg.lambda = lambda;
        for (auto seed : seed_list(cfg)) {
            std::ostringstream sub;
            sub << "lambda_" << lambda << "_s" << seed;
            RunDir dir{ctx.dir.root / sub.str()};
            fs::create_directories(dir.checkpoints());
            const SearchOutcome o = search_one(ctx, scfg, tp, seed, dir);
            std::ostringstream model;
            model << "searched(lambda=" << lambda << ")";
            RunRecord rec = train_one(ctx, o.derived, model.str(), cfg.distill, tp, seed, stream, {},
                                      {{"kind", "searched"}, {"lambda", std::to_string(lambda)}});
            lambda_csv += std::to_string(lambda) + "," + std::to_string(seed) + "," +
                          std::to_string(o.result.train.final_score) + "," + std::to_string(rec.final.mflops) + "," +
                          std::to_string(rec.final.score) + "\n";
            ctx.err << "[a2d] lambda " << lambda << " seed " << seed << ": MFLOPs " << rec.final.mflops << " score "
                    << rec.final.score << "\n";
            records.push_back(std::move(rec));
        }
    }
    for (auto seed : seed_list(cfg)) {
        records.push_back(
            train_one(ctx, agent::preset(cfg.baseline), cfg.baseline, cfg.distill, tp, seed, stream, {}, {}));
    }
    finish_records(ctx, records);
    metrics::write_text(ctx.dir.root / "lambda.csv", lambda_csv);
    const auto report = metrics::tradeoff_report(records, std::nullopt, cfg.baseline);
    metrics::write_text(ctx.dir.root / "tradeoff.csv", report.csv());
    ctx.out << report.csv();
    (void)spec;
    return kOk;
}

int dispatch(Context& ctx) {
    const std::string& c = ctx.opt.command;
    if (c == "train") return cmd_train(ctx, false);
    if (c == "distill") return cmd_train(ctx, true);
    if (c == "eval") return cmd_eval(ctx);
    if (c == "search") return cmd_search(ctx);
    if (c == "derive") return cmd_derive(ctx);
    if (c == "retrain") return cmd_retrain(ctx);
    if (c == "ablate-scaling") return cmd_ablate_scaling(ctx);
    if (c == "ablate-distill") return cmd_ablate_distill(ctx);
    if (c == "sweep-lambda") return cmd_sweep_lambda(ctx);
    throw ConfigError("unknown command '" + c + "'");
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config_file, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run seed (overrides A2D_SEED and the file)");
    sub->add_option("--out", o.out, "output root; runs go to <out>/runs/<run_id> (default: $A2D_OUT or .)");
    sub->add_option("--run-id", o.run_id, "run directory name (default: derived from command, config and seed)");
    sub->add_option("--workers", o.workers, "evaluation threads; 1 is the reference mode")->check(CLI::PositiveNumber);
    sub->add_option("--steps", o.steps, "train.total_steps");
    sub->add_option("--episodes", o.episodes, "train.eval_episodes");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"a2d: actor-critic distillation and differentiable architecture search on toy tasks", "a2d"};
    app.require_subcommand(1);
    Options o;
    struct Spec {
        const char* name;
        const char* help;
    };
    const std::vector<Spec> commands{
        {"train", "train an agent with plain actor-critic"},
        {"eval", "evaluate a checkpoint"},
        {"distill", "train a student under a frozen teacher"},
        {"search", "run the supernet architecture search"},
        {"derive", "derive the standalone architecture from a search run"},
        {"retrain", "train a derived architecture from scratch with distillation"},
        {"ablate-scaling", "train the model-size ladder across seeds"},
        {"ablate-distill", "distillation modes x student sizes x seeds score matrix"},
        {"sweep-lambda", "search, derive and retrain across cost weights"},
    };
    for (const auto& spec : commands) {
        CLI::App* sub = app.add_subcommand(spec.name, spec.help);
        add_common(sub, o);
        const std::string name = spec.name;
        if (name == "train" || name == "distill" || name == "ablate-scaling") {
            sub->add_option("--model", o.model, "backbone preset");
        }
        if (name == "distill" || name == "search" || name == "retrain" || name == "ablate-distill" ||
            name == "sweep-lambda") {
            sub->add_option("--teacher", o.teacher, "teacher checkpoint");
            sub->add_option("--distill", o.mode, "none | actor_only | actor_plus_reuse_critic | proposed");
        }
        if (name == "search" || name == "sweep-lambda") {
            sub->add_option("--optimization", o.optimization, "one_level | bi_level");
        }
        if (name == "search") sub->add_option("--lambda", o.lambda, "cost weight");
        if (name == "eval") sub->add_option("--checkpoint", o.checkpoint, "agent checkpoint");
        if (name == "derive" || name == "retrain") sub->add_option("--run", o.run, "source search run id");
        if (name == "retrain") sub->add_option("--derived", o.derived, "derived_arch.json");
        if (name == "ablate-scaling" || name == "ablate-distill" || name == "sweep-lambda") {
            sub->add_option("--seeds", o.seeds, "number of seeds");
        }
        sub->callback([&o, name] { o.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        Resolved res = resolve(o);
        const std::string run_id = o.run_id.empty() ? default_run_id(o.command, res.cfg) : o.run_id;
        log_resolution(res, o.command, err);
        RunDir dir = RunDir::create(res.out_root, run_id);
        metrics::write_json(dir.config(), to_json(res.cfg));
        err << "[a2d] run directory " << dir.root.string() << "\n";
        Context ctx{o, std::move(res), dir, run_id, out, err};
        return dispatch(ctx);
    } catch (const ConfigError& e) {
        err << "error: invalid configuration\n";
        for (const auto& issue : e.issues()) err << "  - " << issue << "\n";
        return kConfigError;
    } catch (const ad::ShapeError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ad::CheckpointError& e) {
        err << "error: checkpoint: " << e.what() << "\n";
        return kIoError;
    } catch (const metrics::MetricsError& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const trainer::TrainingError& e) {
        err << "error: training failed: " << e.what() << "\n";
        return kTrainingError;
    } catch (const env::EnvError& e) {
        err << "error: environment: " << e.what() << "\n";
        return kEnvError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace a2d::cli
