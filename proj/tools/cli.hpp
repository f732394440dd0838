// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: strict JSON run configs, flag > env > file >
// default precedence, one run directory per invocation.

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "a2d/agent/backbone.hpp"
#include "a2d/common/json_util.hpp"
#include "a2d/distill/distill.hpp"
#include "a2d/env/env.hpp"
#include "a2d/nas/nas.hpp"
#include "a2d/trainer/trainer.hpp"

namespace a2d::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,      // anything unclassified
    kConfigError = 2,  // usage, validation, incompatible inputs
    kIoError = 3,      // files, checkpoints, records
    kTrainingError = 4,  // non-finite loss or gradient
    kEnvError = 5,
};

struct RunConfig {
    std::uint64_t seed = 0;
    env::EnvConfig env = env::GridConfig{};
    agent::BackboneConfig model = agent::preset("res-m");
    trainer::TrainConfig train;
    distill::DistillConfig distill;
    nas::SearchConfig search;
    std::size_t seeds = 5;  // ablations use seed, seed+1, ...
    std::vector<std::string> models = agent::ladder_names();
    std::vector<std::string> students = {"tiny", "res-s"};
    std::vector<std::string> modes = {"none", "actor_only", "actor_plus_reuse_critic", "proposed"};
    std::vector<double> lambdas = {0.0, 0.1, 0.5};
    std::string baseline = "res-m";
    std::string checkpoint;  // eval
    std::string run;         // derive / retrain source run
    std::string derived;     // retrain: derived_arch.json
};

Json to_json(const RunConfig& c);
/// Strict: unknown keys and invalid values are all reported in one ConfigError.
RunConfig run_config_from_json(const Json& j);

/// Where each resolved setting came from, for the startup log.
using Provenance = std::map<std::string, std::string>;

/// Runs one invocation; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace a2d::cli
