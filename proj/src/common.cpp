// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/common/config_error.hpp"

namespace a2d {

namespace {
std::string join_issues(const std::vector<std::string>& issues) {
    std::string msg = "invalid configuration:";
    for (const auto& i : issues) msg += "\n  - " + i;
    return msg;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::invalid_argument(join_issues(issues)), issues_(std::move(issues)) {}

}  // namespace a2d
