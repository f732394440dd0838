// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace a2d {

/// Configuration validation failure carrying every violation found.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> issues);
    explicit ConfigError(const std::string& issue) : ConfigError(std::vector<std::string>{issue}) {}
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// Collects violations so a whole document can be checked in one pass.
class Issues {
public:
    void add(std::string issue) { items_.push_back(std::move(issue)); }
    bool empty() const { return items_.empty(); }
    const std::vector<std::string>& items() const { return items_; }
    void throw_if_any() const {
        if (!items_.empty()) throw ConfigError(items_);
    }

private:
    std::vector<std::string> items_;
};

}  // namespace a2d
