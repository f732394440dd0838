// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Strict JSON field readers: unknown keys and type mismatches are recorded as
// issues instead of throwing, so a loader can report every problem at once.

#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "a2d/common/config_error.hpp"
#include "json.hpp"

namespace a2d {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where,
                                Issues& issues) {
    if (!j.is_object()) {
        issues.add(where + ": expected an object");
        return;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (auto a : allowed) known = known || it.key() == a;
        if (!known) issues.add(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read_field(const Json& j, const char* key, T& out, const std::string& where, Issues& issues) {
    if (!j.is_object() || !j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        issues.add(where + "." + key + ": " + e.what());
    }
}

}  // namespace a2d
