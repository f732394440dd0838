// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary weight container: parameter path -> (shape, float64 data),
// plus a free-form metadata string (JSON by convention). Values are stored as
// raw little-endian IEEE-754 bits, so a save/load round trip is bit-exact.
//
// Layout (all integers little-endian):
//   "A2DCKPT\0" | u32 version | u64 meta_len | meta bytes | u64 count |
//   count x { u32 path_len | path | u32 rank | rank x u64 dim | numel x f64 }

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2d/autodiff/tensor.hpp"

namespace a2d::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedArray {
    std::string path;
    Shape shape;
    std::vector<double> data;
};

struct Checkpoint {
    std::string metadata;
    std::vector<NamedArray> entries;

    const NamedArray* find(const std::string& path) const;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace a2d::ad
