// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run records, JSONL/CSV persistence, multi-seed aggregation and the
// score-versus-FLOPs trade-off report.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2d/common/json_util.hpp"

namespace a2d::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 16 hex digits of FNV-1a over the canonical (key-sorted) dump.
std::string config_hash(const Json& config);

struct EvalEntry {
    std::size_t step = 0;
    double mean_score = 0.0;
    bool operator==(const EvalEntry&) const = default;
};

struct FinalEntry {
    double score = 0.0;
    double mflops = 0.0;
    std::size_t params = 0;
    bool operator==(const FinalEntry&) const = default;
};

struct RunRecord {
    std::string run_id;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> labels;  // e.g. task, model, mode
    std::vector<EvalEntry> evals;
    FinalEntry final;
    double wall_clock_s = 0.0;

    bool operator==(const RunRecord&) const = default;
};

/// Throws MetricsError when eval steps are not strictly increasing.
void validate(const RunRecord& r);
Json to_json(const RunRecord& r);
RunRecord record_from_json(const Json& j);

void write_jsonl(const std::filesystem::path& file, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_jsonl(const std::filesystem::path& file);

/// Append-only JSONL stream; each line is flushed as written.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& file, bool truncate = true);
    void write(const Json& j);

private:
    std::ofstream out_;
};

struct SummaryRow {
    std::vector<std::string> key;
    std::size_t count = 0;
    double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;  // population std
};

/// Groups final scores by the given labels. Throws MetricsError on no
/// records or a record missing a group label.
std::vector<SummaryRow> aggregate(const std::vector<RunRecord>& records, const std::vector<std::string>& group_keys);
std::string summary_csv(const std::vector<std::string>& group_keys, const std::vector<SummaryRow>& rows);

struct TradeoffRow {
    std::string task, model;
    double mflops = 0.0, score = 0.0;
    bool searched = false;
};

struct TradeoffRatio {
    std::string task, baseline, searched;
    double ratio = 0.0;  // baseline MFLOPs / searched MFLOPs
};

struct TradeoffReport {
    std::vector<TradeoffRow> rows;
    std::vector<TradeoffRatio> ratios;
    std::string csv() const;
};

/// Seed-mean (MFLOPs, score) per (task, model). Records carry "task" and
/// "model" labels; label kind=searched marks searched agents. The ratio
/// compares each searched model against the best-scoring baseline (or the
/// named one). Throws MetricsError when the filter leaves no records.
TradeoffReport tradeoff_report(const std::vector<RunRecord>& records, const std::optional<std::string>& task = {},
                               const std::optional<std::string>& baseline = {});

/// runs/<run_id>/{config.json, metrics.jsonl, checkpoints/, derived_arch.json}
struct RunDir {
    std::filesystem::path root;

    static RunDir create(const std::filesystem::path& out_root, const std::string& run_id);
    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path metrics() const { return root / "metrics.jsonl"; }
    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    std::filesystem::path derived_arch() const { return root / "derived_arch.json"; }
    std::filesystem::path record() const { return root / "record.json"; }
};

void write_json(const std::filesystem::path& file, const Json& j);
Json read_json(const std::filesystem::path& file);
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace a2d::metrics
