// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace a2d::metrics {

std::string config_hash(const Json& config) {
    // Json keeps object keys sorted, so the dump is canonical.
    const std::string text = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void validate(const RunRecord& r) {
    for (std::size_t i = 1; i < r.evals.size(); ++i) {
        if (r.evals[i].step <= r.evals[i - 1].step) {
            throw MetricsError("run " + r.run_id + ": eval steps must be strictly increasing (" +
                               std::to_string(r.evals[i - 1].step) + " then " + std::to_string(r.evals[i].step) + ")");
        }
    }
}

Json to_json(const RunRecord& r) {
    Json evals = Json::array();
    for (const auto& e : r.evals) evals.push_back({{"step", e.step}, {"mean_score", e.mean_score}});
    return {{"run_id", r.run_id},
            {"config_hash", r.config_hash},
            {"seed", r.seed},
            {"labels", r.labels},
            {"evals", evals},
            {"final", {{"score", r.final.score}, {"mflops", r.final.mflops}, {"params", r.final.params}}},
            {"wall_clock_s", r.wall_clock_s}};
}

RunRecord record_from_json(const Json& j) {
    RunRecord r;
    try {
        r.run_id = j.at("run_id").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.labels = j.value("labels", std::map<std::string, std::string>{});
        for (const auto& e : j.at("evals")) r.evals.push_back({e.at("step").get<std::size_t>(), e.at("mean_score").get<double>()});
        const Json& f = j.at("final");
        r.final = {f.at("score").get<double>(), f.at("mflops").get<double>(), f.at("params").get<std::size_t>()};
        r.wall_clock_s = j.value("wall_clock_s", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw MetricsError(std::string("malformed run record: ") + e.what());
    }
    validate(r);
    return r;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& file, bool truncate)
    : out_(file, truncate ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app) {
    if (!out_) throw MetricsError("cannot open " + file.string() + " for writing");
}

void JsonlWriter::write(const Json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
}

void write_jsonl(const std::filesystem::path& file, const std::vector<RunRecord>& records) {
    JsonlWriter w(file);
    for (const auto& r : records) w.write(to_json(r));
}

std::vector<RunRecord> read_jsonl(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw MetricsError("cannot open " + file.string());
    std::vector<RunRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(Json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw MetricsError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

namespace {

// Order-independent statistics: values are sorted before summation.
SummaryRow summarize(std::vector<std::string> key, std::vector<double> v) {
    std::sort(v.begin(), v.end());
    SummaryRow row;
    row.key = std::move(key);
    row.count = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    row.mean = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - row.mean) * (x - row.mean);
    row.stddev = std::sqrt(sq / static_cast<double>(v.size()));
    row.min = v.front();
    row.max = v.back();
    return row;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::vector<SummaryRow> aggregate(const std::vector<RunRecord>& records, const std::vector<std::string>& group_keys) {
    if (records.empty()) throw MetricsError("aggregate: no records");
    std::map<std::vector<std::string>, std::vector<double>> groups;
    for (const auto& r : records) {
        std::vector<std::string> key;
        for (const auto& k : group_keys) {
            const auto it = r.labels.find(k);
            if (it == r.labels.end()) throw MetricsError("aggregate: run " + r.run_id + " lacks label '" + k + "'");
            key.push_back(it->second);
        }
        groups[key].push_back(r.final.score);
    }
    std::vector<SummaryRow> rows;
    for (auto& [key, scores] : groups) rows.push_back(summarize(key, scores));
    return rows;
}

std::string summary_csv(const std::vector<std::string>& group_keys, const std::vector<SummaryRow>& rows) {
    std::string out;
    for (const auto& k : group_keys) out += csv_field(k) + ",";
    out += "count,mean,std,min,max\n";
    for (const auto& r : rows) {
        for (const auto& k : r.key) out += csv_field(k) + ",";
        out += std::to_string(r.count) + "," + num(r.mean) + "," + num(r.stddev) + "," + num(r.min) + "," +
               num(r.max) + "\n";
    }
    return out;
}

std::string TradeoffReport::csv() const {
    std::string out = "task,model,mflops,score\n";
    for (const auto& r : rows) {
        out += csv_field(r.task) + "," + csv_field(r.model) + "," + num(r.mflops) + "," + num(r.score) + "\n";
    }
    if (!ratios.empty()) {
        out += "\ntask,baseline,searched,flops_ratio\n";
        for (const auto& r : ratios) {
            out += csv_field(r.task) + "," + csv_field(r.baseline) + "," + csv_field(r.searched) + "," +
                   num(r.ratio) + "\n";
        }
    }
    return out;
}

TradeoffReport tradeoff_report(const std::vector<RunRecord>& records, const std::optional<std::string>& task,
                               const std::optional<std::string>& baseline) {
    struct Acc {
        std::vector<double> mflops, score;
        bool searched = false;
    };
    std::map<std::pair<std::string, std::string>, Acc> acc;
    for (const auto& r : records) {
        const auto t = r.labels.find("task");
        const auto m = r.labels.find("model");
        if (t == r.labels.end() || m == r.labels.end()) {
            throw MetricsError("tradeoff_report: run " + r.run_id + " lacks a task or model label");
        }
        if (task && t->second != *task) continue;
        Acc& a = acc[{t->second, m->second}];
        a.mflops.push_back(r.final.mflops);
        a.score.push_back(r.final.score);
        const auto k = r.labels.find("kind");
        a.searched = a.searched || (k != r.labels.end() && k->second == "searched");
    }
    if (acc.empty()) {
        throw MetricsError("tradeoff_report: no records" + (task ? " for task '" + *task + "'" : std::string()));
    }
    TradeoffReport rep;
    for (const auto& [key, a] : acc) {
        rep.rows.push_back({key.first, key.second, summarize({}, a.mflops).mean, summarize({}, a.score).mean,
                            a.searched});
    }
    std::sort(rep.rows.begin(), rep.rows.end(), [](const TradeoffRow& x, const TradeoffRow& y) {
        return std::tie(x.task, x.mflops, x.model) < std::tie(y.task, y.mflops, y.model);
    });
    std::map<std::string, const TradeoffRow*> best;
    for (const auto& r : rep.rows) {
        if (r.searched) continue;
        if (baseline) {
            if (r.model == *baseline) best[r.task] = &r;
            continue;
        }
        auto& b = best[r.task];
        if (b == nullptr || r.score > b->score) b = &r;
    }
    for (const auto& r : rep.rows) {
        if (!r.searched) continue;
        const auto it = best.find(r.task);
        if (it == best.end() || !(r.mflops > 0.0)) continue;
        rep.ratios.push_back({r.task, it->second->model, r.model, it->second->mflops / r.mflops});
    }
    return rep;
}

RunDir RunDir::create(const std::filesystem::path& out_root, const std::string& run_id) {
    RunDir d{out_root / "runs" / run_id};
    std::filesystem::create_directories(d.checkpoints());
    return d;
}

void write_json(const std::filesystem::path& file, const Json& j) { write_text(file, j.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw MetricsError("cannot open " + file.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw MetricsError(file.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw MetricsError("cannot open " + file.string() + " for writing");
    out << text;
}

}  // namespace a2d::metrics
