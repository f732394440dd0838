// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "a2d/metrics/metrics.hpp"
#include "doctest.h"

using namespace a2d;
using namespace a2d::metrics;
namespace fs = std::filesystem;

namespace {

RunRecord record(std::string model, double score, double mflops, std::uint64_t seed = 0,
                 std::map<std::string, std::string> extra = {}) {
    RunRecord r;
    r.run_id = model + "-" + std::to_string(seed);
    r.config_hash = "0123456789abcdef";
    r.seed = seed;
    r.labels = {{"task", "grid"}, {"model", model}};
    for (auto& [k, v] : extra) r.labels[k] = v;
    r.evals = {{100, score / 2}, {200, score}};
    r.final = {score, mflops, 1000};
    r.wall_clock_s = 1.25;
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("a2d_metrics_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config hash ignores key order and detects changes") {
    const Json a = Json::parse(R"({"b": 1, "a": {"y": [1, 2], "x": "s"}})");
    const Json b = Json::parse(R"({"a": {"x": "s", "y": [1, 2]}, "b": 1})");
    const Json c = Json::parse(R"({"a": {"x": "s", "y": [2, 1]}, "b": 1})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("record validation and lossless round trips") {
    RunRecord r = record("res-s", 0.75, 0.1 + 0.2, 4, {{"mode", "proposed"}});
    r.evals.push_back({150, 1.0 / 3.0});
    CHECK_THROWS_AS(validate(r), MetricsError);
    r.evals.pop_back();
    CHECK(record_from_json(to_json(r)) == r);

    const fs::path dir = scratch("roundtrip");
    std::vector<RunRecord> rs{r, record("tiny", std::nextafter(0.5, 1.0), 1e-7, 9)};
    write_jsonl(dir / "r.jsonl", rs);
    CHECK(read_jsonl(dir / "r.jsonl") == rs);

    Json bad = to_json(r);
    bad["evals"] = Json::array({{{"step", 5}, {"mean_score", 0}}, {{"step", 5}, {"mean_score", 0}}});
    CHECK_THROWS_AS(record_from_json(bad), MetricsError);
}

TEST_CASE("aggregate: single record, known constants, permutation invariance") {
    const auto one = aggregate({record("tiny", 0.4, 1)}, {"model"});
    REQUIRE(one.size() == 1);
    CHECK(one[0].mean == 0.4);
    CHECK(one[0].stddev == 0.0);

    std::vector<RunRecord> rs;
    for (int i = 1; i <= 5; ++i) rs.push_back(record("res-s", i, 1, i));
    const auto rows = aggregate(rs, {"model"});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].count == 5);
    CHECK(rows[0].mean == doctest::Approx(3.0));
    CHECK(rows[0].stddev == doctest::Approx(std::sqrt(2.0)));
    CHECK(rows[0].min == 1.0);
    CHECK(rows[0].max == 5.0);

    std::mt19937 gen(3);
    std::vector<RunRecord> mixed;
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 30; ++i) {
        mixed.push_back(record(i % 2 ? "tiny" : "res-s", u(gen), 1, i, {{"mode", i % 3 ? "none" : "proposed"}}));
    }
    const auto ref = aggregate(mixed, {"mode", "model"});
    for (int k = 0; k < 5; ++k) {
        std::shuffle(mixed.begin(), mixed.end(), gen);
        const auto again = aggregate(mixed, {"mode", "model"});
        REQUIRE(again.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(again[i].key == ref[i].key);
            CHECK(again[i].mean == ref[i].mean);
            CHECK(again[i].stddev == ref[i].stddev);
        }
    }
    CHECK(ref.size() == 4);
    const std::string csv = summary_csv({"mode", "model"}, ref);
    CHECK(csv.rfind("mode,model,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    CHECK_THROWS_AS(aggregate({}, {"model"}), MetricsError);
    CHECK_THROWS_AS(aggregate({record("tiny", 1, 1)}, {"mode"}), MetricsError);
}

TEST_CASE("trade-off ratio and filters") {
    std::vector<RunRecord> rs{record("res-m", 0.9, 20), record("searched", 0.9, 10, 0, {{"kind", "searched"}})};
    const auto rep = tradeoff_report(rs);
    REQUIRE(rep.ratios.size() == 1);
    CHECK(rep.ratios[0].ratio == doctest::Approx(2.0));
    CHECK(rep.ratios[0].baseline == "res-m");
    CHECK(rep.rows.size() == 2);
    const std::string csv = rep.csv();
    CHECK(csv.find("task,model,mflops,score") != std::string::npos);
    CHECK(csv.find("ratio") != std::string::npos);

    rs.push_back(record("res-l", 0.95, 40));
    CHECK(tradeoff_report(rs).ratios[0].baseline == "res-l");
    CHECK(tradeoff_report(rs, std::nullopt, std::string("res-m")).ratios[0].ratio == doctest::Approx(2.0));
    CHECK_THROWS_AS(tradeoff_report(rs, std::string("atari")), MetricsError);
}

TEST_CASE("run directory layout and JSONL streaming") {
    const fs::path root = scratch("layout");
    const RunDir dir = RunDir::create(root, "abc");
    CHECK(dir.root == root / "runs" / "abc");
    CHECK(fs::is_directory(dir.checkpoints()));
    write_json(dir.config(), {{"seed", 3}});
    CHECK(read_json(dir.config()).at("seed") == 3);
    {
        JsonlWriter w(dir.metrics());
        w.write({{"step", 1}});
        w.write({{"step", 2}});
    }
    std::ifstream in(dir.metrics());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == 2);
    CHECK_THROWS_AS(read_json(root / "missing.json"), MetricsError);
}
