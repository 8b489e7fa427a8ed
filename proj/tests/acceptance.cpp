// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Everything runs offline against the replay mock and the lexical
// embedder.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "gridqa/eval.hpp"
#include "gridqa/harness.hpp"
#include "gridqa/hash.hpp"
#include "gridqa/ingest.hpp"

using namespace gridqa;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& msg) {
    if (!ok) throw CheckFailure(msg);
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

const VariableRegistry& reg() {
    static VariableRegistry r = VariableRegistry::default_registry();
    return r;
}

HarnessConfig synthetic_config() {
    HarnessConfig cfg;
    cfg.synth_seed = 11;
    cfg.build_seed = 11;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.regions = 2;
    cfg.sample_cells = 3;
    cfg.template_dir = GRIDQA_SOURCE_DIR "/data/templates";
    cfg.gateway.backoff_base_ms = 1.0;
    return cfg;
}

std::vector<QARecord> built_records() {
    HarnessConfig cfg = synthetic_config();
    DatasetBundle data = load_dataset(cfg);
    TemplateCatalog catalog = TemplateCatalog::load_dir(cfg.template_dir);
    std::vector<std::string> gate_failures;
    std::vector<QARecord> records = build_records(data, catalog, cfg, gate_failures);
    check(gate_failures.empty(), "record builder gate rejected records");
    return records;
}

// --- criterion 1: echo optimum ----------------------------------------------

void criterion_echo_optimum() {
    auto start = Clock::now();
    std::vector<QARecord> records = built_records();
    check(records.size() >= 24,
          "expected >= 24 records, got " + std::to_string(records.size()));
    LexicalEmbedder emb;
    for (const QARecord& r : records) {
        ExtractedClaims claims = extract_claims(r.assistant, reg());
        AccuracyBreakdown acc = score_accuracy(r.gold, claims, reg());
        check(acc.overall == 1.0, "record " + r.id + " scored " + std::to_string(acc.overall) +
                                      " against its own reference");
        double sim = score_similarity(r.assistant, r.assistant, emb);
        check(sim == 1.0, "record " + r.id + " reflexive similarity " + std::to_string(sim));
    }
    check(seconds_since(start) < 5.0, "runtime exceeded 5 s");
}

// --- criterion 2: rubric arithmetic -----------------------------------------

void criterion_rubric_arithmetic() {
    GoldClaims gold;
    gold.cell_tags = {"R073C493"};
    gold.variables = {"annual_temp_max"};
    gold.units = {"°F"};
    gold.scenarios = {Scenario::Rcp45, Scenario::Rcp85};
    gold.values = {{97.20, "°F"}, {99.10, "°F"}};

    auto overall = [&](const std::string& response) {
        return score_accuracy(gold, extract_claims(response, reg()), reg()).overall;
    };
    const std::string perfect =
        "At R073C493 the annual maximum temperature reaches 97.20 °F under RCP 4.5 "
        "and 99.10 °F under RCP 8.5.";
    check(overall(perfect) == 1.0, "baseline response did not score 1.0");

    const std::string no_units =
        "At R073C493 the annual maximum temperature reaches 97.20 under RCP 4.5 "
        "and 99.10 under RCP 8.5.";
    check(overall(no_units) == 0.8, "unit deletion must cost exactly 0.2, got " +
                                        std::to_string(overall(no_units)));

    const std::string one_scenario =
        "At R073C493 the annual maximum temperature reaches 97.20 °F and 99.10 °F "
        "under RCP 8.5.";
    check(overall(one_scenario) == 0.9, "scenario subset must cost exactly 0.1, got " +
                                            std::to_string(overall(one_scenario)));

    const std::string drift_small =
        "At R073C493 the annual maximum temperature reaches " + fmt2(97.20 * 1.01) +
        " °F under RCP 4.5 and " + fmt2(99.10 * 1.01) + " °F under RCP 8.5.";
    check(overall(drift_small) == 0.9, "+1% values must land in the 0.5 band, got " +
                                           std::to_string(overall(drift_small)));

    const std::string drift_large =
        "At R073C493 the annual maximum temperature reaches " + fmt2(97.20 * 1.10) +
        " °F under RCP 4.5 and " + fmt2(99.10 * 1.10) + " °F under RCP 8.5.";
    check(overall(drift_large) == 0.8, "+10% values must land in the 0.0 band, got " +
                                           std::to_string(overall(drift_large)));
}

// --- criterion 3: directional fixture comparison ----------------------------

std::string degraded_response(const QARecord& r) {
    // single arbitrary scenario, ~1.5% value drift, no unit tokens
    std::ostringstream out;
    out << "At " << *r.gold.cell_tags.begin() << ", the ";
    bool first = true;
    for (const auto& key : r.gold.variables) {
        if (!first) out << " and ";
        out << reg().get(key).display_name;
        first = false;
    }
    out << " is ";
    first = true;
    for (const auto& [value, unit] : r.gold.values) {
        if (!first) out << " and ";
        out << fmt2(value * 1.015);
        first = false;
    }
    Scenario s = r.gold.scenarios.empty() ? Scenario::Rcp45 : *r.gold.scenarios.begin();
    out << " under " << scenario_label(s) << ".";
    return out.str();
}

void criterion_directional_fixtures() {
    auto start = Clock::now();
    std::vector<QARecord> records = built_records();
    GatewayConfig gw;
    gw.backoff_base_ms = 1.0;

    auto tuned = make_echo_fixture(records, gw, reg(), kDefaultPromptBudgetTokens);
    auto base = tuned;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (i % 5 >= 3) continue;  // degrade 60% of responses
        PromptBundle bundle = assemble_prompt(records[i], reg());
        std::string key =
            chat_request_hash(gw.model_name, bundle.system, bundle.user, gw.temperature);
        base[key] = degraded_response(records[i]);
    }

    auto run = [&](const std::map<std::string, std::string>& fixture) {
        GatewayClient client(gw, std::make_shared<ReplayTransport>(fixture));
        LexicalEmbedder emb;
        return evaluate_suite(records, client, emb, reg(), {});
    };
    EvaluationReport tuned_report = run(tuned);
    EvaluationReport base_report = run(base);

    check(base_report.mean_accuracy < tuned_report.mean_accuracy,
          "degraded fixture must score lower on accuracy");
    check(base_report.mean_similarity < tuned_report.mean_similarity,
          "degraded fixture must score lower on similarity");
    double gap = tuned_report.mean_accuracy - base_report.mean_accuracy;
    check(gap >= 0.15, "accuracy gap " + std::to_string(gap) + " below 0.15");
    check(seconds_since(start) < 10.0, "runtime exceeded 10 s");
}

// --- criterion 4: aggregation oracle ----------------------------------------

void criterion_aggregation_oracle() {
    auto start = Clock::now();
    auto synth = generate_synthetic(23, 10, 10, reg(), 4);
    const GridDataset& ds = synth.dataset;

    std::vector<std::string> vars;
    for (const auto& [k, v] : ds.variables.all()) vars.push_back(k);
    std::vector<Region> queries;
    std::set<Region> seen;
    for (const auto& [cell, region] : ds.regions) {
        if (seen.insert(region).second) queries.push_back(region);
        Region state{region.state, std::nullopt};
        if (seen.insert(state).second) queries.push_back(state);
    }

    SplitMix64 rng(0x0bac1e);
    int checked = 0;
    double worst_mean_rel = 0.0;
    while (checked < 100) {
        const Region& q = queries[rng.below(queries.size())];
        const std::string& var = vars[rng.below(vars.size())];
        TimePeriod p = static_cast<TimePeriod>(rng.below(3));
        std::optional<Scenario> s;
        if (p != TimePeriod::Historical) s = static_cast<Scenario>(rng.below(2));

        double lo = 1e300, hi = -1e300, sum = 0.0;
        int n = 0;
        for (const auto& [key, m] : ds.entries) {
            if (key.variable != var || key.period != p || key.scenario != s) continue;
            auto it = ds.regions.find(key.cell);
            if (it == ds.regions.end() || !region_matches(q, it->second)) continue;
            lo = std::min(lo, m.value);
            hi = std::max(hi, m.value);
            sum += m.value;
            ++n;
        }
        if (n == 0) continue;
        AggregateStats got = regional_aggregate(ds, q, var, p, s);
        check(got.count == n, "count mismatch");
        check(got.min == lo, "min must match exactly");
        check(got.max == hi, "max must match exactly");
        double expect = sum / n;
        double rel = std::fabs(got.mean - expect) / std::max(1.0, std::fabs(expect));
        worst_mean_rel = std::max(worst_mean_rel, rel);
        ++checked;
    }
    check(worst_mean_rel <= 1e-9,
          "mean relative error " + std::to_string(worst_mean_rel) + " above 1e-9");
    check(seconds_since(start) < 1.0, "runtime exceeded 1 s");
}

// --- criterion 5: parser corpus ---------------------------------------------

void criterion_parser_corpus() {
    std::ifstream in(GRIDQA_SOURCE_DIR "/tests/data/claims_corpus.jsonl");
    check(in.good(), "corpus file missing");
    std::string line;
    int cases = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        const std::string text = j["text"].get<std::string>();
        ExtractedClaims got = extract_claims(text, reg());

        auto as_set = [&](const char* field) {
            return std::set<std::string>(j[field].begin(), j[field].end());
        };
        check(got.cell_tags == as_set("tags"), "tag mismatch on: " + text);
        check(got.variables == as_set("variables"), "variable mismatch on: " + text);
        check(got.families == as_set("families"), "family mismatch on: " + text);
        check(got.units == as_set("units"), "unit mismatch on: " + text);
        std::set<Scenario> scenarios;
        for (const auto& s : j["scenarios"]) scenarios.insert(*parse_scenario_key(s));
        check(got.scenarios == scenarios, "scenario mismatch on: " + text);

        check(got.values.size() == j["values"].size(), "value count mismatch on: " + text);
        for (std::size_t i = 0; i < got.values.size(); ++i) {
            check(std::fabs(got.values[i].first - j["values"][i][0].get<double>()) < 1e-9,
                  "value mismatch on: " + text);
            if (j["values"][i][1].is_null())
                check(!got.values[i].second.has_value(), "unexpected unit on: " + text);
            else
                check(got.values[i].second == j["values"][i][1].get<std::string>(),
                      "value unit mismatch on: " + text);
        }
        ++cases;
    }
    check(cases >= 40, "corpus holds fewer than 40 cases");
}

// --- criterion 6: pipeline determinism --------------------------------------

void criterion_pipeline_determinism() {
    fs::path root = fs::temp_directory_path() /
                    ("gridqa_accept_" + hex64(SplitMix64(Clock::now().time_since_epoch().count())
                                                  .next()));
    fs::create_directories(root);
    std::string cfg_path = (root / "cfg.toml").string();
    write_file(cfg_path,
               "[dataset]\nmode = \"synthetic\"\n"
               "[synthetic]\nseed = 11\nrows = 4\ncols = 4\nregions = 2\n"
               "[templates]\ndir = \"" GRIDQA_SOURCE_DIR "/data/templates\"\n"
               "[build]\nseed = 11\nsample_cells = 3\n"
               "[split]\nfraction = 0.25\nseed = 11\n"
               "[gateway]\nbackoff_base_ms = 1.0\n"
               "[output]\ndir = \"unused\"\n");

    auto run = [&](const std::string& out_dir, const std::string& replay) {
        HarnessConfig cfg = HarnessConfig::load(cfg_path);
        cfg.out_dir = out_dir;
        check(cmd_synth(cfg) == kExitOk, "synth failed");
        check(cmd_build(cfg) == kExitOk, "build failed");
        check(cmd_split(cfg, out_dir + "/records.jsonl") == kExitOk, "split failed");
        if (replay.empty()) {
            check(cmd_eval(cfg, out_dir + "/test.jsonl", out_dir + "/echo.jsonl") == kExitOk,
                  "fixture write failed");
        }
        cfg.replay_path = replay.empty() ? out_dir + "/echo.jsonl" : replay;
        check(cmd_eval(cfg, out_dir + "/test.jsonl") == kExitOk, "eval failed");
    };
    std::string dir_a = (root / "a").string();
    std::string dir_b = (root / "b").string();
    run(dir_a, "");
    run(dir_b, dir_a + "/echo.jsonl");

    check(read_file(dir_a + "/records.jsonl") == read_file(dir_b + "/records.jsonl"),
          "records.jsonl differs between identical runs");
    check(read_file(dir_a + "/report.json") == read_file(dir_b + "/report.json"),
          "report.json differs between identical runs");
    fs::remove_all(root);
}

// --- criterion 7: split law --------------------------------------------------

void criterion_split_law() {
    std::vector<QARecord> records(120);
    for (int i = 0; i < 120; ++i) records[i].id = "rec" + std::to_string(i);
    auto [train, test] = split_records(records, 0.10, 7);
    check(train.size() == 108, "train size " + std::to_string(train.size()));
    check(test.size() == 12, "test size " + std::to_string(test.size()));
    std::set<std::string> all;
    for (const auto& r : train) all.insert(r.id);
    std::size_t train_ids = all.size();
    check(train_ids == 108, "duplicate ids inside train");
    for (const auto& r : test) all.insert(r.id);
    check(all.size() == 120, "partitions overlap or drop records");

    auto [train2, test2] = split_records(records, 0.10, 7);
    for (std::size_t i = 0; i < test.size(); ++i)
        check(test[i].id == test2[i].id, "split is not stable across runs");
    for (std::size_t i = 0; i < train.size(); ++i)
        check(train[i].id == train2[i].id, "split is not stable across runs");
}

// --- criterion 8: gateway behavior ------------------------------------------

class ScriptedTransport : public Transport {
public:
    explicit ScriptedTransport(std::vector<HttpResult> script) : script_(std::move(script)) {}
    HttpResult post(const std::string&, const std::string&) override {
        if (calls_ >= script_.size()) return HttpResult{500, "script exhausted", false};
        return script_[calls_++];
    }
    std::size_t calls() const { return calls_; }

private:
    std::vector<HttpResult> script_;
    std::size_t calls_ = 0;
};

HttpResult scripted_ok(const std::string& text) {
    json body = {{"choices", json::array({{{"message",
                                            {{"role", "assistant"}, {"content", text}}}}})}};
    return HttpResult{200, body.dump(), false};
}

void criterion_gateway_behavior() {
    GatewayConfig cfg;
    cfg.max_retries = 2;
    cfg.backoff_base_ms = 1.0;

    {  // transient failures retried, bounded by max_retries
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{
            HttpResult{429, "", false}, HttpResult{503, "", false}, scripted_ok("done")});
        GatewayClient client(cfg, t);
        ChatExchange ex = client.chat_complete(std::nullopt, "q");
        check(ex.response == "done", "retry did not recover");
        check(ex.attempts == 3, "expected 3 attempts");
    }
    {  // budget exhaustion: 1 + max_retries attempts, then error
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{
            HttpResult{429, "", false}, HttpResult{429, "", false}, HttpResult{429, "", false},
            scripted_ok("too late")});
        GatewayClient client(cfg, t);
        bool threw = false;
        try {
            client.chat_complete(std::nullopt, "q");
        } catch (const GatewayError& e) {
            threw = true;
            check(e.attempts == 3, "attempts must equal 1 + max_retries");
        }
        check(threw, "exhausted retries must raise");
        check(t->calls() == 3, "client must stop at the retry budget");
    }
    {  // auth failures do not retry
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{
            HttpResult{401, "bad key", false}, scripted_ok("never")});
        GatewayClient client(cfg, t);
        bool threw = false;
        try {
            client.chat_complete(std::nullopt, "q");
        } catch (const GatewayError& e) {
            threw = true;
            check(e.kind == GatewayError::Kind::Auth, "expected an auth error");
        }
        check(threw, "auth failure must raise");
        check(t->calls() == 1, "auth failures must not retry");
    }
    {  // cache eliminates the second network call
        auto t = std::make_shared<ScriptedTransport>(
            std::vector<HttpResult>{scripted_ok("cached"), scripted_ok("fresh")});
        GatewayClient client(cfg, t);
        client.chat_complete("sys", "same question");
        ChatExchange again = client.chat_complete("sys", "same question");
        check(again.from_cache, "second identical request must hit the cache");
        check(again.response == "cached", "cache returned the wrong payload");
        check(client.network_calls() == 1, "cache failed to suppress the network call");
    }
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        const char* label;
        std::function<void()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "echo optimum over built records", criterion_echo_optimum},
        {2, "rubric arithmetic under mutations", criterion_rubric_arithmetic},
        {3, "directional fixture comparison", criterion_directional_fixtures},
        {4, "regional aggregation oracle", criterion_aggregation_oracle},
        {5, "claim-extraction corpus agreement", criterion_parser_corpus},
        {6, "pipeline determinism", criterion_pipeline_determinism},
        {7, "train/test split law", criterion_split_law},
        {8, "gateway retry, auth and cache behavior", criterion_gateway_behavior},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        try {
            c.run();
            std::printf("criterion %d (%s): PASS\n", c.number, c.label);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("criterion %d (%s): FAIL - %s\n", c.number, c.label, e.what());
        }
    }
    if (failures > 0) std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
