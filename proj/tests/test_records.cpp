#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridqa/hash.hpp"
#include "gridqa/ingest.hpp"
#include "gridqa/records.hpp"

using namespace gridqa;
using nlohmann::json;

namespace {

const std::vector<TimePeriod> kAllPeriods = {TimePeriod::Historical, TimePeriod::MidCentury,
                                             TimePeriod::EndCentury};

SyntheticResult make_synth() {
    return generate_synthetic(21, 4, 4, VariableRegistry::default_registry(), 3);
}

// Transport scripted with a fixed sequence of HTTP results; chat responses are
// wrapped in the OpenAI completion shape.
class ScriptedTransport : public Transport {
public:
    explicit ScriptedTransport(std::vector<HttpResult> script) : script_(std::move(script)) {}

    static HttpResult ok(const std::string& text) {
        json body = {{"choices", json::array({{{"message", {{"role", "assistant"},
                                                            {"content", text}}}}})}};
        return HttpResult{200, body.dump(), false};
    }

    HttpResult post(const std::string&, const std::string&) override {
        if (calls_ >= script_.size()) return HttpResult{500, "script exhausted", false};
        return script_[calls_++];
    }

    std::size_t calls() const { return calls_; }

private:
    std::vector<HttpResult> script_;
    std::size_t calls_ = 0;
};

GatewayConfig quick_config() {
    GatewayConfig cfg;
    cfg.max_retries = 1;
    cfg.backoff_base_ms = 1.0;
    cfg.cache_enabled = false;
    return cfg;
}

}  // namespace

TEST_CASE("fmt2 renders two decimals and normalizes negative zero") {
    CHECK(fmt2(52.0) == "52.00");
    CHECK(fmt2(52.347) == "52.35");
    CHECK(fmt2(-0.001) == "0.00");
    CHECK(fmt2(-1.2) == "-1.20");
    CHECK(fmt2_signed(2.5) == "+2.50");
    CHECK(fmt2_signed(-1.2) == "-1.20");
    CHECK(fmt2_signed(0.0) == "+0.00");
}

TEST_CASE("input context carries one historical and four projection values") {
    auto synth = make_synth();
    CellId cell = synth.dataset.regions.begin()->first;
    InputContext ctx =
        build_input_context(synth.dataset, cell, {"annual_temp_max", "wind_speed"}, kAllPeriods);
    CHECK(ctx.cell == cell);
    CHECK(ctx.variables.size() == 2);
    for (const auto& [key, block] : ctx.variables) {
        CHECK(block.historical.has_value());
        CHECK(block.projections.size() == 4);
        // regional stats: historical plus each period/scenario pair
        CHECK(block.regional.size() == 5);
    }
}

TEST_CASE("input context with no variables is rejected") {
    auto synth = make_synth();
    CellId cell = synth.dataset.regions.begin()->first;
    CHECK_THROWS_AS(build_input_context(synth.dataset, cell, {}, kAllPeriods), EmptySelection);
    CHECK_THROWS_AS(build_input_context(synth.dataset, cell, {"annual_temp_max"}, {}),
                    EmptySelection);
}

TEST_CASE("serialized context is deterministic and shows 2-decimal values") {
    auto synth = make_synth();
    CellId cell = synth.dataset.regions.begin()->first;
    InputContext ctx =
        build_input_context(synth.dataset, cell, {"annual_temp_max"}, kAllPeriods);
    std::string a = serialize_context(ctx, synth.dataset.variables);
    std::string b = serialize_context(ctx, synth.dataset.variables);
    CHECK(a == b);
    CHECK(a.find(format_cell_tag(cell)) != std::string::npos);
    CHECK(a.find(fmt2(*ctx.variables.at("annual_temp_max").historical)) != std::string::npos);
}

TEST_CASE("context JSON round-trip preserves every field") {
    auto synth = make_synth();
    CellId cell = synth.dataset.regions.begin()->first;
    InputContext ctx = build_input_context(synth.dataset, cell,
                                           {"annual_precip", "fire_weather_index"}, kAllPeriods);
    InputContext back = context_from_json(context_to_json(ctx));
    CHECK(back.cell == ctx.cell);
    CHECK(back.region == ctx.region);
    CHECK(back.periods == ctx.periods);
    REQUIRE(back.variables.size() == ctx.variables.size());
    for (const auto& [key, block] : ctx.variables) {
        const VariableBlock& other = back.variables.at(key);
        CHECK(other.unit == block.unit);
        CHECK(other.historical == block.historical);
        CHECK(other.projections == block.projections);
        CHECK(other.regional.size() == block.regional.size());
    }
}

TEST_CASE("template catalog loads the shipped templates") {
    TemplateCatalog cat = TemplateCatalog::load_dir(GRIDQA_SOURCE_DIR "/data/templates");
    CHECK(cat.size() == 8);
    for (TaskKind t : kAllTasks) CHECK(cat.for_task(t).size() == 2);
    CHECK(cat.get("vr_ask_value").task == TaskKind::VariableRetrieval);
    CHECK_THROWS_AS(cat.get("nope"), UnknownTemplate);
}

TEST_CASE("catalog rejects templates with inconsistent scenario placeholders") {
    TemplateCatalog cat;
    QaTemplate t;
    t.id = "bad_single";
    t.task = TaskKind::VariableRetrieval;
    t.both_scenarios = false;
    t.question = "What is {variable} at {cell}?";  // no {scenario}
    t.answer = "{value} {unit}";
    CHECK_THROWS_AS(cat.add(t), ConfigError);
    t.id = "bad_both";
    t.both_scenarios = true;
    t.question = "What is {variable} at {cell} under {scenario}?";
    CHECK_THROWS_AS(cat.add(t), ConfigError);
}

TEST_CASE("instantiation fills placeholders and builds gold structurally") {
    auto synth = make_synth();
    TemplateCatalog cat = TemplateCatalog::load_dir(GRIDQA_SOURCE_DIR "/data/templates");
    CellId cell = synth.dataset.regions.begin()->first;
    InputContext ctx =
        build_input_context(synth.dataset, cell, {"annual_temp_max"}, kAllPeriods);

    InstantiatedQa qa = instantiate_template(cat.get("vr_ask_value"), ctx,
                                             synth.dataset.variables, 5);
    CHECK(qa.question.find('{') == std::string::npos);
    CHECK(qa.assistant.find('{') == std::string::npos);
    CHECK(qa.gold.cell_tags == std::set<std::string>{format_cell_tag(cell)});
    CHECK(qa.gold.variables == std::set<std::string>{"annual_temp_max"});
    CHECK(qa.gold.units == std::set<std::string>{"°F"});
    CHECK(qa.gold.scenarios.size() == 1);
    REQUIRE(qa.gold.values.size() == 1);
    // the gold value is one of the context's projection values for the chosen scenario
    Scenario s = *qa.gold.scenarios.begin();
    bool found = false;
    for (const auto& [key, v] : ctx.variables.at("annual_temp_max").projections)
        if (key.second == s && fmt2(v) == fmt2(qa.gold.values[0].first)) found = true;
    CHECK(found);
    CHECK(qa.assistant.find(fmt2(qa.gold.values[0].first)) != std::string::npos);

    InstantiatedQa again = instantiate_template(cat.get("vr_ask_value"), ctx,
                                                synth.dataset.variables, 5);
    CHECK(again.question == qa.question);
    CHECK(again.assistant == qa.assistant);
}

TEST_CASE("both-scenario templates pin both scenarios in gold") {
    auto synth = make_synth();
    TemplateCatalog cat = TemplateCatalog::load_dir(GRIDQA_SOURCE_DIR "/data/templates");
    CellId cell = synth.dataset.regions.begin()->first;
    InputContext ctx = build_input_context(synth.dataset, cell, {"annual_precip"}, kAllPeriods);
    InstantiatedQa qa =
        instantiate_template(cat.get("vr_ask_both"), ctx, synth.dataset.variables, 9);
    CHECK(qa.gold.scenarios == std::set<Scenario>{Scenario::Rcp45, Scenario::Rcp85});
    CHECK(qa.gold.values.size() == 2);
}

TEST_CASE("record ids are stable and sensitive to every input") {
    std::string base = make_record_id(TaskKind::TrendAnalysis, {1, 2}, {"wind_speed"}, "t1", 7);
    CHECK(base == make_record_id(TaskKind::TrendAnalysis, {1, 2}, {"wind_speed"}, "t1", 7));
    CHECK(base != make_record_id(TaskKind::VariableRetrieval, {1, 2}, {"wind_speed"}, "t1", 7));
    CHECK(base != make_record_id(TaskKind::TrendAnalysis, {1, 3}, {"wind_speed"}, "t1", 7));
    CHECK(base != make_record_id(TaskKind::TrendAnalysis, {1, 2}, {"rel_humidity"}, "t1", 7));
    CHECK(base != make_record_id(TaskKind::TrendAnalysis, {1, 2}, {"wind_speed"}, "t2", 7));
    CHECK(base != make_record_id(TaskKind::TrendAnalysis, {1, 2}, {"wind_speed"}, "t1", 8));
}

namespace {

QARecord sample_record() {
    auto synth = make_synth();
    TemplateCatalog cat = TemplateCatalog::load_dir(GRIDQA_SOURCE_DIR "/data/templates");
    CellId cell = synth.dataset.regions.begin()->first;
    QARecord r;
    r.task = TaskKind::VariableRetrieval;
    r.cell = cell;
    r.input = build_input_context(synth.dataset, cell, {"annual_temp_max"}, kAllPeriods);
    InstantiatedQa qa =
        instantiate_template(cat.get("vr_ask_value"), r.input, synth.dataset.variables, 5);
    r.user = qa.question;
    r.assistant = qa.assistant;
    r.gold = qa.gold;
    r.id = make_record_id(r.task, cell, {"annual_temp_max"}, "vr_ask_value", 5);
    return r;
}

}  // namespace

TEST_CASE("paraphrase keeps the rewrite when gold survives") {
    QARecord rec = sample_record();
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{
        ScriptedTransport::ok("reworded question"),
        ScriptedTransport::ok("reworded answer"),
    });
    GatewayClient client(quick_config(), transport);
    ParaphraseOutcome out = paraphrase(rec, client, {},
                                       [](const std::string&, const GoldClaims&) { return true; });
    CHECK(out.accepted);
    CHECK(out.record.user == "reworded question");
    CHECK(out.record.assistant == "reworded answer");
    CHECK(out.record.gold.values == rec.gold.values);
}

TEST_CASE("paraphrase rejection keeps the original text") {
    QARecord rec = sample_record();
    auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResult>{
        ScriptedTransport::ok("q"), ScriptedTransport::ok("lossy answer")});
    GatewayClient client(quick_config(), transport);
    ParaphraseOutcome out = paraphrase(rec, client, {},
                                       [](const std::string&, const GoldClaims&) { return false; });
    CHECK(!out.accepted);
    CHECK(out.record.user == rec.user);
    CHECK(out.record.assistant == rec.assistant);
    CHECK(!out.note.empty());
}

TEST_CASE("paraphrase surfaces gateway failures with the record id") {
    QARecord rec = sample_record();
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResult>{HttpResult{0, "", true}, HttpResult{0, "", true}});
    GatewayClient client(quick_config(), transport);
    try {
        paraphrase(rec, client, {}, [](const std::string&, const GoldClaims&) { return true; });
        FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
        CHECK(std::string(e.what()).find(rec.id) != std::string::npos);
    }
}

TEST_CASE("split holds the 120 -> 108/12 law and stays deterministic") {
    std::vector<QARecord> records(120);
    for (int i = 0; i < 120; ++i) records[i].id = "r" + std::to_string(i);
    auto [train, test] = split_records(records, 0.10, 42);
    CHECK(train.size() == 108);
    CHECK(test.size() == 12);

    std::set<std::string> seen;
    for (const auto& r : train) seen.insert(r.id);
    for (const auto& r : test) seen.insert(r.id);
    CHECK(seen.size() == 120);

    auto [train2, test2] = split_records(records, 0.10, 42);
    auto ids = [](const std::vector<QARecord>& v) {
        std::vector<std::string> out;
        for (const auto& r : v) out.push_back(r.id);
        return out;
    };
    CHECK(ids(train2) == ids(train));
    CHECK(ids(test2) == ids(test));
    auto [train3, test3] = split_records(records, 0.10, 43);
    CHECK(ids(test3) != ids(test));
}

TEST_CASE("split clamps tiny fractions to at least one test record") {
    std::vector<QARecord> records(7);
    for (int i = 0; i < 7; ++i) records[i].id = "r" + std::to_string(i);
    auto [train, test] = split_records(records, 0.01, 1);
    CHECK(test.size() == 1);
    CHECK(train.size() == 6);
    CHECK_THROWS_AS(split_records(records, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split_records(records, 1.0, 1), ConfigError);
}

TEST_CASE("archive JSONL round-trips records with gold intact") {
    QARecord rec = sample_record();
    std::ostringstream sink;
    CHECK(export_archive_jsonl({rec}, sink) == 1);
    std::istringstream source(sink.str());
    std::vector<QARecord> back = import_archive_jsonl(source);
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == rec.id);
    CHECK(back[0].task == rec.task);
    CHECK(back[0].cell == rec.cell);
    CHECK(back[0].user == rec.user);
    CHECK(back[0].assistant == rec.assistant);
    CHECK(back[0].gold.cell_tags == rec.gold.cell_tags);
    CHECK(back[0].gold.variables == rec.gold.variables);
    CHECK(back[0].gold.units == rec.gold.units);
    CHECK(back[0].gold.scenarios == rec.gold.scenarios);
    CHECK(back[0].gold.values == rec.gold.values);
    CHECK(back[0].input.variables.size() == rec.input.variables.size());
}

TEST_CASE("training export holds the documented shape") {
    QARecord rec = sample_record();
    std::ostringstream sink;
    VariableRegistry reg = VariableRegistry::default_registry();
    CHECK(export_training_jsonl({rec}, reg, sink) == 1);
    json j = json::parse(sink.str());
    CHECK(j["id"] == rec.id);
    CHECK(j["user"] == rec.user);
    CHECK(j["assistant"] == rec.assistant);
    CHECK(j["input"] == serialize_context(rec.input, reg));
}
