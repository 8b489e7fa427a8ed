#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridqa/gateway.hpp"
#include "gridqa/grid_model.hpp"
#include "gridqa/records.hpp"

namespace gridqa {

struct PromptBundle {
    std::string system;
    std::string user;  // serialized input block, blank line, question
    int token_estimate = 0;
    bool over_budget = false;
};

inline constexpr int kDefaultPromptBudgetTokens = 2048;

PromptBundle assemble_prompt(const QARecord& record, const VariableRegistry& registry,
                             int budget_tokens = kDefaultPromptBudgetTokens);

// Claim grammar. The regexes and tolerances live in a versioned config file so
// parity tweaks do not require code changes; defaults() mirrors the shipped
// file.
struct ClaimGrammar {
    int version = 1;
    std::string tag_pattern = R"([Rr]\d{3}[Cc]\d{3})";
    std::vector<std::pair<std::string, Scenario>> scenario_patterns = {
        {R"([Rr][Cc][Pp][ -]?4\.5)", Scenario::Rcp45},
        {R"([Rr][Cc][Pp][ -]?8\.5)", Scenario::Rcp85},
        {R"(4\.5[ -][Ss]cenario)", Scenario::Rcp45},
        {R"(8\.5[ -][Ss]cenario)", Scenario::Rcp85},
    };
    std::string value_pattern = R"([+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[+-]?\d+(?:\.\d+)?)";
    double value_exact_tolerance = 0.005;
    double value_relative_tolerance = 0.02;

    static ClaimGrammar defaults() { return {}; }
    static ClaimGrammar load_file(const std::string& path);
    void save_file(const std::string& path) const;
};

struct ExtractedClaims {
    std::set<std::string> cell_tags;   // canonical R###C###
    std::set<std::string> variables;   // registry keys
    std::set<std::string> families;    // family-level mentions ("temperature")
    std::set<std::string> units;       // canonical symbols
    std::set<Scenario> scenarios;
    std::vector<std::pair<double, std::optional<std::string>>> values;
};

ExtractedClaims extract_claims(const std::string& text, const VariableRegistry& registry,
                               const ClaimGrammar& grammar = ClaimGrammar::defaults());

enum class Component { Cell, Variable, Units, Scenario, Values };

double score_component(const GoldClaims& gold, const ExtractedClaims& found, Component component,
                       const VariableRegistry& registry,
                       const ClaimGrammar& grammar = ClaimGrammar::defaults());

struct AccuracyBreakdown {
    double cell = 0.0;
    double variable = 0.0;
    double units = 0.0;
    double scenario = 0.0;
    double values = 0.0;
    double overall = 0.0;
};

AccuracyBreakdown score_accuracy(const GoldClaims& gold, const ExtractedClaims& found,
                                 const VariableRegistry& registry,
                                 const ClaimGrammar& grammar = ClaimGrammar::defaults());

double score_similarity(const std::string& reference, const std::string& candidate,
                        Embedder& embedder);

// True when extract_claims output covers every gold claim; the record-builder
// self-consistency gate and the paraphrase acceptance gate.
bool claims_cover_gold(const ExtractedClaims& found, const GoldClaims& gold,
                       const ClaimGrammar& grammar = ClaimGrammar::defaults());

struct RecordResult {
    std::string record_id;
    bool failed = false;
    std::string error;
    double similarity = 0.0;
    AccuracyBreakdown accuracy;
    std::string response;
    bool budget_warning = false;
    int extra_tags = 0;    // spurious claims, flagged for audit, never penalized
    int extra_values = 0;
};

struct EvaluationReport {
    std::string model_name;
    std::vector<RecordResult> results;  // ordered by record id
    double mean_similarity = 0.0;       // over non-failed records
    double mean_accuracy = 0.0;
    int failed_count = 0;
    std::string config_hash;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static EvaluationReport from_json(const nlohmann::json& j);
    std::string to_csv() const;
};

struct EvalSettings {
    int budget_tokens = kDefaultPromptBudgetTokens;
    int concurrency = 4;
    std::string config_hash;
    std::uint64_t seed = 0;
};

EvaluationReport evaluate_suite(const std::vector<QARecord>& records, GatewayClient& gateway,
                                Embedder& embedder, const VariableRegistry& registry,
                                const EvalSettings& settings,
                                const ClaimGrammar& grammar = ClaimGrammar::defaults());

}  // namespace gridqa
