#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridqa/gateway.hpp"
#include "gridqa/grid_model.hpp"

namespace gridqa {

// "52.00"; all user-facing numbers are rendered at 2 decimal places
std::string fmt2(double v);
// "+2.50" / "-1.20"; signed rendering for deltas and deviations
std::string fmt2_signed(double v);

struct VariableBlock {
    std::string unit;
    std::optional<double> historical;
    std::map<std::pair<TimePeriod, Scenario>, double> projections;
    std::map<std::pair<TimePeriod, std::optional<Scenario>>, AggregateStats> regional;
};

struct InputContext {
    CellId cell;
    Region region;
    std::vector<TimePeriod> periods;
    std::map<std::string, VariableBlock> variables;  // variable key -> block
};

InputContext build_input_context(const GridDataset& ds, const CellId& cell,
                                 const std::vector<std::string>& vars,
                                 const std::vector<TimePeriod>& periods);

// Deterministic text rendering of a context: the structured input block that
// precedes the user question in prompts and training examples.
std::string serialize_context(const InputContext& ctx, const VariableRegistry& registry);

nlohmann::ordered_json context_to_json(const InputContext& ctx);
InputContext context_from_json(const nlohmann::json& j);

enum class TaskKind { VariableRetrieval, TrendAnalysis, ScenarioComparison,
                      ContextualInterpretation };

std::string task_kind_name(TaskKind t);
std::optional<TaskKind> parse_task_kind(const std::string& name);
inline constexpr TaskKind kAllTasks[] = {TaskKind::VariableRetrieval, TaskKind::TrendAnalysis,
                                         TaskKind::ScenarioComparison,
                                         TaskKind::ContextualInterpretation};

struct GoldClaims {
    std::set<std::string> cell_tags;
    std::set<std::string> variables;
    std::set<std::string> units;
    std::set<Scenario> scenarios;
    std::vector<std::pair<double, std::string>> values;
};

struct QARecord {
    std::string id;
    TaskKind task = TaskKind::VariableRetrieval;
    CellId cell;
    std::string user;       // question text
    InputContext input;
    std::string assistant;  // reference answer text
    GoldClaims gold;
};

struct QaTemplate {
    std::string id;
    TaskKind task = TaskKind::VariableRetrieval;
    bool both_scenarios = false;  // question leaves the scenario unspecified
    std::string question;
    std::string answer;
};

class TemplateCatalog {
public:
    static TemplateCatalog load_dir(const std::string& dir);
    void add(QaTemplate t);
    const QaTemplate& get(const std::string& id) const;
    std::vector<const QaTemplate*> for_task(TaskKind task) const;
    std::size_t size() const { return templates_.size(); }

private:
    std::map<std::string, QaTemplate> templates_;
};

struct InstantiatedQa {
    std::string question;
    std::string assistant;
    GoldClaims gold;
};

// Question/answer realized from the template with exact 2-decimal values out
// of the context; gold claims are built structurally, never parsed from text.
InstantiatedQa instantiate_template(const QaTemplate& tmpl, const InputContext& ctx,
                                    const VariableRegistry& registry, std::uint64_t rng_seed);

std::string make_record_id(TaskKind task, const CellId& cell,
                           const std::vector<std::string>& variable_keys,
                           const std::string& template_id, std::uint64_t seed);

struct ParaphrasePolicy {
    double temperature = 0.7;
    int max_attempts = 1;
};

struct ParaphraseOutcome {
    QARecord record;
    bool accepted = false;
    std::string note;
};

// Rewrites question and answer through the gateway; gold is untouched. The
// rewrite is kept only if preserves_gold accepts the new answer, otherwise the
// original record is returned with a note.
ParaphraseOutcome paraphrase(
    const QARecord& record, GatewayClient& gateway, const ParaphrasePolicy& policy,
    const std::function<bool(const std::string&, const GoldClaims&)>& preserves_gold);

std::pair<std::vector<QARecord>, std::vector<QARecord>> split_records(
    const std::vector<QARecord>& records, double test_fraction, std::uint64_t seed);

// Training JSONL: {"id","user","input","assistant"} with the context rendered
// as the structured text block.
int export_training_jsonl(const std::vector<QARecord>& records, const VariableRegistry& registry,
                          std::ostream& sink);

// Full-fidelity archive (context + gold claims), used between pipeline stages.
nlohmann::ordered_json record_to_json(const QARecord& r);
QARecord record_from_json(const nlohmann::json& j);
int export_archive_jsonl(const std::vector<QARecord>& records, std::ostream& sink);
std::vector<QARecord> import_archive_jsonl(std::istream& source);

}  // namespace gridqa
