#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridqa/config.hpp"
#include "gridqa/eval.hpp"
#include "gridqa/gateway.hpp"
#include "gridqa/ingest.hpp"
#include "gridqa/records.hpp"

namespace gridqa {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: scriptability in CI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitGateway = 4;

struct HarnessConfig {
    bool synthetic = true;
    std::uint64_t synth_seed = 7;
    int rows = 5;
    int cols = 5;
    int regions = 2;

    std::string grid_csv;
    std::string region_csv;
    std::string mapping_path;

    std::string template_dir = "data/templates";
    std::uint64_t build_seed = 7;
    int sample_cells = 3;
    bool paraphrase_enabled = false;

    double split_fraction = 0.10;
    std::uint64_t split_seed = 7;

    GatewayConfig gateway;
    std::string embedder = "lexical";  // lexical | remote
    std::string replay_path;
    std::string grammar_path;
    int budget_tokens = kDefaultPromptBudgetTokens;

    std::string out_dir = "out";
    std::string config_hash;

    static HarnessConfig load(const std::string& path);
    VariableRegistry registry() const { return VariableRegistry::default_registry(); }
    ClaimGrammar grammar() const;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string stage;
    std::string config_hash;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, long> counts;
    std::vector<std::string> warnings;
    std::map<std::string, std::string> artifacts;  // path -> content hash
    std::string started;
    std::string finished;

    void add_artifact(const std::string& path);
    void write(const std::string& path) const;
};

std::string iso8601_now();
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Loads (or regenerates) the configured dataset; the gold ledger is non-empty
// only for synthetic datasets.
struct DatasetBundle {
    GridDataset dataset;
    GoldLedger ledger;
    std::vector<std::string> warnings;
};
DatasetBundle load_dataset(const HarnessConfig& cfg);

int cmd_synth(const HarnessConfig& cfg);
int cmd_build(const HarnessConfig& cfg);
int cmd_split(const HarnessConfig& cfg, const std::string& records_path);
int cmd_export(const HarnessConfig& cfg, const std::string& records_path,
               const std::string& out_path);
int cmd_eval(const HarnessConfig& cfg, const std::string& records_path,
             const std::string& echo_fixture_out = "");
int cmd_report(const std::vector<std::string>& report_paths, const std::string& out_dir);

// In-memory building blocks, reused by tests.
std::vector<QARecord> build_records(const DatasetBundle& data, const TemplateCatalog& catalog,
                                    const HarnessConfig& cfg, std::vector<std::string>& gate_failures);
std::map<std::string, std::string> make_echo_fixture(const std::vector<QARecord>& records,
                                                     const GatewayConfig& gateway_cfg,
                                                     const VariableRegistry& registry,
                                                     int budget_tokens);

}  // namespace gridqa
