#include "gridqa/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gridqa/hash.hpp"

namespace fs = std::filesystem;

namespace gridqa {

using nlohmann::json;
using nlohmann::ordered_json;

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SinkError(path);
    out << content;
    if (!out) throw SinkError(path);
}

void RunManifest::add_artifact(const std::string& path) {
    artifacts[path] = content_hash(read_file(path));
}

void RunManifest::write(const std::string& path) const {
    ordered_json j;
    j["tool_version"] = tool_version;
    j["stage"] = stage;
    j["config_hash"] = config_hash;
    j["seeds"] = seeds;
    j["counts"] = counts;
    j["warnings"] = warnings;
    j["artifacts"] = artifacts;
    j["started"] = started;
    j["finished"] = finished;
    write_file(path, j.dump(2) + "\n");
}

HarnessConfig HarnessConfig::load(const std::string& path) {
    ConfigDoc doc = ConfigDoc::parse_file(path);
    HarnessConfig cfg;
    const std::string mode = doc.get_string_or("dataset.mode", "synthetic");
    if (mode == "synthetic") {
        cfg.synthetic = true;
    } else if (mode == "files") {
        cfg.synthetic = false;
        cfg.grid_csv = doc.get_string("dataset.grid");
        cfg.region_csv = doc.get_string("dataset.region_map");
        cfg.mapping_path = doc.get_string("dataset.mapping");
    } else {
        throw ConfigError("dataset.mode must be synthetic or files");
    }
    cfg.synth_seed = static_cast<std::uint64_t>(doc.get_int_or("synthetic.seed", 7));
    cfg.rows = static_cast<int>(doc.get_int_or("synthetic.rows", 5));
    cfg.cols = static_cast<int>(doc.get_int_or("synthetic.cols", 5));
    cfg.regions = static_cast<int>(doc.get_int_or("synthetic.regions", 2));
    if (cfg.synthetic && (cfg.rows < 1 || cfg.cols < 1 || cfg.regions < 1))
        throw ConfigError("synthetic rows, cols and regions must be >= 1");

    cfg.template_dir = doc.get_string_or("templates.dir", cfg.template_dir);
    cfg.build_seed = static_cast<std::uint64_t>(doc.get_int_or("build.seed", 7));
    cfg.sample_cells = static_cast<int>(doc.get_int_or("build.sample_cells", 3));
    cfg.paraphrase_enabled = doc.get_bool_or("build.paraphrase", false);

    cfg.split_fraction = doc.get_double_or("split.fraction", 0.10);
    cfg.split_seed = static_cast<std::uint64_t>(doc.get_int_or("split.seed", 7));
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
        throw ConfigError("split.fraction must lie in (0, 1)");

    cfg.gateway.base_url = doc.get_string_or("gateway.base_url", cfg.gateway.base_url);
    cfg.gateway.model_name = doc.get_string_or("gateway.model", cfg.gateway.model_name);
    cfg.gateway.embedding_model_name =
        doc.get_string_or("gateway.embedding_model", cfg.gateway.embedding_model_name);
    cfg.gateway.temperature = doc.get_double_or("gateway.temperature", 0.0);
    cfg.gateway.timeout =
        std::chrono::milliseconds(doc.get_int_or("gateway.timeout_ms", 30000));
    cfg.gateway.max_retries = static_cast<int>(doc.get_int_or("gateway.max_retries", 3));
    cfg.gateway.concurrency_limit =
        static_cast<int>(doc.get_int_or("gateway.concurrency", 4));
    cfg.gateway.backoff_base_ms = doc.get_double_or("gateway.backoff_base_ms", 250.0);
    cfg.gateway.cache_enabled = doc.get_bool_or("gateway.cache", true);
    cfg.gateway.api_key = doc.get_string_or("gateway.api_key", "");
    if (cfg.gateway.api_key.empty()) {
        if (const char* key = std::getenv("GRIDQA_API_KEY")) cfg.gateway.api_key = key;
    }
    cfg.gateway.validate();

    cfg.embedder = doc.get_string_or("eval.embedder", "lexical");
    if (cfg.embedder != "lexical" && cfg.embedder != "remote")
        throw ConfigError("eval.embedder must be lexical or remote");
    cfg.replay_path = doc.get_string_or("eval.replay", "");
    cfg.grammar_path = doc.get_string_or("eval.grammar_file", "");
    cfg.budget_tokens =
        static_cast<int>(doc.get_int_or("eval.budget_tokens", kDefaultPromptBudgetTokens));

    cfg.out_dir = doc.get_string_or("output.dir", "out");
    cfg.config_hash = content_hash(doc.raw_text());
    return cfg;
}

ClaimGrammar HarnessConfig::grammar() const {
    return grammar_path.empty() ? ClaimGrammar::defaults() : ClaimGrammar::load_file(grammar_path);
}

DatasetBundle load_dataset(const HarnessConfig& cfg) {
    DatasetBundle bundle;
    if (cfg.synthetic) {
        auto synth = generate_synthetic(cfg.synth_seed, cfg.rows, cfg.cols, cfg.registry(),
                                        cfg.regions);
        bundle.dataset = std::move(synth.dataset);
        bundle.ledger = std::move(synth.ledger);
        return bundle;
    }
    ColumnMapping mapping = ColumnMapping::from_config(ConfigDoc::parse_file(cfg.mapping_path));
    std::ifstream grid(cfg.grid_csv, std::ios::binary);
    if (!grid) throw IoError("cannot open " + cfg.grid_csv);
    LoadResult loaded = load_grid_table(grid, mapping, cfg.registry());
    std::ifstream regions(cfg.region_csv, std::ios::binary);
    if (!regions) throw IoError("cannot open " + cfg.region_csv);
    RegionMapResult region_map = load_region_map(regions);
    bundle.dataset = std::move(loaded.dataset);
    bundle.dataset.regions = std::move(region_map.regions);
    for (const auto& [row, reason] : loaded.malformed_rows)
        bundle.warnings.push_back("grid row " + std::to_string(row) + ": " + reason);
    for (const auto& [row, reason] : region_map.malformed_rows)
        bundle.warnings.push_back("region row " + std::to_string(row) + ": " + reason);
    for (const auto& w : loaded.warnings) bundle.warnings.push_back(w);
    for (const auto& w : region_map.warnings) bundle.warnings.push_back(w);
    return bundle;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(const HarnessConfig& cfg) {
    if (!cfg.synthetic) throw ConfigError("synth requires dataset.mode = synthetic");
    RunManifest manifest;
    manifest.stage = "synth";
    manifest.config_hash = cfg.config_hash;
    manifest.started = iso8601_now();
    manifest.seeds["synth"] = cfg.synth_seed;

    auto synth = generate_synthetic(cfg.synth_seed, cfg.rows, cfg.cols, cfg.registry(),
                                    cfg.regions);
    const VariableRegistry registry = cfg.registry();

    // grid CSV with standard column names
    std::vector<ValueColumn> columns;
    for (const auto& [key, var] : registry.all()) {
        columns.push_back({key, TimePeriod::Historical, std::nullopt});
        for (TimePeriod p : {TimePeriod::MidCentury, TimePeriod::EndCentury})
            for (Scenario s : {Scenario::Rcp45, Scenario::Rcp85}) columns.push_back({key, p, s});
    }
    std::ostringstream grid;
    grid << "Crossmodel";
    for (const auto& vc : columns) grid << "," << standard_column_name(vc);
    grid << "\n";
    for (const auto& [cell, region] : synth.dataset.regions) {
        grid << format_cell_tag(cell);
        for (const auto& vc : columns) {
            const auto& m =
                synth.dataset.entries.at({cell, vc.variable, vc.period, vc.scenario});
            grid << "," << fmt2(m.value);
        }
        grid << "\n";
    }
    const std::string grid_path = cfg.out_dir + "/grid.csv";
    write_file(grid_path, grid.str());

    std::ostringstream regions;
    regions << "tag,state,county\n";
    for (const auto& [cell, region] : synth.dataset.regions)
        regions << format_cell_tag(cell) << "," << csv_escape(region.state) << ","
                << csv_escape(region.county.value_or("")) << "\n";
    const std::string region_path = cfg.out_dir + "/regions.csv";
    write_file(region_path, regions.str());

    ColumnMapping mapping;
    mapping.tag_column = "Crossmodel";
    for (const auto& vc : columns) mapping.value_columns[standard_column_name(vc)] = vc;
    const std::string mapping_path = cfg.out_dir + "/mapping.toml";
    write_file(mapping_path, mapping.to_config_text());

    std::ostringstream ledger;
    for (const auto& [key, m] : synth.ledger) {
        ordered_json row;
        row["tag"] = format_cell_tag(key.cell);
        row["variable"] = key.variable;
        row["period"] = period_key(key.period);
        row["scenario"] = key.scenario ? json(scenario_key(*key.scenario)) : json(nullptr);
        row["value"] = m.value;
        row["unit"] = m.unit;
        ledger << row.dump() << "\n";
    }
    const std::string ledger_path = cfg.out_dir + "/ledger.jsonl";
    write_file(ledger_path, ledger.str());

    manifest.counts["cells"] = static_cast<long>(synth.dataset.regions.size());
    manifest.counts["entries"] = static_cast<long>(synth.dataset.entries.size());
    for (const auto& p : {grid_path, region_path, mapping_path, ledger_path})
        manifest.add_artifact(p);
    manifest.finished = iso8601_now();
    manifest.write(cfg.out_dir + "/synth_manifest.json");
    return kExitOk;
}

// --- build -------------------------------------------------------------------

std::vector<QARecord> build_records(const DatasetBundle& data, const TemplateCatalog& catalog,
                                    const HarnessConfig& cfg,
                                    std::vector<std::string>& gate_failures) {
    const VariableRegistry& registry = data.dataset.variables;
    const ClaimGrammar grammar = cfg.grammar();

    std::vector<CellId> cells;
    for (const auto& [cell, region] : data.dataset.regions) cells.push_back(cell);
    if (cells.empty()) throw ConfigError("dataset has no cells");
    // deterministic sample without replacement
    SplitMix64 rng(cfg.build_seed ^ 0xce11ull);
    std::vector<CellId> sampled;
    const int want = std::min<int>(cfg.sample_cells, static_cast<int>(cells.size()));
    for (int i = 0; i < want; ++i) {
        std::size_t idx = rng.below(cells.size());
        sampled.push_back(cells[idx]);
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(idx));
    }

    std::vector<std::string> var_keys;
    for (const auto& [key, var] : registry.all()) var_keys.push_back(key);

    const std::vector<TimePeriod> all_periods = {TimePeriod::Historical, TimePeriod::MidCentury,
                                                 TimePeriod::EndCentury};
    std::vector<QARecord> records;
    for (const CellId& cell : sampled) {
        for (TaskKind task : kAllTasks) {
            for (const QaTemplate* tmpl : catalog.for_task(task)) {
                const std::uint64_t record_seed =
                    fnv1a64(format_cell_tag(cell) + "|" + tmpl->id, cfg.build_seed);
                SplitMix64 pick(record_seed);
                const std::string var = var_keys[pick.below(var_keys.size())];
                InputContext ctx = build_input_context(data.dataset, cell, {var}, all_periods);
                InstantiatedQa qa = instantiate_template(*tmpl, ctx, registry, record_seed);
                QARecord record;
                record.task = task;
                record.cell = cell;
                record.user = qa.question;
                record.input = std::move(ctx);
                record.assistant = qa.assistant;
                record.gold = std::move(qa.gold);
                record.id = make_record_id(task, cell, {var}, tmpl->id, cfg.build_seed);

                ExtractedClaims found = extract_claims(record.assistant, registry, grammar);
                const AccuracyBreakdown echo = score_accuracy(record.gold, found, registry, grammar);
                if (!claims_cover_gold(found, record.gold, grammar) || echo.overall != 1.0)
                    gate_failures.push_back(record.id + " (" + tmpl->id + ")");
                records.push_back(std::move(record));
            }
        }
    }
    std::sort(records.begin(), records.end(),
              [](const QARecord& a, const QARecord& b) { return a.id < b.id; });
    return records;
}

int cmd_build(const HarnessConfig& cfg) {
    RunManifest manifest;
    manifest.stage = "build";
    manifest.config_hash = cfg.config_hash;
    manifest.started = iso8601_now();
    manifest.seeds["build"] = cfg.build_seed;

    DatasetBundle data = load_dataset(cfg);
    ValidationReport validation = validate_dataset(data.dataset);
    if (!validation.complete) {
        std::cerr << "dataset validation failed:";
        for (const auto& [row, reason] : validation.malformed_rows)
            std::cerr << "\n  " << reason;
        for (const auto& cell : validation.missing_region_cells)
            std::cerr << "\n  no region for " << format_cell_tag(cell);
        std::cerr << "\n";
        return kExitValidation;
    }

    TemplateCatalog catalog = TemplateCatalog::load_dir(cfg.template_dir);
    std::vector<std::string> gate_failures;
    std::vector<QARecord> records = build_records(data, catalog, cfg, gate_failures);
    if (!gate_failures.empty()) {
        std::cerr << "self-consistency gate failed for " << gate_failures.size() << " record(s):";
        for (const auto& id : gate_failures) std::cerr << "\n  " << id;
        std::cerr << "\n";
        return kExitValidation;
    }

    std::ostringstream out;
    export_archive_jsonl(records, out);
    const std::string records_path = cfg.out_dir + "/records.jsonl";
    write_file(records_path, out.str());

    manifest.counts["records"] = static_cast<long>(records.size());
    manifest.warnings = data.warnings;
    manifest.add_artifact(records_path);
    manifest.finished = iso8601_now();
    manifest.write(cfg.out_dir + "/build_manifest.json");
    return kExitOk;
}

// --- split / export ----------------------------------------------------------

int cmd_split(const HarnessConfig& cfg, const std::string& records_path) {
    RunManifest manifest;
    manifest.stage = "split";
    manifest.config_hash = cfg.config_hash;
    manifest.started = iso8601_now();
    manifest.seeds["split"] = cfg.split_seed;

    std::ifstream in(records_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + records_path);
    std::vector<QARecord> records = import_archive_jsonl(in);
    auto [train, test] = split_records(records, cfg.split_fraction, cfg.split_seed);

    std::ostringstream train_out, test_out;
    export_archive_jsonl(train, train_out);
    export_archive_jsonl(test, test_out);
    const std::string train_path = cfg.out_dir + "/train.jsonl";
    const std::string test_path = cfg.out_dir + "/test.jsonl";
    write_file(train_path, train_out.str());
    write_file(test_path, test_out.str());

    manifest.counts["train"] = static_cast<long>(train.size());
    manifest.counts["test"] = static_cast<long>(test.size());
    manifest.add_artifact(train_path);
    manifest.add_artifact(test_path);
    manifest.finished = iso8601_now();
    manifest.write(cfg.out_dir + "/split_manifest.json");
    return kExitOk;
}

int cmd_export(const HarnessConfig& cfg, const std::string& records_path,
               const std::string& out_path) {
    RunManifest manifest;
    manifest.stage = "export";
    manifest.config_hash = cfg.config_hash;
    manifest.started = iso8601_now();

    std::ifstream in(records_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + records_path);
    std::vector<QARecord> records = import_archive_jsonl(in);
    std::ostringstream out;
    const int count = export_training_jsonl(records, cfg.registry(), out);
    const std::string path = out_path.empty() ? cfg.out_dir + "/train_export.jsonl" : out_path;
    write_file(path, out.str());

    manifest.counts["examples"] = count;
    manifest.add_artifact(path);
    manifest.finished = iso8601_now();
    manifest.write(cfg.out_dir + "/export_manifest.json");
    return kExitOk;
}

// --- eval / report -----------------------------------------------------------

std::map<std::string, std::string> make_echo_fixture(const std::vector<QARecord>& records,
                                                     const GatewayConfig& gateway_cfg,
                                                     const VariableRegistry& registry,
                                                     int budget_tokens) {
    std::map<std::string, std::string> fixture;
    for (const auto& r : records) {
        PromptBundle prompt = assemble_prompt(r, registry, budget_tokens);
        fixture[chat_request_hash(gateway_cfg.model_name, prompt.system, prompt.user,
                                  gateway_cfg.temperature)] = r.assistant;
    }
    return fixture;
}

int cmd_eval(const HarnessConfig& cfg, const std::string& records_path,
             const std::string& echo_fixture_out) {
    RunManifest manifest;
    manifest.stage = "eval";
    manifest.config_hash = cfg.config_hash;
    manifest.started = iso8601_now();

    std::ifstream in(records_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + records_path);
    std::vector<QARecord> records = import_archive_jsonl(in);
    const VariableRegistry registry = cfg.registry();

    if (!echo_fixture_out.empty()) {
        write_replay_fixture(make_echo_fixture(records, cfg.gateway, registry, cfg.budget_tokens),
                             echo_fixture_out);
        manifest.counts["fixture_entries"] = static_cast<long>(records.size());
        manifest.add_artifact(echo_fixture_out);
        manifest.finished = iso8601_now();
        manifest.write(cfg.out_dir + "/eval_manifest.json");
        return kExitOk;
    }

    std::shared_ptr<Transport> transport;
    if (!cfg.replay_path.empty())
        transport = std::make_shared<ReplayTransport>(ReplayTransport::from_file(cfg.replay_path));
    else
        transport = std::make_shared<HttpTransport>(cfg.gateway.base_url, cfg.gateway.api_key,
                                                    cfg.gateway.timeout);
    GatewayClient gateway(cfg.gateway, transport);
    const std::string cache_path = cfg.out_dir + "/response_cache.jsonl";
    gateway.load_cache(cache_path);

    std::unique_ptr<Embedder> embedder;
    std::shared_ptr<GatewayClient> embed_client;
    if (cfg.embedder == "remote") {
        embed_client = std::make_shared<GatewayClient>(cfg.gateway, transport);
        embedder = std::make_unique<RemoteEmbedder>(embed_client);
    } else {
        embedder = std::make_unique<LexicalEmbedder>();
    }

    EvalSettings settings;
    settings.budget_tokens = cfg.budget_tokens;
    settings.concurrency = cfg.gateway.concurrency_limit;
    settings.config_hash = cfg.config_hash;
    settings.seed = cfg.build_seed;

    EvaluationReport report;
    try {
        report = evaluate_suite(records, gateway, *embedder, registry, settings, cfg.grammar());
    } catch (const AllRecordsFailed&) {
        std::cerr << "all records failed during evaluation\n";
        return kExitGateway;
    }
    gateway.save_cache(cache_path);

    const std::string report_path = cfg.out_dir + "/report.json";
    const std::string csv_path = cfg.out_dir + "/report.csv";
    write_file(report_path, report.to_json().dump(2) + "\n");
    write_file(csv_path, report.to_csv());

    manifest.counts["records"] = static_cast<long>(report.results.size());
    manifest.counts["failed"] = report.failed_count;
    manifest.seeds["build"] = cfg.build_seed;
    manifest.add_artifact(report_path);
    manifest.add_artifact(csv_path);
    manifest.finished = iso8601_now();
    manifest.write(cfg.out_dir + "/eval_manifest.json");
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& report_paths, const std::string& out_dir) {
    if (report_paths.empty()) throw ConfigError("report requires at least one report file");
    std::vector<EvaluationReport> reports;
    for (const auto& path : report_paths)
        reports.push_back(EvaluationReport::from_json(json::parse(read_file(path))));

    double best_sim = reports[0].mean_similarity, best_acc = reports[0].mean_accuracy;
    for (const auto& r : reports) {
        best_sim = std::max(best_sim, r.mean_similarity);
        best_acc = std::max(best_acc, r.mean_accuracy);
    }

    std::ostringstream table;
    table << "Model                     Similarity Score  Accuracy Score\n";
    table << "--------------------------------------------------------\n";
    ordered_json rows = ordered_json::array();
    for (const auto& r : reports) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-25s %10.4f%s %13.4f%s\n", r.model_name.c_str(),
                      r.mean_similarity, r.mean_similarity == best_sim ? "*" : " ",
                      r.mean_accuracy, r.mean_accuracy == best_acc ? "*" : " ");
        table << line;
        ordered_json row;
        row["model_name"] = r.model_name;
        row["mean_similarity"] = r.mean_similarity;
        row["mean_accuracy"] = r.mean_accuracy;
        row["best_similarity"] = r.mean_similarity == best_sim;
        row["best_accuracy"] = r.mean_accuracy == best_acc;
        rows.push_back(row);
    }
    std::cout << table.str();
    ordered_json j;
    j["schema_version"] = 1;
    j["rows"] = rows;
    write_file(out_dir + "/comparison.txt", table.str());
    write_file(out_dir + "/comparison.json", j.dump(2) + "\n");
    return kExitOk;
}

}  // namespace gridqa
