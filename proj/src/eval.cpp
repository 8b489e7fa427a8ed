#include "gridqa/eval.hpp"

#include "gridqa/config.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace gridqa {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* kSystemPrompt =
    "You are an assistant for gridded climate projection data. Answer using only the structured "
    "input block provided. Always include the grid cell tag, the variable name, and numeric "
    "values with their units. Name each RCP scenario you reference; when the question does not "
    "name a scenario, report both RCP 4.5 and RCP 8.5.";

}  // namespace

PromptBundle assemble_prompt(const QARecord& record, const VariableRegistry& registry,
                             int budget_tokens) {
    PromptBundle bundle;
    bundle.system = kSystemPrompt;
    bundle.user = serialize_context(record.input, registry) + "\n" + record.user;
    const std::size_t chars = bundle.system.size() + bundle.user.size();
    bundle.token_estimate = static_cast<int>((chars + 3) / 4);
    bundle.over_budget = bundle.token_estimate > budget_tokens;
    return bundle;
}

// --- Claim grammar file ------------------------------------------------------

ClaimGrammar ClaimGrammar::load_file(const std::string& path) {
    ConfigDoc doc = ConfigDoc::parse_file(path);
    ClaimGrammar g;
    g.version = static_cast<int>(doc.get_int_or("grammar.version", 1));
    g.tag_pattern = doc.get_string_or("grammar.tag_pattern", g.tag_pattern);
    g.value_pattern = doc.get_string_or("grammar.value_pattern", g.value_pattern);
    g.value_exact_tolerance =
        doc.get_double_or("grammar.value_exact_tolerance", g.value_exact_tolerance);
    g.value_relative_tolerance =
        doc.get_double_or("grammar.value_relative_tolerance", g.value_relative_tolerance);
    auto scen = doc.section("grammar.scenarios");
    if (!scen.empty()) {
        g.scenario_patterns.clear();
        for (const auto& [key, pattern] : scen) {
            auto s = key.rfind("rcp45", 0) == 0   ? Scenario::Rcp45
                     : key.rfind("rcp85", 0) == 0 ? Scenario::Rcp85
                                                  : throw ConfigError(
                                                        "scenario pattern key must start with "
                                                        "rcp45 or rcp85: " + key);
            g.scenario_patterns.emplace_back(pattern, s);
        }
    }
    return g;
}

void ClaimGrammar::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SinkError(path);
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '\\' || c == '"') q.push_back('\\');
            q.push_back(c);
        }
        return q + "\"";
    };
    out << "[grammar]\n";
    out << "version = " << version << "\n";
    out << "tag_pattern = " << quote(tag_pattern) << "\n";
    out << "value_pattern = " << quote(value_pattern) << "\n";
    out << "value_exact_tolerance = " << value_exact_tolerance << "\n";
    out << "value_relative_tolerance = " << value_relative_tolerance << "\n\n";
    out << "[grammar.scenarios]\n";
    std::map<std::string, int> counters;
    for (const auto& [pattern, s] : scenario_patterns) {
        std::string prefix = scenario_key(s);
        out << prefix << "_" << ++counters[prefix] << " = " << quote(pattern) << "\n";
    }
}

// --- Extraction --------------------------------------------------------------

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

void blank(std::string& text, std::size_t pos, std::size_t len) {
    for (std::size_t i = pos; i < pos + len && i < text.size(); ++i) text[i] = ' ';
}

bool is_excluded_year(const std::string& token, double value) {
    if (token.find('.') != std::string::npos) return false;
    const double a = std::fabs(value);
    return (a >= 1971 && a <= 2000) || (a >= 2041 && a <= 2100);
}

struct NumberHit {
    std::size_t begin = 0;
    std::size_t end = 0;
    double value = 0.0;
};

struct UnitHit {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string canonical;
    bool needs_adjacency = false;  // short alphabetic aliases like "in", "F"
};

// tokens (runs containing alphanumerics) strictly inside [begin, end)
int tokens_between(const std::string& text, std::size_t begin, std::size_t end) {
    int count = 0;
    bool in_token = false;
    bool token_has_alnum = false;
    for (std::size_t i = begin; i < end && i < text.size(); ++i) {
        if (std::isspace(static_cast<unsigned char>(text[i]))) {
            if (in_token && token_has_alnum) ++count;
            in_token = token_has_alnum = false;
        } else {
            in_token = true;
            if (is_word_char(text[i])) token_has_alnum = true;
        }
    }
    if (in_token && token_has_alnum) ++count;
    return count;
}

}  // namespace

ExtractedClaims extract_claims(const std::string& text, const VariableRegistry& registry,
                               const ClaimGrammar& grammar) {
    ExtractedClaims claims;
    std::string work = text;

    // 1. cell tags, canonicalized and blanked so their digits never look like values
    {
        std::regex tag_re(grammar.tag_pattern);
        auto begin = std::sregex_iterator(work.begin(), work.end(), tag_re);
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (auto it = begin; it != std::sregex_iterator(); ++it) {
            const std::size_t pos = static_cast<std::size_t>(it->position());
            const std::size_t len = static_cast<std::size_t>(it->length());
            if (pos > 0 && is_word_char(work[pos - 1])) continue;
            if (pos + len < work.size() && is_word_char(work[pos + len])) continue;
            claims.cell_tags.insert(format_cell_tag(parse_cell_tag(it->str())));
            spans.emplace_back(pos, len);
        }
        for (auto [pos, len] : spans) blank(work, pos, len);
    }

    // 2. scenarios, tolerant spellings, blanked so 4.5/8.5 never count as values
    for (const auto& [pattern, scenario] : grammar.scenario_patterns) {
        std::regex re(pattern);
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (auto it = std::sregex_iterator(work.begin(), work.end(), re);
             it != std::sregex_iterator(); ++it) {
            claims.scenarios.insert(scenario);
            spans.emplace_back(static_cast<std::size_t>(it->position()),
                               static_cast<std::size_t>(it->length()));
        }
        for (auto [pos, len] : spans) blank(work, pos, len);
    }

    const std::string lowered = lower(work);

    // 3. variables and family-level mentions
    auto find_word = [&](const std::string& needle) {
        std::vector<std::size_t> hits;
        std::size_t pos = 0;
        while ((pos = lowered.find(needle, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !is_word_char(lowered[pos - 1]);
            const std::size_t end = pos + needle.size();
            const bool right_ok = end >= lowered.size() || !is_word_char(lowered[end]);
            if (left_ok && right_ok) hits.push_back(pos);
            pos = end;
        }
        return hits;
    };
    for (const auto& [key, var] : registry.all()) {
        std::vector<std::string> names{lower(var.display_name)};
        for (const auto& syn : var.synonyms) names.push_back(lower(syn));
        for (const auto& name : names) {
            if (!find_word(name).empty()) {
                claims.variables.insert(key);
                claims.families.insert(var.family);
                break;
            }
        }
        if (!var.family.empty() && !find_word(lower(var.family)).empty())
            claims.families.insert(var.family);
    }

    // 4. numeric values (years and tag digits already excluded)
    std::vector<NumberHit> numbers;
    {
        std::regex value_re(grammar.value_pattern);
        for (auto it = std::sregex_iterator(work.begin(), work.end(), value_re);
             it != std::sregex_iterator(); ++it) {
            const std::size_t pos = static_cast<std::size_t>(it->position());
            const std::size_t len = static_cast<std::size_t>(it->length());
            if (pos > 0 && (is_word_char(work[pos - 1]) || work[pos - 1] == '.')) continue;
            std::string token = it->str();
            std::string digits;
            for (char c : token)
                if (c != ',') digits.push_back(c);
            const double value = std::strtod(digits.c_str(), nullptr);
            if (is_excluded_year(digits, value)) continue;
            numbers.push_back({pos, pos + len, value});
        }
    }

    // 5. unit mentions
    std::vector<UnitHit> unit_hits;
    for (const auto& [alias, canonical] : registry.alias_index()) {
        const bool pure_alpha =
            std::all_of(alias.begin(), alias.end(), [](unsigned char c) {
                return std::isalpha(c) || c == ' ';
            });
        const bool ambiguous =
            pure_alpha && alias.find(' ') == std::string::npos && alias.size() <= 2;
        std::size_t pos = 0;
        while ((pos = lowered.find(alias, pos)) != std::string::npos) {
            const std::size_t end = pos + alias.size();
            bool ok;
            if (pure_alpha) {
                ok = (pos == 0 || !is_word_char(lowered[pos - 1])) &&
                     (end >= lowered.size() || !is_word_char(lowered[end]));
            } else {
                ok = end >= lowered.size() || !is_word_char(lowered[end]);
            }
            if (ok) unit_hits.push_back({pos, end, canonical, ambiguous});
            pos = end;
        }
    }
    std::sort(unit_hits.begin(), unit_hits.end(),
              [](const UnitHit& a, const UnitHit& b) { return a.begin < b.begin; });
    // longest hit wins at overlapping positions ("miles per hour" over a bare "F")
    {
        std::vector<UnitHit> kept;
        for (const auto& h : unit_hits) {
            if (!kept.empty() && h.begin < kept.back().end) {
                if (h.end - h.begin > kept.back().end - kept.back().begin) kept.back() = h;
                continue;
            }
            kept.push_back(h);
        }
        unit_hits = std::move(kept);
    }

    // 6. attach units to adjacent values and collect the unit set
    auto gap_has_number = [&](std::size_t begin, std::size_t end) {
        for (const auto& n : numbers)
            if (n.begin >= begin && n.begin < end) return true;
        return false;
    };
    std::set<std::size_t> used_unit_hits;
    for (const auto& n : numbers) {
        std::optional<std::string> unit;
        std::size_t best_gap = std::string::npos;
        for (std::size_t i = 0; i < unit_hits.size(); ++i) {
            const auto& h = unit_hits[i];
            if (h.begin >= n.end) {
                if (gap_has_number(n.end, h.begin)) continue;
                if (tokens_between(work, n.end, h.begin) > 2) continue;
                if (h.begin - n.end < best_gap) {
                    best_gap = h.begin - n.end;
                    unit = h.canonical;
                    used_unit_hits.insert(i);
                }
            } else if (h.end <= n.begin && !unit) {
                if (gap_has_number(h.end, n.begin)) continue;
                if (tokens_between(work, h.end, n.begin) > 1) continue;
                unit = h.canonical;
                used_unit_hits.insert(i);
            }
        }
        claims.values.emplace_back(n.value, unit);
    }
    for (std::size_t i = 0; i < unit_hits.size(); ++i) {
        if (unit_hits[i].needs_adjacency && !used_unit_hits.count(i)) continue;
        claims.units.insert(unit_hits[i].canonical);
    }
    return claims;
}

// --- Scoring -----------------------------------------------------------------

namespace {

bool value_matched(double gold, const ExtractedClaims& found, double tol) {
    for (const auto& [v, u] : found.values)
        if (std::fabs(v - gold) <= tol) return true;
    return false;
}

bool value_matched_rel(double gold, const ExtractedClaims& found, double rel) {
    for (const auto& [v, u] : found.values)
        if (std::fabs(v - gold) <= rel * std::fabs(gold)) return true;
    return false;
}

}  // namespace

double score_component(const GoldClaims& gold, const ExtractedClaims& found, Component component,
                       const VariableRegistry& registry, const ClaimGrammar& grammar) {
    switch (component) {
        case Component::Cell: {
            if (found.cell_tags == gold.cell_tags) return 1.0;
            for (const auto& f : found.cell_tags) {
                CellId fc = parse_cell_tag(f);
                for (const auto& g : gold.cell_tags) {
                    CellId gc = parse_cell_tag(g);
                    if (fc.row == gc.row || fc.col == gc.col) return 0.5;
                }
            }
            return 0.0;
        }
        case Component::Variable: {
            bool all_exact = true, all_family = true;
            for (const auto& g : gold.variables) {
                const bool exact = found.variables.count(g) > 0;
                const std::string family = registry.contains(g) ? registry.get(g).family : "";
                const bool family_hit = exact || (!family.empty() && found.families.count(family));
                all_exact = all_exact && exact;
                all_family = all_family && family_hit;
            }
            if (all_exact) return 1.0;
            if (all_family) return 0.5;
            return 0.0;
        }
        case Component::Units: {
            if (gold.units.empty()) return 1.0;
            bool all_exact = true, all_dimension = true;
            for (const auto& g : gold.units) {
                const bool exact = found.units.count(g) > 0;
                bool dim_hit = exact;
                if (!dim_hit) {
                    auto gdim = registry.unit_dimension(g);
                    if (gdim) {
                        for (const auto& f : found.units) {
                            auto fdim = registry.unit_dimension(f);
                            if (fdim && *fdim == *gdim && f != g) {
                                dim_hit = true;
                                break;
                            }
                        }
                    }
                }
                all_exact = all_exact && exact;
                all_dimension = all_dimension && dim_hit;
            }
            if (all_exact) return 1.0;
            if (all_dimension) return 0.5;
            return 0.0;
        }
        case Component::Scenario: {
            if (found.scenarios == gold.scenarios) return 1.0;
            if (!found.scenarios.empty() &&
                std::includes(gold.scenarios.begin(), gold.scenarios.end(),
                              found.scenarios.begin(), found.scenarios.end()))
                return 0.5;  // proper non-empty subset: the "arbitrary single scenario" failure
            return 0.0;
        }
        case Component::Values: {
            if (gold.values.empty()) return 1.0;
            int exact_count = 0;
            bool all_exact = true, all_rel = true;
            for (const auto& [g, u] : gold.values) {
                const bool exact = value_matched(g, found, grammar.value_exact_tolerance);
                if (exact) ++exact_count;
                all_exact = all_exact && exact;
                all_rel = all_rel &&
                          (exact || value_matched_rel(g, found, grammar.value_relative_tolerance));
            }
            if (all_exact) return 1.0;
            const auto n = static_cast<int>(gold.values.size());
            if (all_rel || exact_count * 2 >= n) return 0.5;
            return 0.0;
        }
    }
    return 0.0;
}

AccuracyBreakdown score_accuracy(const GoldClaims& gold, const ExtractedClaims& found,
                                 const VariableRegistry& registry, const ClaimGrammar& grammar) {
    AccuracyBreakdown b;
    b.cell = score_component(gold, found, Component::Cell, registry, grammar);
    b.variable = score_component(gold, found, Component::Variable, registry, grammar);
    b.units = score_component(gold, found, Component::Units, registry, grammar);
    b.scenario = score_component(gold, found, Component::Scenario, registry, grammar);
    b.values = score_component(gold, found, Component::Values, registry, grammar);
    b.overall = (b.cell + b.variable + b.units + b.scenario + b.values) / 5.0;
    return b;
}

double score_similarity(const std::string& reference, const std::string& candidate,
                        Embedder& embedder) {
    auto vectors = embedder.embed({reference, candidate});
    return cosine(vectors[0], vectors[1]);
}

bool claims_cover_gold(const ExtractedClaims& found, const GoldClaims& gold,
                       const ClaimGrammar& grammar) {
    for (const auto& t : gold.cell_tags)
        if (!found.cell_tags.count(t)) return false;
    for (const auto& v : gold.variables)
        if (!found.variables.count(v)) return false;
    for (const auto& u : gold.units)
        if (!found.units.count(u)) return false;
    for (Scenario s : gold.scenarios)
        if (!found.scenarios.count(s)) return false;
    for (const auto& [v, u] : gold.values)
        if (!value_matched(v, found, grammar.value_exact_tolerance)) return false;
    return true;
}

// --- Suite evaluation --------------------------------------------------------

EvaluationReport evaluate_suite(const std::vector<QARecord>& records, GatewayClient& gateway,
                                Embedder& embedder, const VariableRegistry& registry,
                                const EvalSettings& settings, const ClaimGrammar& grammar) {
    if (records.empty()) throw ConfigError("evaluate_suite requires at least one record");
    EvaluationReport report;
    report.model_name = gateway.config().model_name;
    report.config_hash = settings.config_hash;
    report.seed = settings.seed;
    report.results.resize(records.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= records.size()) return;
            const QARecord& record = records[i];
            RecordResult& row = report.results[i];
            row.record_id = record.id;
            try {
                PromptBundle prompt = assemble_prompt(record, registry, settings.budget_tokens);
                row.budget_warning = prompt.over_budget;
                ChatExchange exchange = gateway.chat_complete(prompt.system, prompt.user);
                row.response = exchange.response;
                ExtractedClaims found = extract_claims(row.response, registry, grammar);
                row.accuracy = score_accuracy(record.gold, found, registry, grammar);
                row.similarity = score_similarity(record.assistant, row.response, embedder);
                for (const auto& t : found.cell_tags)
                    if (!record.gold.cell_tags.count(t)) ++row.extra_tags;
                for (const auto& [v, u] : found.values) {
                    bool matches_gold = false;
                    for (const auto& [g, gu] : record.gold.values)
                        if (std::fabs(v - g) <= grammar.value_exact_tolerance) matches_gold = true;
                    if (!matches_gold) ++row.extra_values;
                }
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
            }
        }
    };
    const int n_threads =
        std::max(1, std::min<int>(settings.concurrency, static_cast<int>(records.size())));
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    std::sort(report.results.begin(), report.results.end(),
              [](const RecordResult& a, const RecordResult& b) { return a.record_id < b.record_id; });

    double sim_sum = 0.0, acc_sum = 0.0;
    int ok = 0;
    for (const auto& row : report.results) {
        if (row.failed) {
            ++report.failed_count;
            continue;
        }
        sim_sum += row.similarity;
        acc_sum += row.accuracy.overall;
        ++ok;
    }
    if (ok == 0) throw AllRecordsFailed();
    report.mean_similarity = sim_sum / ok;
    report.mean_accuracy = acc_sum / ok;
    return report;
}

// --- Report serialization ----------------------------------------------------

ordered_json EvaluationReport::to_json() const {
    ordered_json j;
    j["schema_version"] = 1;
    j["model_name"] = model_name;
    j["mean_similarity"] = mean_similarity;
    j["mean_accuracy"] = mean_accuracy;
    j["failed_count"] = failed_count;
    ordered_json rows = ordered_json::array();
    for (const auto& r : results) {
        ordered_json row;
        row["id"] = r.record_id;
        row["failed"] = r.failed;
        row["error"] = r.error;
        row["similarity"] = r.similarity;
        ordered_json acc;
        acc["cell"] = r.accuracy.cell;
        acc["variable"] = r.accuracy.variable;
        acc["units"] = r.accuracy.units;
        acc["scenario"] = r.accuracy.scenario;
        acc["values"] = r.accuracy.values;
        acc["overall"] = r.accuracy.overall;
        row["accuracy"] = acc;
        row["response"] = r.response;
        row["budget_warning"] = r.budget_warning;
        row["extra_tags"] = r.extra_tags;
        row["extra_values"] = r.extra_values;
        rows.push_back(row);
    }
    j["records"] = rows;
    j["manifest"]["config_hash"] = config_hash;
    j["manifest"]["seed"] = seed;
    return j;
}

EvaluationReport EvaluationReport::from_json(const json& j) {
    if (!j.is_object() || j.value("schema_version", 0) != 1)
        throw SchemaError("unsupported or missing report schema_version");
    EvaluationReport report;
    try {
        report.model_name = j.at("model_name").get<std::string>();
        report.mean_similarity = j.at("mean_similarity").get<double>();
        report.mean_accuracy = j.at("mean_accuracy").get<double>();
        report.failed_count = j.at("failed_count").get<int>();
        for (const auto& row : j.at("records")) {
            RecordResult r;
            r.record_id = row.at("id").get<std::string>();
            r.failed = row.at("failed").get<bool>();
            r.error = row.value("error", "");
            r.similarity = row.at("similarity").get<double>();
            const auto& acc = row.at("accuracy");
            r.accuracy.cell = acc.at("cell").get<double>();
            r.accuracy.variable = acc.at("variable").get<double>();
            r.accuracy.units = acc.at("units").get<double>();
            r.accuracy.scenario = acc.at("scenario").get<double>();
            r.accuracy.values = acc.at("values").get<double>();
            r.accuracy.overall = acc.at("overall").get<double>();
            r.response = row.value("response", "");
            r.budget_warning = row.value("budget_warning", false);
            r.extra_tags = row.value("extra_tags", 0);
            r.extra_values = row.value("extra_values", 0);
            report.results.push_back(std::move(r));
        }
        report.config_hash = j.at("manifest").at("config_hash").get<std::string>();
        report.seed = j.at("manifest").at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed report: ") + e.what());
    }
    return report;
}

std::string EvaluationReport::to_csv() const {
    std::ostringstream out;
    out << "record_id,failed,similarity,cell,variable,units,scenario,values,overall\n";
    for (const auto& r : results) {
        out << r.record_id << "," << (r.failed ? 1 : 0) << "," << r.similarity << ","
            << r.accuracy.cell << "," << r.accuracy.variable << "," << r.accuracy.units << ","
            << r.accuracy.scenario << "," << r.accuracy.values << "," << r.accuracy.overall
            << "\n";
    }
    return out.str();
}

}  // namespace gridqa
