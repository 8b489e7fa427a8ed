#include "gridqa/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gridqa/config.hpp"
#include "gridqa/hash.hpp"

namespace gridqa {

using nlohmann::json;
using nlohmann::ordered_json;

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    // normalize negative zero
    if (std::string(buf) == "-0.00") return "0.00";
    return buf;
}

std::string fmt2_signed(double v) {
    std::string plain = fmt2(v);
    if (!plain.empty() && plain[0] != '-') return "+" + plain;
    return plain;
}

InputContext build_input_context(const GridDataset& ds, const CellId& cell,
                                 const std::vector<std::string>& vars,
                                 const std::vector<TimePeriod>& periods) {
    if (vars.empty() || periods.empty()) throw EmptySelection();
    InputContext ctx;
    ctx.cell = cell;
    auto region_it = ds.regions.find(cell);
    if (region_it == ds.regions.end())
        throw NotFound("region for cell " + format_cell_tag(cell));
    ctx.region = region_it->second;
    ctx.periods = periods;
    for (const auto& var : vars) {
        VariableBlock block;
        block.unit = ds.variables.get(var).canonical_unit;
        for (TimePeriod p : periods) {
            if (p == TimePeriod::Historical) {
                block.historical = lookup_value(ds, cell, var, p, std::nullopt).value;
                block.regional[{p, std::nullopt}] =
                    regional_aggregate(ds, ctx.region, var, p, std::nullopt);
            } else {
                for (Scenario s : {Scenario::Rcp45, Scenario::Rcp85}) {
                    block.projections[{p, s}] = lookup_value(ds, cell, var, p, s).value;
                    block.regional[{p, s}] = regional_aggregate(ds, ctx.region, var, p, s);
                }
            }
        }
        ctx.variables[var] = std::move(block);
    }
    return ctx;
}

namespace {

std::string period_line_label(TimePeriod p) {
    YearSpan span = period_years(p);
    return period_label(p) + " (" + std::to_string(span.begin) + "-" + std::to_string(span.end) +
           ")";
}

std::string stats_line(const AggregateStats& s) {
    return "min " + fmt2(s.min) + ", max " + fmt2(s.max) + ", mean " + fmt2(s.mean) + ", count " +
           std::to_string(s.count);
}

}  // namespace

std::string serialize_context(const InputContext& ctx, const VariableRegistry& registry) {
    std::ostringstream out;
    out << "Grid cell: " << format_cell_tag(ctx.cell) << "\n";
    out << "Region: " << ctx.region.label() << "\n";
    for (const auto& [key, block] : ctx.variables) {
        const Variable& var = registry.get(key);
        out << "\nVariable: " << var.display_name << " ["
            << (block.unit.empty() ? "unitless" : block.unit) << "]\n";
        for (TimePeriod p : ctx.periods) {
            if (p == TimePeriod::Historical) {
                if (block.historical)
                    out << "  " << period_line_label(p) << ": " << fmt2(*block.historical) << "\n";
            } else {
                for (Scenario s : {Scenario::Rcp45, Scenario::Rcp85}) {
                    auto it = block.projections.find({p, s});
                    if (it != block.projections.end())
                        out << "  " << period_line_label(p) << " " << scenario_label(s) << ": "
                            << fmt2(it->second) << "\n";
                }
            }
        }
        for (TimePeriod p : ctx.periods) {
            if (p == TimePeriod::Historical) {
                auto it = block.regional.find({p, std::nullopt});
                if (it != block.regional.end())
                    out << "  Region " << ctx.region.label() << " " << period_line_label(p) << ": "
                        << stats_line(it->second) << "\n";
            } else {
                for (Scenario s : {Scenario::Rcp45, Scenario::Rcp85}) {
                    auto it = block.regional.find({p, s});
                    if (it != block.regional.end())
                        out << "  Region " << ctx.region.label() << " " << period_line_label(p)
                            << " " << scenario_label(s) << ": " << stats_line(it->second) << "\n";
                }
            }
        }
    }
    return out.str();
}

namespace {

ordered_json stats_to_json(const AggregateStats& s) {
    ordered_json j;
    j["min"] = s.min;
    j["max"] = s.max;
    j["mean"] = s.mean;
    j["count"] = s.count;
    return j;
}

AggregateStats stats_from_json(const json& j) {
    AggregateStats s;
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
    s.mean = j.at("mean").get<double>();
    s.count = j.at("count").get<int>();
    return s;
}

std::string proj_key(TimePeriod p, Scenario s) { return period_key(p) + "_" + scenario_key(s); }

}  // namespace

ordered_json context_to_json(const InputContext& ctx) {
    ordered_json j;
    j["cell"] = format_cell_tag(ctx.cell);
    j["region"]["state"] = ctx.region.state;
    j["region"]["county"] = ctx.region.county ? json(*ctx.region.county) : json(nullptr);
    ordered_json periods = ordered_json::array();
    for (TimePeriod p : ctx.periods) periods.push_back(period_key(p));
    j["periods"] = periods;
    ordered_json vars;
    for (const auto& [key, block] : ctx.variables) {
        ordered_json b;
        b["unit"] = block.unit;
        b["historical"] = block.historical ? json(*block.historical) : json(nullptr);
        ordered_json proj;
        for (const auto& [pk, value] : block.projections)
            proj[proj_key(pk.first, pk.second)] = value;
        b["projections"] = proj;
        ordered_json regional;
        for (const auto& [rk, stats] : block.regional) {
            std::string name =
                rk.second ? proj_key(rk.first, *rk.second) : period_key(rk.first);
            regional[name] = stats_to_json(stats);
        }
        b["regional"] = regional;
        vars[key] = b;
    }
    j["variables"] = vars;
    return j;
}

InputContext context_from_json(const json& j) {
    InputContext ctx;
    ctx.cell = parse_cell_tag(j.at("cell").get<std::string>());
    ctx.region.state = j.at("region").at("state").get<std::string>();
    if (!j.at("region").at("county").is_null())
        ctx.region.county = j.at("region").at("county").get<std::string>();
    for (const auto& p : j.at("periods")) {
        auto period = parse_period_key(p.get<std::string>());
        if (!period) throw SchemaError("unknown period key " + p.get<std::string>());
        ctx.periods.push_back(*period);
    }
    auto split_key = [](const std::string& name) -> std::pair<TimePeriod, std::optional<Scenario>> {
        auto us = name.find('_');
        if (us == std::string::npos) {
            auto p = parse_period_key(name);
            if (!p) throw SchemaError("bad period/scenario key " + name);
            return {*p, std::nullopt};
        }
        auto p = parse_period_key(name.substr(0, us));
        auto s = parse_scenario_key(name.substr(us + 1));
        if (!p || !s) throw SchemaError("bad period/scenario key " + name);
        return {*p, *s};
    };
    for (const auto& [key, b] : j.at("variables").items()) {
        VariableBlock block;
        block.unit = b.at("unit").get<std::string>();
        if (!b.at("historical").is_null()) block.historical = b.at("historical").get<double>();
        for (const auto& [name, value] : b.at("projections").items()) {
            auto [p, s] = split_key(name);
            if (!s) throw SchemaError("projection key lacks scenario: " + name);
            block.projections[{p, *s}] = value.get<double>();
        }
        for (const auto& [name, stats] : b.at("regional").items()) {
            auto [p, s] = split_key(name);
            block.regional[{p, s}] = stats_from_json(stats);
        }
        ctx.variables[key] = std::move(block);
    }
    return ctx;
}

std::string task_kind_name(TaskKind t) {
    switch (t) {
        case TaskKind::VariableRetrieval: return "variable_retrieval";
        case TaskKind::TrendAnalysis: return "trend_analysis";
        case TaskKind::ScenarioComparison: return "scenario_comparison";
        case TaskKind::ContextualInterpretation: return "contextual_interpretation";
    }
    return "?";
}

std::optional<TaskKind> parse_task_kind(const std::string& name) {
    for (TaskKind t : kAllTasks)
        if (task_kind_name(t) == name) return t;
    return std::nullopt;
}

// --- Template catalog --------------------------------------------------------

void TemplateCatalog::add(QaTemplate t) {
    if (t.id.empty()) throw ConfigError("template with empty id");
    if (t.question.empty() || t.answer.empty())
        throw ConfigError("template '" + t.id + "' lacks question or answer");
    const bool names_scenario = t.question.find("{scenario}") != std::string::npos;
    if (t.both_scenarios && names_scenario)
        throw ConfigError("template '" + t.id + "' is scenario-unspecified but names {scenario}");
    if (!t.both_scenarios && !names_scenario &&
        t.task != TaskKind::TrendAnalysis)  // trend templates may fix the scenario in prose
        throw ConfigError("template '" + t.id + "' must name {scenario} in the question");
    templates_[t.id] = std::move(t);
}

TemplateCatalog TemplateCatalog::load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    TemplateCatalog catalog;
    if (!fs::is_directory(dir)) throw ConfigError("template directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".tmpl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        ConfigDoc doc = ConfigDoc::parse_file(path.string());
        QaTemplate t;
        t.id = doc.get_string("id");
        auto task = parse_task_kind(doc.get_string("task"));
        if (!task) throw ConfigError("template " + t.id + ": unknown task");
        t.task = *task;
        const std::string mode = doc.get_string_or("scenarios", "single");
        if (mode == "both") t.both_scenarios = true;
        else if (mode != "single")
            throw ConfigError("template " + t.id + ": scenarios must be single|both");
        t.question = doc.get_string("question");
        t.answer = doc.get_string("answer");
        catalog.add(std::move(t));
    }
    if (catalog.size() == 0) throw ConfigError("no .tmpl files in " + dir);
    return catalog;
}

const QaTemplate& TemplateCatalog::get(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw UnknownTemplate(id);
    return it->second;
}

std::vector<const QaTemplate*> TemplateCatalog::for_task(TaskKind task) const {
    std::vector<const QaTemplate*> out;
    for (const auto& [id, t] : templates_)
        if (t.task == task) out.push_back(&t);
    return out;
}

// --- Instantiation -----------------------------------------------------------

namespace {

std::string substitute(const std::string& tmpl,
                       const std::map<std::string, std::string>& subs) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i);
            if (close != std::string::npos) {
                std::string name = tmpl.substr(i + 1, close - i - 1);
                auto it = subs.find(name);
                if (it != subs.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    // tidy up holes left by empty units
    std::string cleaned;
    cleaned.reserve(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == ' ' &&
            (i + 1 == out.size() || out[i + 1] == ' ' || out[i + 1] == '.' || out[i + 1] == ','))
            continue;
        cleaned.push_back(out[i]);
    }
    return cleaned;
}

double ctx_projection(const InputContext& ctx, const std::string& var, TimePeriod p, Scenario s) {
    const auto& block = ctx.variables.at(var);
    auto it = block.projections.find({p, s});
    if (it == block.projections.end())
        throw NotFound("projection " + var + "/" + period_key(p) + "/" + scenario_key(s) +
                       " in context for " + format_cell_tag(ctx.cell));
    return it->second;
}

const AggregateStats& ctx_regional(const InputContext& ctx, const std::string& var, TimePeriod p,
                                   std::optional<Scenario> s) {
    const auto& block = ctx.variables.at(var);
    auto it = block.regional.find({p, s});
    if (it == block.regional.end())
        throw NotFound("regional stats " + var + "/" + period_key(p) + " in context for " +
                       format_cell_tag(ctx.cell));
    return it->second;
}

}  // namespace

InstantiatedQa instantiate_template(const QaTemplate& tmpl, const InputContext& ctx,
                                    const VariableRegistry& registry, std::uint64_t rng_seed) {
    if (ctx.variables.empty()) throw EmptySelection();
    SplitMix64 rng(rng_seed ^ fnv1a64(tmpl.id));

    const std::string var_key = ctx.variables.begin()->first;
    const Variable& var = registry.get(var_key);
    const std::string unit = var.canonical_unit;

    std::vector<TimePeriod> projection_periods;
    for (TimePeriod p : ctx.periods)
        if (p != TimePeriod::Historical) projection_periods.push_back(p);
    if (projection_periods.empty())
        throw NotFound("context has no projection periods for " + format_cell_tag(ctx.cell));
    const TimePeriod period =
        projection_periods[rng.below(projection_periods.size())];
    const Scenario scenario = rng.below(2) == 0 ? Scenario::Rcp45 : Scenario::Rcp85;

    std::map<std::string, std::string> subs;
    subs["cell"] = format_cell_tag(ctx.cell);
    subs["region"] = ctx.region.label();
    subs["variable"] = var.display_name;
    subs["unit"] = unit;
    subs["period"] = period_label(period);
    YearSpan span = period_years(period);
    subs["period_years"] = std::to_string(span.begin) + "-" + std::to_string(span.end);
    subs["scenario"] = scenario_label(scenario);

    GoldClaims gold;
    gold.cell_tags.insert(format_cell_tag(ctx.cell));
    gold.variables.insert(var_key);
    if (!unit.empty()) gold.units.insert(unit);
    auto add_value = [&](double v) { gold.values.emplace_back(std::stod(fmt2(v)), unit); };

    switch (tmpl.task) {
        case TaskKind::VariableRetrieval: {
            if (tmpl.both_scenarios) {
                const double v45 = ctx_projection(ctx, var_key, period, Scenario::Rcp45);
                const double v85 = ctx_projection(ctx, var_key, period, Scenario::Rcp85);
                subs["value_rcp45"] = fmt2(v45);
                subs["value_rcp85"] = fmt2(v85);
                gold.scenarios = {Scenario::Rcp45, Scenario::Rcp85};
                add_value(v45);
                add_value(v85);
            } else {
                const double v = ctx_projection(ctx, var_key, period, scenario);
                subs["value"] = fmt2(v);
                gold.scenarios = {scenario};
                add_value(v);
            }
            break;
        }
        case TaskKind::TrendAnalysis: {
            const auto& block = ctx.variables.at(var_key);
            if (!block.historical)
                throw NotFound("historical value for trend over " + var_key);
            const double hist = *block.historical;
            const double mid = ctx_projection(ctx, var_key, TimePeriod::MidCentury, scenario);
            const double end = ctx_projection(ctx, var_key, TimePeriod::EndCentury, scenario);
            const double d1 = std::stod(fmt2(mid)) - std::stod(fmt2(hist));
            const double d2 = std::stod(fmt2(end)) - std::stod(fmt2(mid));
            TrendDirection dir = d1 > 0 && d2 > 0   ? TrendDirection::Increasing
                                 : d1 < 0 && d2 < 0 ? TrendDirection::Decreasing
                                 : d1 == 0 && d2 == 0 ? TrendDirection::Flat
                                                      : TrendDirection::Mixed;
            subs["hist_value"] = fmt2(hist);
            subs["mid_value"] = fmt2(mid);
            subs["end_value"] = fmt2(end);
            subs["delta_hist_mid"] = fmt2_signed(d1);
            subs["delta_mid_end"] = fmt2_signed(d2);
            subs["direction"] = trend_direction_name(dir);
            gold.scenarios = {scenario};
            add_value(hist);
            add_value(mid);
            add_value(end);
            break;
        }
        case TaskKind::ScenarioComparison: {
            const double v45 = ctx_projection(ctx, var_key, period, Scenario::Rcp45);
            const double v85 = ctx_projection(ctx, var_key, period, Scenario::Rcp85);
            const double delta = std::stod(fmt2(v85)) - std::stod(fmt2(v45));
            subs["value_rcp45"] = fmt2(v45);
            subs["value_rcp85"] = fmt2(v85);
            subs["delta"] = fmt2_signed(delta);
            gold.scenarios = {Scenario::Rcp45, Scenario::Rcp85};
            add_value(v45);
            add_value(v85);
            gold.values.emplace_back(std::stod(fmt2(delta)), unit);
            break;
        }
        case TaskKind::ContextualInterpretation: {
            const double v = ctx_projection(ctx, var_key, period, scenario);
            const AggregateStats& stats = ctx_regional(ctx, var_key, period, scenario);
            RelativeContext rel = relative_position(v, stats);
            subs["value"] = fmt2(v);
            subs["regional_mean"] = fmt2(stats.mean);
            subs["regional_min"] = fmt2(stats.min);
            subs["regional_max"] = fmt2(stats.max);
            subs["deviation"] = fmt2_signed(std::stod(fmt2(v)) - std::stod(fmt2(stats.mean)));
            if (rel.is_region_max && rel.is_region_min)
                subs["extreme_phrase"] = "both the regional minimum and maximum";
            else if (rel.is_region_max)
                subs["extreme_phrase"] = "the regional maximum";
            else if (rel.is_region_min)
                subs["extreme_phrase"] = "the regional minimum";
            else
                subs["extreme_phrase"] = "neither the regional minimum nor the regional maximum";
            gold.scenarios = {scenario};
            add_value(v);
            add_value(stats.mean);
            gold.values.emplace_back(std::stod(fmt2(std::stod(fmt2(v)) - std::stod(fmt2(stats.mean)))),
                                     unit);
            break;
        }
    }

    InstantiatedQa out;
    out.question = substitute(tmpl.question, subs);
    out.assistant = substitute(tmpl.answer, subs);
    out.gold = std::move(gold);
    return out;
}

std::string make_record_id(TaskKind task, const CellId& cell,
                           const std::vector<std::string>& variable_keys,
                           const std::string& template_id, std::uint64_t seed) {
    std::string material = task_kind_name(task) + "|" + format_cell_tag(cell) + "|";
    for (const auto& v : variable_keys) material += v + ",";
    material += "|" + template_id + "|" + std::to_string(seed);
    return content_hash(material);
}

// --- Paraphrase --------------------------------------------------------------

ParaphraseOutcome paraphrase(
    const QARecord& record, GatewayClient& gateway, const ParaphrasePolicy& policy,
    const std::function<bool(const std::string&, const GoldClaims&)>& preserves_gold) {
    const std::string system =
        "Rewrite the text you are given with different wording. Keep every number, unit, grid "
        "cell tag, time period, and RCP scenario mention exactly as written. Reply with the "
        "rewritten text only.";
    ParaphraseOutcome outcome;
    outcome.record = record;
    try {
        for (int attempt = 0; attempt < std::max(1, policy.max_attempts); ++attempt) {
            ChatExchange q = gateway.chat_complete(system, record.user);
            ChatExchange a = gateway.chat_complete(system, record.assistant);
            if (preserves_gold(a.response, record.gold)) {
                outcome.record.user = q.response;
                outcome.record.assistant = a.response;
                outcome.accepted = true;
                return outcome;
            }
            outcome.note = "paraphrase rejected: rewritten answer dropped gold claims";
        }
    } catch (const GatewayError& e) {
        throw GatewayError(e.kind, e.attempts,
                           std::string(e.what()) + " (record " + record.id + ")");
    }
    return outcome;
}

// --- Split and export --------------------------------------------------------

std::pair<std::vector<QARecord>, std::vector<QARecord>> split_records(
    const std::vector<QARecord>& records, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must lie in (0, 1)");
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng(seed ^ 0x7e57f00dull);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    const auto n = records.size();
    std::size_t test_count =
        static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(n)));
    test_count = std::max<std::size_t>(1, test_count);
    if (n > 1) test_count = std::min(test_count, n - 1);

    std::vector<QARecord> test, train;
    for (std::size_t i = 0; i < n; ++i)
        (i < test_count ? test : train).push_back(records[order[i]]);
    return {std::move(train), std::move(test)};
}

int export_training_jsonl(const std::vector<QARecord>& records, const VariableRegistry& registry,
                          std::ostream& sink) {
    int count = 0;
    for (const auto& r : records) {
        ordered_json row;
        row["id"] = r.id;
        row["user"] = r.user;
        row["input"] = serialize_context(r.input, registry);
        row["assistant"] = r.assistant;
        sink << row.dump() << "\n";
        if (!sink) throw SinkError("training jsonl");
        ++count;
    }
    return count;
}

ordered_json record_to_json(const QARecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["task"] = task_kind_name(r.task);
    j["cell"] = format_cell_tag(r.cell);
    j["user"] = r.user;
    j["input"] = context_to_json(r.input);
    j["assistant"] = r.assistant;
    ordered_json gold;
    gold["cell_tags"] = r.gold.cell_tags;
    gold["variables"] = r.gold.variables;
    gold["units"] = r.gold.units;
    ordered_json scenarios = ordered_json::array();
    for (Scenario s : r.gold.scenarios) scenarios.push_back(scenario_key(s));
    gold["scenarios"] = scenarios;
    ordered_json values = ordered_json::array();
    for (const auto& [v, u] : r.gold.values) values.push_back(ordered_json::array({v, u}));
    gold["values"] = values;
    j["gold"] = gold;
    return j;
}

QARecord record_from_json(const json& j) {
    QARecord r;
    r.id = j.at("id").get<std::string>();
    auto task = parse_task_kind(j.at("task").get<std::string>());
    if (!task) throw SchemaError("unknown task in record " + r.id);
    r.task = *task;
    r.cell = parse_cell_tag(j.at("cell").get<std::string>());
    r.user = j.at("user").get<std::string>();
    r.input = context_from_json(j.at("input"));
    r.assistant = j.at("assistant").get<std::string>();
    const auto& gold = j.at("gold");
    for (const auto& t : gold.at("cell_tags")) r.gold.cell_tags.insert(t.get<std::string>());
    for (const auto& v : gold.at("variables")) r.gold.variables.insert(v.get<std::string>());
    for (const auto& u : gold.at("units")) r.gold.units.insert(u.get<std::string>());
    for (const auto& s : gold.at("scenarios")) {
        auto scen = parse_scenario_key(s.get<std::string>());
        if (!scen) throw SchemaError("unknown scenario in record " + r.id);
        r.gold.scenarios.insert(*scen);
    }
    for (const auto& v : gold.at("values"))
        r.gold.values.emplace_back(v.at(0).get<double>(), v.at(1).get<std::string>());
    return r;
}

int export_archive_jsonl(const std::vector<QARecord>& records, std::ostream& sink) {
    int count = 0;
    for (const auto& r : records) {
        sink << record_to_json(r).dump() << "\n";
        if (!sink) throw SinkError("record jsonl");
        ++count;
    }
    return count;
}

std::vector<QARecord> import_archive_jsonl(std::istream& source) {
    std::vector<QARecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw SchemaError("record jsonl line " + std::to_string(line_no) + " is not JSON");
        records.push_back(record_from_json(j));
    }
    return records;
}

}  // namespace gridqa
