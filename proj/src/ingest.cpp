#include "gridqa/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <sstream>

#include "gridqa/hash.hpp"

namespace gridqa {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"') {
            if (in_quotes && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else {
                in_quotes = !in_quotes;
            }
        } else if (c == ',' && !in_quotes) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

bool parse_double_strict(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end != t.c_str() && *end == '\0' && std::isfinite(out);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

struct VarProfile {
    double lo, hi;        // historical range
    double drift_lo, drift_hi;  // per-step drift for projections
    double rcp85_bump;    // fixed additive bump over RCP 4.5
};

VarProfile profile_for(const Variable& v) {
    if (v.family == "temperature") return {40.0, 105.0, -1.0, 5.0, 2.0};
    if (v.family == "precipitation") return {5.0, 60.0, -3.0, 3.0, 0.5};
    if (v.family == "wind") return {2.0, 25.0, -1.5, 1.5, 0.25};
    if (v.family == "humidity") return {20.0, 90.0, -4.0, 4.0, 0.5};
    return {0.0, 50.0, -2.0, 4.0, 1.0};
}

const char* kStates[] = {"Illinois", "Iowa", "Kansas", "Ohio", "Texas", "Utah", "Nevada", "Oregon"};
const char* kCounties[] = {"Cook", "Lake"};

Region synthetic_region(int index) {
    int state_idx = index / 2;
    Region r;
    r.state = kStates[state_idx % 8];
    if (state_idx >= 8) r.state += "-" + std::to_string(state_idx / 8 + 1);
    r.county = kCounties[index % 2];
    return r;
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

ColumnMapping ColumnMapping::from_config(const ConfigDoc& doc) {
    ColumnMapping m;
    m.tag_column = doc.get_string("mapping.tag_column");
    for (const auto& [col, spec] : doc.section("mapping.columns")) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : spec) {
            if (c == '|') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        parts.push_back(cur);
        if (parts.size() < 2 || parts.size() > 3)
            throw ConfigError("column '" + col + "': expected var|period[|scenario]");
        ValueColumn vc;
        vc.variable = parts[0];
        auto period = parse_period_key(parts[1]);
        if (!period) throw ConfigError("column '" + col + "': unknown period '" + parts[1] + "'");
        vc.period = *period;
        if (parts.size() == 3) {
            auto scen = parse_scenario_key(parts[2]);
            if (!scen)
                throw ConfigError("column '" + col + "': unknown scenario '" + parts[2] + "'");
            vc.scenario = scen;
        }
        if (vc.period == TimePeriod::Historical && vc.scenario)
            throw ConfigError("column '" + col + "': historical columns carry no scenario");
        if (vc.period != TimePeriod::Historical && !vc.scenario)
            throw ConfigError("column '" + col + "': projection columns require a scenario");
        m.value_columns[col] = vc;
    }
    if (m.value_columns.count(m.tag_column))
        throw ConfigError("tag column also mapped as a value column");
    // each (var, period, scenario) combination must be unique
    std::vector<ValueColumn> seen;
    for (const auto& [col, vc] : m.value_columns) {
        if (std::find(seen.begin(), seen.end(), vc) != seen.end())
            throw ConfigError("duplicate mapping for column '" + col + "'");
        seen.push_back(vc);
    }
    return m;
}

std::string ColumnMapping::to_config_text() const {
    std::ostringstream out;
    out << "[mapping]\n";
    out << "tag_column = \"" << tag_column << "\"\n\n";
    out << "[mapping.columns]\n";
    for (const auto& [col, vc] : value_columns) {
        out << col << " = \"" << vc.variable << "|" << period_key(vc.period);
        if (vc.scenario) out << "|" << scenario_key(*vc.scenario);
        out << "\"\n";
    }
    return out.str();
}

LoadResult load_grid_table(std::istream& source, const ColumnMapping& mapping,
                           const VariableRegistry& registry) {
    LoadResult result;
    result.dataset.variables = registry;
    auto rows = read_csv(source);
    if (rows.empty()) throw EmptyTable();
    const auto& header = rows.front();
    auto column_index = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return static_cast<int>(i);
        return -1;
    };
    int tag_idx = column_index(mapping.tag_column);
    if (tag_idx < 0) throw MissingColumn(mapping.tag_column);
    std::vector<std::pair<int, ValueColumn>> cols;
    for (const auto& [name, vc] : mapping.value_columns) {
        int idx = column_index(name);
        if (idx < 0) throw MissingColumn(name);
        cols.emplace_back(idx, vc);
    }
    if (rows.size() == 1) throw EmptyTable();

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const int row_no = static_cast<int>(r) + 1;  // 1-based, header is row 1
        if (static_cast<std::size_t>(tag_idx) >= row.size()) {
            result.malformed_rows.emplace_back(row_no, "row too short for tag column");
            continue;
        }
        CellId cell;
        try {
            cell = parse_cell_tag(trim(row[static_cast<std::size_t>(tag_idx)]));
        } catch (const MalformedTag& e) {
            result.malformed_rows.emplace_back(row_no, e.what());
            continue;
        }
        for (const auto& [idx, vc] : cols) {
            if (static_cast<std::size_t>(idx) >= row.size()) {
                result.malformed_rows.emplace_back(row_no, "missing value for " +
                                                               standard_column_name(vc));
                continue;
            }
            double value = 0.0;
            const std::string& text = row[static_cast<std::size_t>(idx)];
            if (!parse_double_strict(text, value)) {
                result.malformed_rows.emplace_back(
                    row_no, "non-numeric value '" + trim(text) + "' for " + vc.variable);
                continue;
            }
            const std::string unit =
                registry.contains(vc.variable) ? registry.get(vc.variable).canonical_unit : "";
            EntryKey key{cell, vc.variable, vc.period, vc.scenario};
            if (result.dataset.entries.count(key))
                result.warnings.push_back("duplicate entry for " + format_cell_tag(cell) + "/" +
                                          vc.variable + ", last row wins");
            result.dataset.entries[key] = Measurement{value, unit};
        }
    }
    return result;
}

RegionMapResult load_region_map(std::istream& source) {
    RegionMapResult result;
    auto rows = read_csv(source);
    if (rows.empty()) throw EmptyTable();
    const auto& header = rows.front();
    auto need = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return static_cast<int>(i);
        throw MissingColumn(name);
    };
    const auto tag_idx = static_cast<std::size_t>(need("tag"));
    const auto state_idx = static_cast<std::size_t>(need("state"));
    const auto county_idx = static_cast<std::size_t>(need("county"));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const int row_no = static_cast<int>(r) + 1;
        if (row.size() <= std::max({tag_idx, state_idx, county_idx})) {
            result.malformed_rows.emplace_back(row_no, "row too short");
            continue;
        }
        CellId cell;
        try {
            cell = parse_cell_tag(trim(row[tag_idx]));
        } catch (const MalformedTag& e) {
            result.malformed_rows.emplace_back(row_no, e.what());
            continue;
        }
        std::string state = trim(row[state_idx]);
        if (state.empty()) {
            result.malformed_rows.emplace_back(row_no, "empty state");
            continue;
        }
        Region region;
        region.state = state;
        std::string county = trim(row[county_idx]);
        if (!county.empty()) region.county = county;
        if (result.regions.count(cell))
            result.warnings.push_back("duplicate region row for " + format_cell_tag(cell) +
                                      ", last row wins");
        result.regions[cell] = region;
    }
    return result;
}

std::string standard_column_name(const ValueColumn& vc) {
    std::string name = vc.variable + "_" + period_key(vc.period);
    if (vc.scenario) name += "_" + scenario_key(*vc.scenario);
    return name;
}

SyntheticResult generate_synthetic(std::uint64_t seed, int rows, int cols,
                                   const VariableRegistry& registry, int regions) {
    if (rows < 1 || cols < 1 || regions < 1)
        throw ConfigError("synthetic grid needs rows, cols, regions >= 1");
    SyntheticResult result;
    result.dataset.variables = registry;
    SplitMix64 rng(seed ^ 0x5eedf00dull);
    int cell_index = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c, ++cell_index) {
            CellId cell{r, c};
            result.dataset.regions[cell] = synthetic_region(cell_index % regions);
            for (const auto& [key, var] : registry.all()) {
                const VarProfile prof = profile_for(var);
                const double hist = round2(rng.uniform(prof.lo, prof.hi));
                auto put = [&](TimePeriod p, std::optional<Scenario> s, double v) {
                    Measurement m{round2(v), var.canonical_unit};
                    EntryKey ek{cell, key, p, s};
                    result.dataset.entries[ek] = m;
                    result.ledger[ek] = m;
                };
                put(TimePeriod::Historical, std::nullopt, hist);
                double prev45 = hist;
                for (TimePeriod p : {TimePeriod::MidCentury, TimePeriod::EndCentury}) {
                    const double v45 = prev45 + rng.uniform(prof.drift_lo, prof.drift_hi);
                    put(p, Scenario::Rcp45, v45);
                    put(p, Scenario::Rcp85, v45 + prof.rcp85_bump);
                    prev45 = round2(v45);
                }
            }
        }
    }
    return result;
}

ValidationReport validate_dataset(const GridDataset& ds) {
    ValidationReport report;
    std::vector<CellId> cells;
    int entry_idx = 0;
    for (const auto& [key, m] : ds.entries) {
        ++entry_idx;
        ++report.entry_count;
        if (cells.empty() || cells.back() != key.cell) {
            if (std::find(cells.begin(), cells.end(), key.cell) == cells.end())
                cells.push_back(key.cell);
        }
        if (key.period == TimePeriod::Historical && key.scenario)
            report.malformed_rows.emplace_back(
                entry_idx, "historical entry " + format_cell_tag(key.cell) + "/" + key.variable +
                               " carries a scenario");
        if (key.period != TimePeriod::Historical && !key.scenario)
            report.malformed_rows.emplace_back(
                entry_idx, "projection entry " + format_cell_tag(key.cell) + "/" + key.variable +
                               " lacks a scenario");
        if (!std::isfinite(m.value))
            report.malformed_rows.emplace_back(entry_idx, "non-finite value for " +
                                                              format_cell_tag(key.cell));
        if (ds.regions.find(key.cell) == ds.regions.end() &&
            std::find(report.missing_region_cells.begin(), report.missing_region_cells.end(),
                      key.cell) == report.missing_region_cells.end())
            report.missing_region_cells.push_back(key.cell);
    }
    report.cell_count = static_cast<int>(cells.size());
    report.complete = report.malformed_rows.empty() && report.missing_region_cells.empty();
    return report;
}

void merge_into(GridDataset& target, const GridDataset& source,
                std::vector<std::string>& warnings) {
    for (const auto& [key, m] : source.entries) {
        if (target.entries.count(key))
            warnings.push_back("merge conflict for " + format_cell_tag(key.cell) + "/" +
                               key.variable + ", source wins");
        target.entries[key] = m;
    }
    for (const auto& [cell, region] : source.regions) target.regions[cell] = region;
}

}  // namespace gridqa
