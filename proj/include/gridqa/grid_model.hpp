#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridqa/errors.hpp"

namespace gridqa {

// Grid-cell identifier behind crossmodel tags of the form R073C493.
struct CellId {
    int row = 0;
    int col = 0;
    auto operator<=>(const CellId&) const = default;
};

// Canonical tag codec. Tags are R<3 digits>C<3 digits>; lowercase input is
// accepted, output is always uppercase zero-padded.
CellId parse_cell_tag(const std::string& text);
std::string format_cell_tag(const CellId& cell);

enum class TimePeriod { Historical, MidCentury, EndCentury };

struct YearSpan {
    int begin;
    int end;
};

YearSpan period_years(TimePeriod p);
std::string period_key(TimePeriod p);       // "hist" | "mid" | "end"
std::string period_label(TimePeriod p);     // "Historical" etc.
std::optional<TimePeriod> parse_period_key(const std::string& key);

enum class Scenario { Rcp45, Rcp85 };

std::string scenario_key(Scenario s);       // "rcp45" | "rcp85"
std::string scenario_label(Scenario s);     // "RCP 4.5" | "RCP 8.5"
std::optional<Scenario> parse_scenario_key(const std::string& key);

struct Measurement {
    double value = 0.0;
    std::string unit;
    auto operator<=>(const Measurement&) const = default;
};

struct Region {
    std::string state;
    std::optional<std::string> county;
    auto operator<=>(const Region&) const = default;

    std::string label() const { return county ? state + ", " + *county : state; }
};

enum class UnitDimension { Temperature, Length, Speed, Fraction, None };

struct Variable {
    std::string key;
    std::string display_name;
    std::string canonical_unit;  // empty for unitless variables
    std::set<std::string> synonyms;
    std::set<std::string> unit_aliases;  // always contains canonical_unit when non-empty
    std::string family;                  // e.g. "temperature"
    UnitDimension dimension = UnitDimension::None;
};

class VariableRegistry {
public:
    void add(Variable v);
    const Variable& get(const std::string& key) const;
    bool contains(const std::string& key) const { return vars_.count(key) > 0; }
    const std::map<std::string, Variable>& all() const { return vars_; }

    // Canonical unit symbol for an alias, across all registered variables plus
    // the extra unit table (e.g. °C), or nullopt if unknown.
    std::optional<std::string> canonical_unit_for_alias(const std::string& alias) const;
    std::optional<UnitDimension> unit_dimension(const std::string& canonical_symbol) const;

    // Extra units that belong to a known dimension but to no registered
    // variable (wrong-symbol detection in the units rubric).
    void add_foreign_unit(const std::string& symbol, const std::set<std::string>& aliases,
                          UnitDimension dim);

    // alias (lowercased) -> canonical symbol, including foreign units
    const std::map<std::string, std::string>& alias_index() const { return alias_index_; }

    static VariableRegistry default_registry();

private:
    std::map<std::string, Variable> vars_;
    std::map<std::string, std::string> alias_index_;        // lowercased alias -> canonical
    std::map<std::string, UnitDimension> unit_dims_;        // canonical -> dimension
};

struct AggregateStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    int count = 0;
};

enum class TrendDirection { Increasing, Decreasing, Mixed, Flat };

std::string trend_direction_name(TrendDirection d);

struct TrendSummary {
    double historical = 0.0;
    double mid = 0.0;
    double end = 0.0;
    double delta_hist_to_mid = 0.0;
    double delta_mid_to_end = 0.0;
    TrendDirection direction = TrendDirection::Flat;
};

struct RelativeContext {
    double cell_value = 0.0;
    AggregateStats region_stats;
    bool is_region_max = false;
    bool is_region_min = false;
    double deviation_from_mean = 0.0;
};

struct EntryKey {
    CellId cell;
    std::string variable;
    TimePeriod period = TimePeriod::Historical;
    std::optional<Scenario> scenario;
    auto operator<=>(const EntryKey&) const = default;
};

// Immutable after construction; all operations are pure reads.
struct GridDataset {
    std::map<EntryKey, Measurement> entries;
    std::map<CellId, Region> regions;
    VariableRegistry variables;
};

Measurement lookup_value(const GridDataset& ds, const CellId& cell, const std::string& var,
                         TimePeriod period, std::optional<Scenario> scenario);

AggregateStats regional_aggregate(const GridDataset& ds, const Region& region,
                                  const std::string& var, TimePeriod period,
                                  std::optional<Scenario> scenario);

RelativeContext relative_position(double value, const AggregateStats& stats);

TrendSummary trend(const GridDataset& ds, const CellId& cell, const std::string& var,
                   Scenario scenario);

double scenario_delta(const GridDataset& ds, const CellId& cell, const std::string& var,
                      TimePeriod period);

// True when `region` is a state-level query matching cell_region, or an exact
// state+county match.
bool region_matches(const Region& query, const Region& cell_region);

}  // namespace gridqa
