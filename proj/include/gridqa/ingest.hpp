#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridqa/config.hpp"
#include "gridqa/grid_model.hpp"

namespace gridqa {

// CSV with a header row, comma separator, optional double-quoted fields.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::string csv_escape(const std::string& field);

struct ValueColumn {
    std::string variable;
    TimePeriod period = TimePeriod::Historical;
    std::optional<Scenario> scenario;
    auto operator<=>(const ValueColumn&) const = default;
};

struct ColumnMapping {
    std::string tag_column;
    std::map<std::string, ValueColumn> value_columns;

    // [mapping] tag_column = "..."; [mapping.columns] col = "var|period[|scenario]"
    static ColumnMapping from_config(const ConfigDoc& doc);
    std::string to_config_text() const;
};

struct ValidationReport {
    int cell_count = 0;
    int entry_count = 0;
    std::vector<CellId> missing_region_cells;
    std::vector<std::pair<int, std::string>> malformed_rows;
    bool complete = false;
};

struct LoadResult {
    GridDataset dataset;
    std::vector<std::pair<int, std::string>> malformed_rows;  // (row number, reason)
    std::vector<std::string> warnings;
};

LoadResult load_grid_table(std::istream& source, const ColumnMapping& mapping,
                           const VariableRegistry& registry);

struct RegionMapResult {
    std::map<CellId, Region> regions;
    std::vector<std::pair<int, std::string>> malformed_rows;
    std::vector<std::string> warnings;
};

RegionMapResult load_region_map(std::istream& source);

using GoldLedger = std::map<EntryKey, Measurement>;

struct SyntheticResult {
    GridDataset dataset;
    GoldLedger ledger;
};

// Deterministic for a fixed argument tuple; every cell fully populated for
// every variable, period and scenario. Values are rounded to 2 decimals so
// rendered text and stored data agree exactly.
SyntheticResult generate_synthetic(std::uint64_t seed, int rows, int cols,
                                   const VariableRegistry& registry, int regions);

ValidationReport validate_dataset(const GridDataset& ds);

// Last-wins on conflicting entries, with warnings.
void merge_into(GridDataset& target, const GridDataset& source, std::vector<std::string>& warnings);

// Column name used by the synthetic writer and its mapping, e.g.
// "annual_temp_max_mid_rcp45".
std::string standard_column_name(const ValueColumn& vc);

}  // namespace gridqa
