#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridqa/errors.hpp"

namespace gridqa {

// Minimal TOML-style document: [section] headers, key = value lines, where a
// value is a quoted string, number, or true/false. Keys are flattened to
// dotted paths. Comments start with '#'.
class ConfigDoc {
public:
    static ConfigDoc parse(const std::string& text);
    static ConfigDoc parse_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key) const;
    long get_int_or(const std::string& key, long fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

    // Keys under "prefix." with the prefix stripped, in document order.
    std::vector<std::pair<std::string, std::string>> section(const std::string& prefix) const;

    const std::string& raw_text() const { return raw_; }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> ordered_keys_;
    std::string raw_;
};

}  // namespace gridqa
