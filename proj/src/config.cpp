#include "gridqa/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gridqa {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string unquote(const std::string& v, int line_no) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                ++i;
                switch (v[i]) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default:
                        throw ConfigError("bad escape at line " + std::to_string(line_no));
                }
            } else {
                out.push_back(v[i]);
            }
        }
        return out;
    }
    return v;
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text) {
    ConfigDoc doc;
    doc.raw_ = text;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("unterminated section header at line " + std::to_string(line_no));
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError("empty section header at line " + std::to_string(line_no));
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
        // strip trailing comment on unquoted values
        if (value.empty() || value.front() != '"') {
            auto hash = value.find('#');
            if (hash != std::string::npos) value = trim(value.substr(0, hash));
        }
        std::string full = section.empty() ? key : section + "." + key;
        if (doc.values_.count(full) == 0) doc.ordered_keys_.push_back(full);
        doc.values_[full] = unquote(value, line_no);
    }
    return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string ConfigDoc::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
    return it->second;
}

std::string ConfigDoc::get_string_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long ConfigDoc::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    long out = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') throw ConfigError("key '" + key + "' is not an integer");
    return out;
}

long ConfigDoc::get_int_or(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double ConfigDoc::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') throw ConfigError("key '" + key + "' is not a number");
    return out;
}

double ConfigDoc::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool ConfigDoc::get_bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("key '" + key + "' is not a boolean");
}

std::vector<std::pair<std::string, std::string>> ConfigDoc::section(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, std::string>> out;
    const std::string p = prefix + ".";
    for (const auto& key : ordered_keys_) {
        if (key.rfind(p, 0) == 0) out.emplace_back(key.substr(p.size()), values_.at(key));
    }
    return out;
}

}  // namespace gridqa
