#include "sgdlab/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace sgdlab {

namespace {

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

int bracket_balance(const std::string& s) {
    int b = 0;
    bool quoted = false;
    for (char c : s) {
        if (c == '"') quoted = !quoted;
        if (quoted) continue;
        if (c == '[') ++b;
        if (c == ']') --b;
    }
    return b;
}

double parse_double(const std::string& raw, const std::string& key, int line) {
    std::string s = strip(raw);
    const char* b = s.data();
    const char* e = s.data() + s.size();
    double v = 0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw ConfigError("value of '" + key + "' is not a number: '" + s + "'", line);
    return v;
}

std::vector<std::string> split_top_level(const std::string& body, const std::string& key, int line) {
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char c : body) {
        if (c == '[') ++depth;
        if (c == ']') --depth;
        if (depth < 0) throw ConfigError("unbalanced ']' in value of '" + key + "'", line);
        if (c == ',' && depth == 0) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (depth != 0) throw ConfigError("unbalanced '[' in value of '" + key + "'", line);
    if (!strip(cur).empty() || !parts.empty()) parts.push_back(cur);
    return parts;
}

}  // namespace

void ConfigMap::set(const std::string& key, const std::string& raw, int line) {
    if (entries_.count(key))
        throw ConfigError("duplicate key '" + key + "'", line);
    entries_[key] = Entry{strip(raw), line, false};
}

bool ConfigMap::has(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    it->second.used = true;
    return true;
}

bool ConfigMap::has_prefix(const std::string& prefix) const {
    auto it = entries_.lower_bound(prefix + ".");
    return it != entries_.end() && it->first.rfind(prefix + ".", 0) == 0;
}

const ConfigMap::Entry& ConfigMap::require(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'", 0);
    it->second.used = true;
    return it->second;
}

double ConfigMap::get_number(const std::string& key) const {
    const Entry& e = require(key);
    return parse_double(e.raw, key, e.line);
}

double ConfigMap::get_number(const std::string& key, double fallback) const {
    return has(key) ? get_number(key) : fallback;
}

long ConfigMap::get_integer(const std::string& key) const {
    const Entry& e = require(key);
    double v = parse_double(e.raw, key, e.line);
    long i = static_cast<long>(v);
    if (static_cast<double>(i) != v)
        throw ConfigError("value of '" + key + "' is not an integer", e.line);
    return i;
}

long ConfigMap::get_integer(const std::string& key, long fallback) const {
    return has(key) ? get_integer(key) : fallback;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Entry& e = require(key);
    if (e.raw == "true") return true;
    if (e.raw == "false") return false;
    throw ConfigError("value of '" + key + "' must be true or false", e.line);
}

std::string ConfigMap::get_string(const std::string& key) const {
    const Entry& e = require(key);
    std::string s = e.raw;
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::vector<double> ConfigMap::get_list(const std::string& key) const {
    const Entry& e = require(key);
    std::string s = e.raw;
    if (s.empty() || s.front() != '[' || s.back() != ']')
        throw ConfigError("value of '" + key + "' must be a [list]", e.line);
    std::vector<double> out;
    for (const std::string& part : split_top_level(s.substr(1, s.size() - 2), key, e.line))
        out.push_back(parse_double(part, key, e.line));
    return out;
}

Eigen::VectorXd ConfigMap::get_vector(const std::string& key) const {
    std::vector<double> v = get_list(key);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd ConfigMap::get_matrix(const std::string& key) const {
    const Entry& e = require(key);
    std::string s = e.raw;
    if (s.empty() || s.front() != '[' || s.back() != ']')
        throw ConfigError("value of '" + key + "' must be a [[matrix]]", e.line);
    std::string body = strip(s.substr(1, s.size() - 2));
    if (body.empty()) throw ConfigError("empty matrix for '" + key + "'", e.line);
    if (body.front() != '[') {
        // a flat [list] denotes a 1-row matrix only when 1x1
        std::vector<double> v = get_list(key);
        if (v.size() != 1)
            throw ConfigError("value of '" + key + "' must be a nested [[matrix]]", e.line);
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = v[0];
        return m;
    }
    std::vector<std::vector<double>> rows;
    for (const std::string& part : split_top_level(body, key, e.line)) {
        std::string r = strip(part);
        if (r.size() < 2 || r.front() != '[' || r.back() != ']')
            throw ConfigError("malformed matrix row in '" + key + "'", e.line);
        std::vector<double> row;
        for (const std::string& cell : split_top_level(r.substr(1, r.size() - 2), key, e.line))
            row.push_back(parse_double(cell, key, e.line));
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError("ragged matrix rows in '" + key + "'", e.line);
        rows.push_back(row);
    }
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

int ConfigMap::line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

std::vector<std::string> ConfigMap::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_)
        if (!e.used) out.push_back(k);
    return out;
}

std::vector<std::string> ConfigMap::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) out.push_back(k);
    return out;
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        int first_line = line_no;
        std::string logical = strip_comment(line);
        // values with open brackets continue on following lines
        while (bracket_balance(logical) > 0) {
            std::string next;
            if (!std::getline(in, next))
                throw ConfigError("unterminated '[' starting here", first_line);
            ++line_no;
            logical += " " + strip_comment(next);
        }
        if (bracket_balance(logical) < 0)
            throw ConfigError("unbalanced ']'", first_line);
        std::string s = strip(logical);
        if (s.empty()) continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value', got '" + s + "'", first_line);
        std::string key = strip(s.substr(0, eq));
        std::string val = strip(s.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", first_line);
        for (char c : key)
            if (!std::islower(static_cast<unsigned char>(c)) &&
                !std::isdigit(static_cast<unsigned char>(c)) && c != '.' && c != '_')
                throw ConfigError("invalid key '" + key + "' (lowercase dotted names only)",
                                  first_line);
        if (val.empty()) throw ConfigError("empty value for '" + key + "'", first_line);
        cfg.set(key, val, first_line);
    }
    return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace sgdlab
