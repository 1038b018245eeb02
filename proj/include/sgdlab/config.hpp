#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdlab {

// Configs are plain text, one `key = value` per line. Keys are dotted
// lowercase paths (noise.kind); values are numbers, bare or quoted strings,
// booleans, [lists] or [[matrices]] (brackets may continue across lines);
// `#` starts a comment. The grammar is documented in the README.
struct ConfigError : std::runtime_error {
    int line;
    ConfigError(const std::string& msg, int line_no)
        : std::runtime_error(line_no > 0 ? msg + " (line " + std::to_string(line_no) + ")" : msg),
          line(line_no) {}
};

class ConfigMap {
public:
    void set(const std::string& key, const std::string& raw, int line);

    bool has(const std::string& key) const;
    // keys under a dotted prefix, e.g. prefix "noise" matches "noise.kind"
    bool has_prefix(const std::string& prefix) const;

    double get_number(const std::string& key) const;
    double get_number(const std::string& key, double fallback) const;
    long get_integer(const std::string& key) const;
    long get_integer(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<double> get_list(const std::string& key) const;
    Eigen::VectorXd get_vector(const std::string& key) const;
    Eigen::MatrixXd get_matrix(const std::string& key) const;

    int line_of(const std::string& key) const;
    // keys present in the file but never read by any accessor
    std::vector<std::string> unused_keys() const;
    std::vector<std::string> keys() const;

private:
    struct Entry {
        std::string raw;
        int line;
        mutable bool used = false;
    };
    const Entry& require(const std::string& key) const;
    std::map<std::string, Entry> entries_;
};

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

}  // namespace sgdlab
