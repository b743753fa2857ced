#pragma once

#include "pclnet/common.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace pclnet::cfg {

// Minimal TOML-style reader: [section] headers, key = value lines, '#'
// comments. Values are strings, numbers, booleans, or flat arrays.
struct Value {
    std::string raw;

    std::string as_string() const {
        std::string s = raw;
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
        return s;
    }
    double as_double() const { return std::stod(raw); }
    long as_long() const { return std::stol(raw); }
    bool as_bool() const {
        if (raw == "true") return true;
        if (raw == "false") return false;
        throw ConfigError("config: expected a boolean, got '" + raw + "'");
    }
    std::vector<double> as_doubles() const {
        std::vector<double> out;
        std::string body = raw;
        if (body.size() >= 2 && body.front() == '[' && body.back() == ']')
            body = body.substr(1, body.size() - 2);
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t b = item.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            out.push_back(std::stod(item.substr(b)));
        }
        return out;
    }
};

class Table {
public:
    void set(const std::string& key, std::string raw) { kv_[key] = Value{std::move(raw)}; }
    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    const Value& at(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError("config: missing key '" + key + "'");
        return it->second;
    }
    const std::map<std::string, Value>& items() const { return kv_; }

private:
    std::map<std::string, Value> kv_;
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::map<std::string, Table> parse(std::istream& in) {
    std::map<std::string, Table> out;
    std::string section = "run";
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            // keep '#' inside quoted strings
            std::size_t q1 = line.find('"');
            if (q1 == std::string::npos || hash < q1) line = line.substr(0, hash);
        }
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("config line " + std::to_string(line_no) +
                                                   ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        out[section].set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

inline std::map<std::string, Table> parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    return parse(f);
}

} // namespace pclnet::cfg
