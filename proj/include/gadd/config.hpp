#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gadd/common.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// Flat sectioned key-value configuration files:
//
//   [section]
//   key = value        # full-line comments start with '#'
//
// Overrides arrive as dotted keys: "section.key=value".
// ---------------------------------------------------------------------------

class ConfigFile {
public:
    static ConfigFile parse_string(const std::string& text) {
        ConfigFile cfg;
        std::istringstream is(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw InvalidConfig("config line " + std::to_string(lineno) +
                                        ": unterminated section header");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty())
                    throw InvalidConfig("config line " + std::to_string(lineno) +
                                        ": empty section name");
                cfg.sections_[section];
                continue;
            }
            const std::size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw InvalidConfig("config line " + std::to_string(lineno) +
                                    ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw InvalidConfig("config line " + std::to_string(lineno) + ": empty key");
            if (section.empty())
                throw InvalidConfig("config line " + std::to_string(lineno) +
                                    ": key outside of any [section]");
            cfg.sections_[section][key] = value;
        }
        return cfg;
    }

    static ConfigFile parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config file: " + path);
        std::stringstream buf;
        buf << is.rdbuf();
        return parse_string(buf.str());
    }

    /// Applies a "section.key=value" override.
    void set(const std::string& assignment) {
        const std::size_t eq = assignment.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("--set expects section.key=value, got: " + assignment);
        const std::string dotted = trim(assignment.substr(0, eq));
        const std::size_t dot = dotted.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 >= dotted.size())
            throw InvalidConfig("--set expects section.key=value, got: " + assignment);
        sections_[dotted.substr(0, dot)][dotted.substr(dot + 1)] = trim(assignment.substr(eq + 1));
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s == sections_.end() || !s->second.count(key))
            throw InvalidConfig("config: missing " + section + "." + key);
        return s->second.at(key);
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        return has(section, key) ? get(section, key) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) const {
        return parse_double(get(section, key), section + "." + key);
    }
    double get_double_or(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }
    long get_long(const std::string& section, const std::string& key) const {
        return parse_long(get(section, key), section + "." + key);
    }
    long get_long_or(const std::string& section, const std::string& key, long fallback) const {
        return has(section, key) ? get_long(section, key) : fallback;
    }
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string v = get(section, key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw InvalidConfig("config: bad boolean for " + section + "." + key + ": " + v);
    }

    /// Comma-separated list of numbers.
    template <typename T>
    std::vector<T> get_list(const std::string& section, const std::string& key) const {
        std::vector<T> out;
        std::istringstream is(get(section, key));
        std::string item;
        while (std::getline(is, item, ',')) {
            const std::string v = trim(item);
            if (v.empty()) continue;
            if constexpr (std::is_floating_point_v<T>)
                out.push_back(static_cast<T>(parse_double(v, section + "." + key)));
            else
                out.push_back(static_cast<T>(parse_long(v, section + "." + key)));
        }
        if (out.empty()) throw InvalidConfig("config: empty list for " + section + "." + key);
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) return "";
        const auto end = s.find_last_not_of(" \t\r\n");
        return s.substr(begin, end - begin + 1);
    }

    static double parse_double(const std::string& v, const std::string& what) {
        std::size_t pos = 0;
        double out = 0.0;
        try {
            out = std::stod(v, &pos);
        } catch (const std::exception&) {
            throw InvalidConfig("config: bad number for " + what + ": " + v);
        }
        if (pos != v.size()) throw InvalidConfig("config: bad number for " + what + ": " + v);
        return out;
    }

    static long parse_long(const std::string& v, const std::string& what) {
        std::size_t pos = 0;
        long out = 0;
        try {
            out = std::stol(v, &pos);
        } catch (const std::exception&) {
            throw InvalidConfig("config: bad integer for " + what + ": " + v);
        }
        if (pos != v.size()) throw InvalidConfig("config: bad integer for " + what + ": " + v);
        return out;
    }

    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace gadd
