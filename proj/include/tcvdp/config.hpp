#ifndef TCVDP_CONFIG_HPP
#define TCVDP_CONFIG_HPP

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tcvdp/common.hpp"

namespace tcvdp {

/// Formats a double with 17 significant digits so that text -> double ->
/// text round-trips losslessly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Flat key-value tree with dotted keys ("oscillator.omega"). File syntax:
/// one `key = value` per line, `#` starts a comment, blank lines ignored.
/// Insertion order is preserved on write so files diff cleanly.
class Settings {
public:
    Settings() = default;

    bool has(const std::string& key) const { return index_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) {
        auto it = index_.find(key);
        if (it == index_.end()) {
            index_[key] = entries_.size();
            entries_.push_back({key, value});
        } else {
            entries_[it->second].second = value;
        }
    }
    void set(const std::string& key, double v) { set(key, format_double(v)); }
    void set(const std::string& key, long v) { set(key, std::to_string(v)); }

    const std::string& get_str(const std::string& key) const {
        auto it = index_.find(key);
        if (it == index_.end())
            throw ConfigError("missing config key: " + key);
        return entries_[it->second].second;
    }
    std::string get_str(const std::string& key, const std::string& dflt) const {
        return has(key) ? get_str(key) : dflt;
    }

    double get_double(const std::string& key) const {
        const std::string& s = get_str(key);
        try {
            std::size_t pos = 0;
            double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: " + s);
        }
    }
    double get_double(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }

    long get_long(const std::string& key) const {
        const std::string& s = get_str(key);
        try {
            std::size_t pos = 0;
            long v = std::stol(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an integer: " + s);
        }
    }
    long get_long(const std::string& key, long dflt) const {
        return has(key) ? get_long(key) : dflt;
    }

    /// Comma-separated integer list, e.g. "4,8,16,32".
    std::vector<long> get_long_list(const std::string& key) const {
        std::vector<long> out;
        std::stringstream ss(get_str(key));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok.erase(std::remove_if(tok.begin(), tok.end(), ::isspace), tok.end());
            if (tok.empty()) continue;
            try {
                out.push_back(std::stol(tok));
            } catch (const std::exception&) {
                throw ConfigError("config key " + key + ": bad list entry: " + tok);
            }
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(get_str(key));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok.erase(std::remove_if(tok.begin(), tok.end(), ::isspace), tok.end());
            if (tok.empty()) continue;
            try {
                out.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ConfigError("config key " + key + ": bad list entry: " + tok);
            }
        }
        return out;
    }

    /// Applies one `key=value` override string (CLI --set). Last write wins.
    void apply_override(const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must be key=value: " + kv);
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }

    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

    static Settings parse(std::istream& in) {
        Settings s;
        std::string line;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
            s.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return s;
    }

    static Settings parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static Settings load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw ConfigError("cannot write config file: " + path);
        out << serialize();
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return entries_;
    }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace tcvdp

#endif
