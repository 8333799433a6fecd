#include "wsr/runconfig.hpp"

#include <fstream>
#include <sstream>

namespace wsr {
namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        cfg.set(key, val);
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { kv_[key] = value; }

void RunConfig::apply_override(const std::string& key_eq_value) {
    const auto eq = key_eq_value.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key=value, got \"" + key_eq_value + "\"");
    set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

std::string RunConfig::take(const std::string& key, const std::string& def, bool required) {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        if (required) throw ConfigError("missing required config key \"" + key + "\"");
        effective_[key] = def;
        return def;
    }
    effective_[key] = it->second;
    return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& def) {
    return take(key, def, false);
}

std::string RunConfig::require_string(const std::string& key) { return take(key, "", true); }

std::int64_t RunConfig::get_i64(const std::string& key, std::int64_t def) {
    const std::string v = take(key, std::to_string(def), false);
    try {
        std::size_t pos;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key \"" + key + "\": expected integer, got \"" + v + "\"");
    }
}

double RunConfig::get_double(const std::string& key, double def) {
    std::ostringstream ds;
    ds << def;
    const std::string v = take(key, ds.str(), false);
    try {
        std::size_t pos;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key \"" + key + "\": expected number, got \"" + v + "\"");
    }
}

bool RunConfig::get_bool(const std::string& key, bool def) {
    const std::string v = take(key, def ? "1" : "0", false);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config key \"" + key + "\": expected boolean, got \"" + v + "\"");
}

std::vector<int> RunConfig::get_int_list(const std::string& key, const std::vector<int>& def) {
    std::ostringstream ds;
    for (std::size_t i = 0; i < def.size(); ++i) ds << (i ? "," : "") << def[i];
    const std::string v = take(key, ds.str(), false);
    std::vector<int> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            out.push_back(std::stoi(trim(tok)));
        } catch (const std::exception&) {
            throw ConfigError("config key \"" + key + "\": expected integer list, got \"" + v + "\"");
        }
    }
    if (out.empty())
        throw ConfigError("config key \"" + key + "\": expected a non-empty integer list");
    return out;
}

std::vector<std::pair<std::int64_t, double>> RunConfig::get_schedule(
    const std::string& key, const std::vector<std::pair<std::int64_t, double>>& def) {
    std::ostringstream ds;
    for (std::size_t i = 0; i < def.size(); ++i)
        ds << (i ? "," : "") << def[i].first << '@' << def[i].second;
    const std::string v = take(key, ds.str(), false);
    std::vector<std::pair<std::int64_t, double>> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        const auto at = tok.find('@');
        if (at == std::string::npos)
            throw ConfigError("config key \"" + key + "\": segments look like steps@lr, got \"" +
                              tok + "\"");
        try {
            out.emplace_back(std::stoll(trim(tok.substr(0, at))), std::stod(trim(tok.substr(at + 1))));
        } catch (const std::exception&) {
            throw ConfigError("config key \"" + key + "\": bad segment \"" + tok + "\"");
        }
    }
    if (out.empty()) throw ConfigError("config key \"" + key + "\": empty schedule");
    return out;
}

void RunConfig::finish() const {
    std::string unknown;
    for (const auto& [k, v] : kv_)
        if (!effective_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

void RunConfig::echo(std::ostream& os) const {
    for (const auto& [k, v] : effective_) os << "config " << k << " = " << v << "\n";
}

}  // namespace wsr
