#pragma once

// Line-oriented `key = value` configuration with flag overrides.  Keys are
// validated by consumption: every getter marks its key used, and finish()
// rejects any key that nothing consumed.  echo() reports the effective value
// of every consumed key, defaults included.

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "wsr/common.hpp"

namespace wsr {

class RunConfig {
  public:
    RunConfig() = default;
    static RunConfig from_file(const std::string& path);

    // Later values win, matching flag-after-file precedence.
    void set(const std::string& key, const std::string& value);
    void apply_override(const std::string& key_eq_value);  // "key=value"

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& def);
    std::string require_string(const std::string& key);
    std::int64_t get_i64(const std::string& key, std::int64_t def);
    double get_double(const std::string& key, double def);
    bool get_bool(const std::string& key, bool def);
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def);
    // "1500@3e-4,500@1e-4" -> {(1500, 3e-4), (500, 1e-4)}
    std::vector<std::pair<std::int64_t, double>> get_schedule(
        const std::string& key, const std::vector<std::pair<std::int64_t, double>>& def);

    void finish() const;                  // throws ConfigError on unconsumed keys
    void echo(std::ostream& os) const;    // one "config key = value" line per consumed key

  private:
    std::string take(const std::string& key, const std::string& def, bool required);
    std::map<std::string, std::string> kv_;
    mutable std::map<std::string, std::string> effective_;
};

}  // namespace wsr
