// Flat key=value run configuration with section prefixes (train.lr=0.001).
// Unknown keys are rejected. The LLREC_CONFIG environment variable may point
// at a config file; command-line flags override file values.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace literec {

class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_env_or_default();
    static const std::vector<std::string>& known_keys();

    void set(const std::string& key, const std::string& value);  // validates the key
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // stable digest of the effective configuration
    std::string fingerprint() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace literec
