#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sawspe {

/// Bad configuration key or value. The CLI treats it as a usage error.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    std::string_view name;
    std::string_view default_value;
    std::string_view doc;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

/// Effective run configuration. Layers, lowest first: built-in defaults,
/// a key = value file, SAWSPE_SEED / SAWSPE_THREADS, command-line flags.
class RunConfig {
public:
    RunConfig();

    /// Reads `key = value` lines; `#` starts a comment. Unknown keys and
    /// malformed lines throw ConfigError naming the line.
    void load_file(const std::filesystem::path& path);
    void load_text(std::string_view text, const std::string& source = "<config>");
    /// Applies SAWSPE_SEED and SAWSPE_THREADS if set.
    void apply_environment();
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// All keys in name order with their effective values.
    std::vector<std::pair<std::string, std::string>> snapshot() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace sawspe
