#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace modred::cli {

/// Thrown for anything the user can fix on the command line (exit code 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat "section.key" -> value store over a fixed set of known keys, each
/// with a default. Later sources override earlier ones.
class Config {
public:
    Config();

    void load_ini(const std::filesystem::path& path);
    /// "section.key=value".
    void apply_assignment(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    bool is_set(const std::string& key) const { return !get(key).empty(); }

    /// Every key, grouped by section; loading it reproduces this config.
    std::string to_ini() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace modred::cli
