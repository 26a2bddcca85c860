#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace drshift {

/// Flat key-value configuration.
///
/// One `key = value` pair per line; keys are dotted paths such as
/// `pilot.ratio.lambda`. Blank lines and lines starting with `#` are ignored.
/// List values are comma separated. Every accessor failure throws ConfigError
/// naming the offending key.
class Config {
public:
    Config() = default;

    static Config parse(std::string_view text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void erase(const std::string& key) { entries_.erase(key); }

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::string> get_strings(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key,
                                         const std::vector<std::string>& fallback) const;

    /// Keys under `prefix.` with the prefix stripped.
    Config subtree(const std::string& prefix) const;

    /// Canonical text form: keys sorted, `key = value` per line.
    std::string emit() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    bool operator==(const Config&) const = default;

private:
    std::map<std::string, std::string> entries_;
};

/// Strict numeric parsing shared with the CSV reader.
std::optional<double> parse_double(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);
std::string format_double(double value);

} // namespace drshift
