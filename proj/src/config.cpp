#include "drshift/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "drshift/errors.hpp"

namespace drshift {

std::string trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view text, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        out.push_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view text)
{
    const std::string s = trim(text);
    if (s.empty()) {
        return std::nullopt;
    }
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) {
        return std::nullopt;
    }
    return v;
}

std::string format_double(double value)
{
    // 17 significant digits round-trips every double.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

Config Config::parse(std::string_view text, const std::string& origin)
{
    Config cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.entries_[key] = trim(std::string_view(t).substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

std::string Config::get_string(const std::string& key) const
{
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw ConfigError("missing config key: " + key);
    }
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    return has(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const
{
    const auto v = parse_double(get_string(key));
    if (!v) {
        throw ConfigError("config key " + key + ": not a number: '" + get_string(key) + "'");
    }
    return *v;
}

double Config::get_double(const std::string& key, double fallback) const
{
    return has(key) ? get_double(key) : fallback;
}

long long Config::get_int(const std::string& key) const
{
    const double v = get_double(key);
    if (std::floor(v) != v || std::abs(v) > 9.0e15) {
        throw ConfigError("config key " + key + ": not an integer: '" + get_string(key) + "'");
    }
    return static_cast<long long>(v);
}

long long Config::get_int(const std::string& key, long long fallback) const
{
    return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const
{
    if (!has(key)) {
        return fallback;
    }
    const std::string v = get_string(key);
    if (v == "on" || v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "off" || v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError("config key " + key + ": expected on/off, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& item : split(get_string(key), ',')) {
        const auto v = parse_double(item);
        if (!v) {
            throw ConfigError("config key " + key + ": not a number list: '" + get_string(key) + "'");
        }
        out.push_back(*v);
    }
    return out;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const
{
    return has(key) ? get_doubles(key) : fallback;
}

std::vector<std::string> Config::get_strings(const std::string& key) const
{
    std::vector<std::string> out;
    for (auto& item : split(get_string(key), ',')) {
        if (!item.empty()) {
            out.push_back(std::move(item));
        }
    }
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const
{
    return has(key) ? get_strings(key) : fallback;
}

Config Config::subtree(const std::string& prefix) const
{
    Config out;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : entries_) {
        if (k.rfind(p, 0) == 0) {
            out.entries_[k.substr(p.size())] = v;
        }
    }
    return out;
}

std::string Config::emit() const
{
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

} // namespace drshift
