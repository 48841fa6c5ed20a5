#pragma once

// UTF-8 "key = value" text, one pair per line. '#' starts a comment line.
// Keys keep their order of first appearance; a repeated key overwrites.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace esiqa {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class KvConfig {
public:
    static KvConfig parse(const std::string& text);
    static KvConfig load(const std::string& path);

    std::string dump() const;
    void save(const std::string& path) const;

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, std::string value);
    const std::vector<std::string>& keys() const { return order_; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated list, optionally bracketed: "[2, 2, 8, 4]".
    std::vector<std::int64_t> get_int_list(const std::string& key, const std::vector<std::int64_t>& fallback) const;

private:
    std::optional<std::string> raw(const std::string& key) const;

    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

}  // namespace esiqa
