#include "esiqa/data/kv_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace esiqa {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(line_no));
        cfg.set(key, trim(t.substr(eq + 1)));
    }
    return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KvConfig::dump() const {
    std::string out;
    for (const auto& key : order_) out += key + " = " + values_.at(key) + "\n";
    return out;
}

void KvConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("config: cannot write " + path);
    out << dump();
}

void KvConfig::set(const std::string& key, std::string value) {
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = std::move(value);
}

std::optional<std::string> KvConfig::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' is not a number: " + *v);
    }
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("config: '" + key + "' is not an integer: " + *v);
    }
    return out;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config: '" + key + "' is not a boolean: " + *v);
}

std::vector<std::int64_t> KvConfig::get_int_list(const std::string& key, const std::vector<std::int64_t>& fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    std::string s = *v;
    if (!s.empty() && s.front() == '[') s.erase(0, 1);
    if (!s.empty() && s.back() == ']') s.pop_back();
    std::vector<std::int64_t> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::int64_t x = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
        if (ec != std::errc{} || ptr != item.data() + item.size()) {
            throw ConfigError("config: '" + key + "' has a non-integer entry: " + item);
        }
        out.push_back(x);
    }
    return out;
}

}  // namespace esiqa
