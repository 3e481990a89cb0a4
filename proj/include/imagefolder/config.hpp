#pragma once

// Plain-text key/value configuration.
//
//   # comment to end of line
//   [section]            keys below are prefixed "section."
//   key = value          dotted keys are allowed anywhere
//
// Values are raw strings; typed getters parse on access. Lists are comma
// separated ("1,2,4"). Later assignments win, so flag overrides are applied
// with set() after parsing the file.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "imagefolder/error.hpp"

namespace imagefolder {

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool valid_key(std::string_view k) {
    if (k.empty() || k.front() == '.' || k.back() == '.') return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
    return k.find("..") == std::string_view::npos;
}

[[noreturn]] inline void config_fail(const std::string& msg) { throw Error(ErrorCode::config_error, msg); }

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end)
        config_fail("config: " + std::string(key) + " = '" + std::string(v) + "' is not a valid number");
    return out;
}

}  // namespace detail

class Config {
public:
    static Config parse(std::string_view text) {
        Config c;
        std::string section;
        int line_no = 0;
        std::istringstream in{std::string(text)};
        for (std::string raw; std::getline(in, raw);) {
            ++line_no;
            std::string_view line = raw;
            if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto where = "config line " + std::to_string(line_no) + ": ";
            if (line.front() == '[') {
                if (line.back() != ']') detail::config_fail(where + "unterminated section header");
                section = std::string(detail::trim(line.substr(1, line.size() - 2)));
                if (!detail::valid_key(section)) detail::config_fail(where + "bad section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) detail::config_fail(where + "expected key = value");
            const auto key = detail::trim(line.substr(0, eq));
            if (!detail::valid_key(key)) detail::config_fail(where + "bad key '" + std::string(key) + "'");
            c.set(section.empty() ? std::string(key) : section + "." + std::string(key),
                  std::string(detail::trim(line.substr(eq + 1))));
        }
        return c;
    }

    /// Applies "key=value" overrides.
    void apply_overrides(const std::vector<std::string>& overrides) {
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) detail::config_fail("override '" + o + "' is not key=value");
            const auto key = detail::trim(std::string_view(o).substr(0, eq));
            if (!detail::valid_key(key)) detail::config_fail("override has bad key '" + std::string(key) + "'");
            set(std::string(key), std::string(detail::trim(std::string_view(o).substr(eq + 1))));
        }
    }

    void set(const std::string& key, std::string value) {
        if (!detail::valid_key(key)) detail::config_fail("config: bad key '" + key + "'");
        if (value.find_first_of("#\n") != std::string::npos)
            detail::config_fail("config: value of " + key + " contains '#' or a newline");
        values_[key] = std::move(value);
    }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return has(key) ? detail::parse_number<std::int64_t>(key, values_.at(key)) : fallback;
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? detail::parse_number<std::uint64_t>(key, values_.at(key)) : fallback;
    }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? detail::parse_number<double>(key, values_.at(key)) : fallback;
    }
    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        detail::config_fail("config: " + key + " = '" + v + "' is not a boolean");
    }
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<int> out;
        std::string_view rest = values_.at(key);
        while (true) {
            const auto comma = rest.find(',');
            const auto item = detail::trim(rest.substr(0, comma));
            out.push_back(detail::parse_number<int>(key, item));
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        return out;
    }

    /// Rejects keys outside `known` (typos would otherwise be silently ignored).
    void require_known(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            if (!known.count(k)) detail::config_fail("config: unknown key '" + k + "'");
    }

    /// Canonical form: one "key = value" line per key, sorted. parse(dump()) == *this.
    std::string dump() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }
    friend bool operator==(const Config&, const Config&) = default;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace imagefolder
