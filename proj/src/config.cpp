#include "cgen/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cgen/errors.hpp"

namespace cgen::io {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "' for reading");
    std::ostringstream text;
    text << is.rdbuf();
    return parse_text(text.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream is(text);
    std::string line, section;
    std::size_t lineno = 0;
    bool have_section = false;
    while (std::getline(is, line)) {
        ++lineno;
        auto fail = [&](const std::string& why) -> void {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + why);
        };
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) fail("malformed section header '" + t + "'");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) fail("empty section name");
            have_section = true;
            // materialize the section even if it stays empty
            for (auto& [name, entries] : cfg.sections_) {
                (void)entries;
                if (name == section) fail("duplicate section [" + section + "]");
            }
            cfg.sections_.emplace_back(section, Section{});
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail("expected key = value, got '" + t + "'");
        if (!have_section) fail("key outside any [section]");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) fail("empty key");
        if (cfg.has(section, key)) fail("duplicate key '" + key + "' in [" + section + "]");
        cfg.sections_.back().second.emplace_back(key, value);
    }
    return cfg;
}

std::string Config::str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < sections_.size(); ++i) {
        if (i) os << "\n";
        os << "[" << sections_[i].first << "]\n";
        for (const auto& [k, v] : sections_[i].second) os << k << " = " << v << "\n";
    }
    return os.str();
}

void Config::write_file(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open config '" + path + "' for writing");
    os << str();
    if (!os) throw IoError("short write to '" + path + "'");
}

const std::string* Config::find(const std::string& section, const std::string& key) const {
    for (const auto& [name, entries] : sections_) {
        if (name != section) continue;
        for (const auto& [k, v] : entries) {
            if (k == key) return &v;
        }
    }
    return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (!v) throw ConfigError("missing config key " + section + "." + key);
    return *v;
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
}

namespace {

long long parse_int(const std::string& section, const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) {
        throw ConfigError("config key " + section + "." + key + ": '" + v +
                          "' is not an integer");
    }
    return out;
}

double parse_real(const std::string& section, const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) {
        throw ConfigError("config key " + section + "." + key + ": '" + v + "' is not a number");
    }
    return out;
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + section + "." + key + ": '" + v + "' is not a boolean");
}

}  // namespace

long long Config::get_int(const std::string& section, const std::string& key) const {
    return parse_int(section, key, get(section, key));
}

long long Config::get_int_or(const std::string& section, const std::string& key,
                             long long fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_int(section, key, *v) : fallback;
}

double Config::get_real(const std::string& section, const std::string& key) const {
    return parse_real(section, key, get(section, key));
}

double Config::get_real_or(const std::string& section, const std::string& key,
                           double fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_real(section, key, *v) : fallback;
}

bool Config::get_bool_or(const std::string& section, const std::string& key,
                         bool fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_bool(section, key, *v) : fallback;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& [name, entries] : sections_) {
        if (name != section) continue;
        for (auto& [k, v] : entries) {
            if (k == key) {
                v = value;
                return;
            }
        }
        entries.emplace_back(key, value);
        return;
    }
    sections_.emplace_back(section, Section{{key, value}});
}

void Config::require_known(const std::map<std::string, std::set<std::string>>& allowed) const {
    std::string strays;
    for (const auto& [name, entries] : sections_) {
        const auto it = allowed.find(name);
        for (const auto& [k, v] : entries) {
            (void)v;
            if (it == allowed.end() || !it->second.count(k)) {
                if (!strays.empty()) strays += ", ";
                strays += name + "." + k;
            }
        }
    }
    if (!strays.empty()) throw ConfigError("unknown config keys: " + strays);
}

}  // namespace cgen::io
