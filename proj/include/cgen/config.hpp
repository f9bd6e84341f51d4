#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cgen::io {

// Sectioned key = value configuration text:
//
//   # comment
//   [section]
//   key = value
//
// Parsing preserves section and key order so a resolved config diffs cleanly
// against the file it came from. Syntax problems and unknown keys are config
// errors; an unreadable file is an I/O error.
class Config {
public:
    using Section = std::vector<std::pair<std::string, std::string>>;

    Config() = default;

    static Config parse_file(const std::string& path);
    // origin names the source in error messages (a path or "<override>").
    static Config parse_text(const std::string& text, const std::string& origin);

    std::string str() const;
    void write_file(const std::string& path) const;

    bool has(const std::string& section, const std::string& key) const;
    // Missing keys are config errors; use *_or for optional keys.
    const std::string& get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;

    long long get_int(const std::string& section, const std::string& key) const;
    long long get_int_or(const std::string& section, const std::string& key,
                         long long fallback) const;
    double get_real(const std::string& section, const std::string& key) const;
    double get_real_or(const std::string& section, const std::string& key,
                       double fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;

    // Inserts or overwrites, keeping first-seen order.
    void set(const std::string& section, const std::string& key, const std::string& value);

    // Every present section.key must appear in `allowed`; strays are listed
    // in one config error so a typo cannot silently fall back to a default.
    void require_known(const std::map<std::string, std::set<std::string>>& allowed) const;

    const std::vector<std::pair<std::string, Section>>& sections() const { return sections_; }

private:
    const std::string* find(const std::string& section, const std::string& key) const;

    std::vector<std::pair<std::string, Section>> sections_;
};

}  // namespace cgen::io
