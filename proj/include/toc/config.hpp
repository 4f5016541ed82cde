#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "toc/error.hpp"

namespace toc {

// Flat "section.key" -> value table with typed accessors. All keys carry
// defaults; an INI file and CLI --set overrides may only touch known keys.
class RunConfig {
public:
    RunConfig();  // defaults

    void load_file(const std::string& path);
    void set(const std::string& dotted_key, const std::string& value);  // unknown key -> error

    int geti(const std::string& key) const;
    int64_t geti64(const std::string& key) const;
    double getf(const std::string& key) const;
    uint64_t getu64(const std::string& key) const;
    std::string gets(const std::string& key) const;

    // INI text of the fully resolved configuration.
    std::string resolved() const;

    // Keys explicitly assigned via file or set(), for run-dir merging.
    const std::set<std::string>& touched() const { return touched_; }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> touched_;
    const std::string& raw(const std::string& key) const;
};

}  // namespace toc
