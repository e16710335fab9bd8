#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ethseq {

inline constexpr char kVersion[] = "0.1.0";

// Every stage writes one of these next to its outputs. Contents are a pure
// function of the resolved configuration so re-runs are byte-identical.
struct RunManifest {
    std::string subcommand;
    std::map<std::string, std::string> config;  // resolved settings, stringified
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    std::string version = kVersion;

    std::uint64_t config_hash() const;
    std::string to_json() const;
    void save(const std::string& dir) const;  // writes <dir>/manifest.json
};

}  // namespace ethseq
