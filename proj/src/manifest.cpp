#include "ethseq/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ethseq/common.hpp"

namespace ethseq {

std::uint64_t RunManifest::config_hash() const {
    std::uint64_t h = fnv1a64(subcommand);
    for (const auto& [key, value] : config) {
        h = fnv1a64(key, h);
        h = fnv1a64(value, h);
    }
    h = fnv1a64(&seed, sizeof seed, h);
    return h;
}

std::string RunManifest::to_json() const {
    nlohmann::json j{
        {"subcommand", subcommand},
        {"config", config},
        {"inputs", inputs},
        {"outputs", outputs},
        {"seed", seed},
        {"version", version},
    };
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash()));
    j["config_hash"] = buf;
    return j.dump(2) + "\n";
}

void RunManifest::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << to_json();
}

}  // namespace ethseq
