// Run configuration for probing commands. JSON file; command-line flags
// override individual fields. Secrets never appear here, only environment
// variable names inside the roster.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lmphylo/errors.hpp"
#include "lmphylo/util/fs.hpp"

namespace lmphylo {

struct RunConfig {
    std::string roster_path;
    std::string genes_path;
    std::int64_t probes = 32;
    int parallelism = 4;
    std::string cache_dir = "cache";
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    // sampling overrides applied to every roster model when present
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<std::int64_t> max_new_tokens;
    std::optional<std::int64_t> allele_chars;

    void validate() const {
        if (probes < 1)
            throw config_error("config: probes must be >= 1");
        if (parallelism < 1)
            throw config_error("config: parallelism must be >= 1");
        if (!roster_path.empty() && !std::filesystem::exists(roster_path))
            throw config_error("config: roster path does not exist: " + roster_path);
        if (!genes_path.empty() && !std::filesystem::exists(genes_path))
            throw config_error("config: gene-set path does not exist: " + genes_path);
    }
};

inline RunConfig run_config_from_string(const std::string& body, const std::string& origin = "config") {
    try {
        const auto obj = nlohmann::json::parse(body);
        RunConfig cfg;
        cfg.roster_path = obj.value("roster", std::string());
        cfg.genes_path = obj.value("genes", std::string());
        cfg.probes = obj.value("probes", std::int64_t{32});
        cfg.parallelism = obj.value("parallelism", 4);
        cfg.cache_dir = obj.value("cache_dir", std::string("cache"));
        cfg.out_dir = obj.value("out_dir", std::string("out"));
        cfg.seed = obj.value("seed", std::uint64_t{0});
        if (obj.contains("sampling")) {
            const auto& s = obj["sampling"];
            if (s.contains("temperature"))
                cfg.temperature = s["temperature"].get<double>();
            if (s.contains("top_p"))
                cfg.top_p = s["top_p"].get<double>();
            if (s.contains("max_new_tokens"))
                cfg.max_new_tokens = s["max_new_tokens"].get<std::int64_t>();
            if (s.contains("allele_chars"))
                cfg.allele_chars = s["allele_chars"].get<std::int64_t>();
        }
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(origin + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_string(read_text_file(path), path.string());
}

} // namespace lmphylo
