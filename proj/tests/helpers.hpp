// Shared test scaffolding: temp directories and hand-built profiles.
#pragma once

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lmphylo/population.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("lmphylo-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Profile from literal per-gene allele counts. Gene ids g0, g1, ...
/// probes_requested defaults to the max per-gene total (plus failures).
inline lmphylo::PopulationProfile
make_profile(const std::string& model_id,
             const std::vector<std::map<std::string, std::int64_t>>& counts,
             std::int64_t failures_per_gene = 0) {
    lmphylo::PopulationProfile p;
    p.model_id = model_id;
    std::int64_t probes = 0;
    for (std::size_t g = 0; g < counts.size(); ++g) {
        lmphylo::GeneCounts gc;
        gc.failures = failures_per_gene;
        std::int64_t total = failures_per_gene;
        for (const auto& [text, n] : counts[g]) {
            gc.counts[{text, false}] = n;
            total += n;
        }
        probes = std::max(probes, total);
        p.gene_ids.push_back("g" + std::to_string(g));
        p.per_gene.push_back(std::move(gc));
    }
    p.probes_requested = probes;
    return p;
}

} // namespace testutil
