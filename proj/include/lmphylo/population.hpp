// Populations: models viewed as per-gene distributions over alleles.
//
// An allele is the first `allele_chars` Unicode characters of a completion
// (default 4). Completions shorter than that become sentinel-terminated
// alleles so they stay distinct instead of being dropped; dropping them would
// break count conservation and bias the estimated P(a|g).
//
// A PopulationProfile holds, per gene, empirical allele counts out of N
// requested probes. The invariant `counts + failures == N` holds per gene;
// frequencies divide by (N - failures), treating failures as missing data.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmphylo/errors.hpp"
#include "lmphylo/genome.hpp"
#include "lmphylo/util/fs.hpp"
#include "lmphylo/util/unicode.hpp"

namespace lmphylo {

struct SamplingParams {
    double temperature = 0.7;
    double top_p = 1.0;
    std::int64_t max_new_tokens = 8; // >= allele_chars characters for any tokenizer
    std::int64_t allele_chars = 4;

    bool operator==(const SamplingParams&) const = default;
};

enum class Provider { http, synthetic, replay };

inline std::string provider_name(Provider p) {
    switch (p) {
    case Provider::http: return "http";
    case Provider::synthetic: return "synthetic";
    case Provider::replay: return "replay";
    }
    return "?";
}

inline Provider provider_from_name(const std::string& s) {
    if (s == "http") return Provider::http;
    if (s == "synthetic") return Provider::synthetic;
    if (s == "replay") return Provider::replay;
    throw parse_error("unknown provider '" + s + "' (expected http, synthetic or replay)");
}

struct ModelSpec {
    std::string id;
    std::string family;
    Provider provider = Provider::synthetic;
    std::string endpoint; // URL for http; data file path for synthetic/replay
    std::string auth_env; // environment variable holding the API secret
    SamplingParams sampling;

    bool operator==(const ModelSpec&) const = default;
};

/// An allele: up to allele_chars characters, optionally ending in the
/// end-of-sequence sentinel when the completion ran out early.
struct AlleleKey {
    std::string text;
    bool eos = false;

    auto operator<=>(const AlleleKey&) const = default;

    std::string display() const { return eos ? text + "<EOS>" : text; }
};

/// First allele_chars Unicode characters of a completion; the whole
/// completion plus a sentinel if it is shorter.
inline AlleleKey extract_allele(std::string_view completion, std::int64_t allele_chars = 4) {
    if (allele_chars <= 0)
        throw input_error("extract_allele: allele_chars must be positive");
    const std::size_t want = static_cast<std::size_t>(allele_chars);
    const std::size_t have = cp_count(completion);
    if (have < want)
        return {std::string(completion), true};
    return {std::string(cp_prefix(completion, want)), false};
}

struct GeneCounts {
    std::map<AlleleKey, std::int64_t> counts; // ordered: serialization is stable
    std::int64_t failures = 0;

    bool operator==(const GeneCounts&) const = default;

    std::int64_t successes() const {
        std::int64_t n = 0;
        for (const auto& kv : counts)
            n += kv.second;
        return n;
    }
};

struct PopulationProfile {
    std::string model_id;
    std::vector<std::string> gene_ids;
    std::vector<GeneCounts> per_gene; // parallel to gene_ids
    std::int64_t probes_requested = 0;
    std::string gene_fingerprint;
    std::string template_tag;
    bool degraded = false;

    bool operator==(const PopulationProfile&) const = default;

    std::int64_t total_failures() const {
        std::int64_t n = 0;
        for (const auto& g : per_gene)
            n += g.failures;
        return n;
    }

    /// counts + failures == probes_requested, for every gene.
    void check_conservation() const {
        for (std::size_t i = 0; i < per_gene.size(); ++i)
            if (per_gene[i].successes() + per_gene[i].failures != probes_requested)
                throw numeric_error("profile " + model_id + ": gene " + gene_ids[i] +
                                    " violates count conservation");
    }
};

/// Rebuild a profile with alleles truncated to `allele_chars` characters.
/// Profiles collected at a longer allele length can be re-cut client-side;
/// this is how the contrast sweep varies completion length without re-probing.
inline PopulationProfile truncate_alleles(const PopulationProfile& p, std::int64_t allele_chars) {
    if (allele_chars <= 0)
        throw input_error("truncate_alleles: allele_chars must be positive");
    PopulationProfile out = p;
    for (auto& gene : out.per_gene) {
        std::map<AlleleKey, std::int64_t> cut;
        for (const auto& [key, n] : gene.counts) {
            const std::size_t len = cp_count(key.text);
            AlleleKey k;
            if (len >= static_cast<std::size_t>(allele_chars))
                k = {std::string(cp_prefix(key.text, static_cast<std::size_t>(allele_chars))), false};
            else
                k = key; // still short: sentinel survives the re-cut
            cut[k] += n;
        }
        gene.counts = std::move(cut);
    }
    return out;
}

inline std::string profile_to_string(const PopulationProfile& p) {
    nlohmann::json header{{"record", "profile"},
                          {"version", 1},
                          {"model_id", p.model_id},
                          {"probes_requested", p.probes_requested},
                          {"gene_fingerprint", p.gene_fingerprint},
                          {"template_tag", p.template_tag},
                          {"degraded", p.degraded}};
    std::string out = header.dump();
    out += '\n';
    for (std::size_t i = 0; i < p.gene_ids.size(); ++i) {
        nlohmann::json alleles = nlohmann::json::array();
        for (const auto& [key, n] : p.per_gene[i].counts)
            alleles.push_back({{"t", key.text}, {"eos", key.eos}, {"n", n}});
        out += nlohmann::json{{"gene", p.gene_ids[i]},
                              {"failures", p.per_gene[i].failures},
                              {"alleles", std::move(alleles)}}
                   .dump();
        out += '\n';
    }
    return out;
}

inline void save_profile(const PopulationProfile& p, const std::filesystem::path& path) {
    atomic_write_file(path, profile_to_string(p));
}

inline PopulationProfile profile_from_string(const std::string& body, const std::string& origin = "profile") {
    PopulationProfile p;
    std::istringstream in(body);
    std::string line;
    std::size_t record_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++record_no;
        if (line.empty())
            continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(origin + ", record " + std::to_string(record_no) + ": " + e.what());
        }
        try {
            if (!saw_header) {
                if (!obj.contains("record") || obj["record"] != "profile")
                    throw parse_error(origin + ": first record is not a profile header");
                const auto version = obj.value("version", std::int64_t{-1});
                if (version != 1)
                    throw parse_error(origin + ": profile format version " + std::to_string(version) +
                                      " is not supported (expected 1); migrate the file first");
                p.model_id = obj.at("model_id").get<std::string>();
                p.probes_requested = obj.at("probes_requested").get<std::int64_t>();
                p.gene_fingerprint = obj.value("gene_fingerprint", std::string());
                p.template_tag = obj.value("template_tag", std::string());
                p.degraded = obj.value("degraded", false);
                saw_header = true;
                continue;
            }
            GeneCounts gc;
            gc.failures = obj.value("failures", std::int64_t{0});
            for (const auto& a : obj.at("alleles"))
                gc.counts[{a.at("t").get<std::string>(), a.value("eos", false)}] = a.at("n").get<std::int64_t>();
            p.gene_ids.push_back(obj.at("gene").get<std::string>());
            p.per_gene.push_back(std::move(gc));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(origin + ", record " + std::to_string(record_no) + ": " + e.what());
        }
    }
    if (!saw_header)
        throw parse_error(origin + ": missing profile header record");
    return p;
}

inline PopulationProfile load_profile(const std::filesystem::path& path) {
    return profile_from_string(read_text_file(path), path.string());
}

// ---- model rosters ---------------------------------------------------------

inline void validate_roster(const std::vector<ModelSpec>& roster) {
    std::set<std::string> ids;
    for (const auto& m : roster) {
        if (m.id.empty())
            throw input_error("roster: model with empty id");
        if (!ids.insert(m.id).second)
            throw input_error("roster: duplicate model id '" + m.id + "'");
        if (m.provider == Provider::http && m.endpoint.empty())
            throw input_error("roster: model '" + m.id + "' uses the http provider but has no endpoint");
        if (m.sampling.allele_chars <= 0 || m.sampling.max_new_tokens <= 0)
            throw input_error("roster: model '" + m.id + "' has non-positive sampling sizes");
        if (m.sampling.temperature < 0 || m.sampling.top_p <= 0 || m.sampling.top_p > 1)
            throw input_error("roster: model '" + m.id + "' has invalid sampling parameters");
    }
}

inline std::string roster_to_string(const std::vector<ModelSpec>& roster) {
    std::string out;
    for (const auto& m : roster) {
        out += nlohmann::json{{"id", m.id},
                              {"family", m.family},
                              {"provider", provider_name(m.provider)},
                              {"endpoint", m.endpoint},
                              {"auth_env", m.auth_env},
                              {"sampling",
                               {{"temperature", m.sampling.temperature},
                                {"top_p", m.sampling.top_p},
                                {"max_new_tokens", m.sampling.max_new_tokens},
                                {"allele_chars", m.sampling.allele_chars}}}}
                   .dump();
        out += '\n';
    }
    return out;
}

inline void save_roster(const std::vector<ModelSpec>& roster, const std::filesystem::path& path) {
    validate_roster(roster);
    atomic_write_file(path, roster_to_string(roster));
}

inline std::vector<ModelSpec> roster_from_string(const std::string& body, const std::string& origin = "roster") {
    std::vector<ModelSpec> roster;
    std::istringstream in(body);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            ModelSpec m;
            m.id = obj.at("id").get<std::string>();
            m.family = obj.value("family", std::string());
            m.provider = provider_from_name(obj.value("provider", std::string("http")));
            m.endpoint = obj.value("endpoint", std::string());
            m.auth_env = obj.value("auth_env", std::string());
            if (obj.contains("sampling")) {
                const auto& s = obj["sampling"];
                m.sampling.temperature = s.value("temperature", 0.7);
                m.sampling.top_p = s.value("top_p", 1.0);
                m.sampling.max_new_tokens = s.value("max_new_tokens", std::int64_t{8});
                m.sampling.allele_chars = s.value("allele_chars", std::int64_t{4});
            }
            roster.push_back(std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_roster(roster);
    return roster;
}

inline std::vector<ModelSpec> load_roster(const std::filesystem::path& path) {
    return roster_from_string(read_text_file(path), path.string());
}

} // namespace lmphylo
