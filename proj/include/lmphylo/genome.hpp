// Gene sets: fixed text contexts sampled from a corpus.
//
// A gene is a prefix of a corpus record, truncated at a character index drawn
// uniformly from [min_cut, max_cut] (clipped to the record length). Sampling
// is a pure function of (corpus, count, seed, min_cut, max_cut): record choice
// and cut index for gene k are keyed independently of gene k-1, so gene sets
// can be regenerated or extended in parallel.
//
// On disk a gene set is UTF-8 JSON-lines: an optional header record followed
// by one gene object per line with fields id / context / source / cut_index.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmphylo/errors.hpp"
#include "lmphylo/util/fs.hpp"
#include "lmphylo/util/rng.hpp"
#include "lmphylo/util/unicode.hpp"

namespace lmphylo {

struct Gene {
    std::string id;
    std::string context;   // the text presented to models, verbatim
    std::string source;    // provenance tag, e.g. "corpus.txt:42"
    std::int64_t cut_index = 0; // character count at which the source was cut

    bool operator==(const Gene&) const = default;
};

/// Prompt wrapping applied around every gene context (chat-style probing).
struct GeneTemplate {
    std::string prefix;
    std::string suffix;

    bool operator==(const GeneTemplate&) const = default;

    std::string tag() const { return prefix + "[GENE]" + suffix; }
};

struct GeneSet {
    std::string name;
    std::vector<Gene> genes;
    std::uint64_t rng_seed = 0;
    std::optional<GeneTemplate> tmpl;
    std::uint64_t duplicate_contexts = 0; // warning count, duplicates are kept

    bool operator==(const GeneSet&) const = default;

    /// Tag recorded into profiles so differently templated runs never mix.
    std::string template_tag() const { return tmpl ? tmpl->tag() : std::string(); }

    /// Stable digest of ids + contexts; profiles carry it so that matrices
    /// are only ever computed across identical gene sets.
    std::string fingerprint() const {
        std::uint64_t h = 0x9E3779B97F4A7C15ull;
        for (const auto& g : genes) {
            h = mix64(h ^ stable_hash64(g.id));
            h = mix64(h ^ stable_hash64(g.context));
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }
};

struct CorpusRecord {
    std::string text;
    std::string source;
};

using Corpus = std::vector<CorpusRecord>;

/// One record per line; empty lines are kept as records (they are simply
/// never eligible for sampling). Sources are "path:lineno", 1-based.
inline Corpus load_corpus(const std::filesystem::path& path) {
    const std::string body = read_text_file(path);
    Corpus corpus;
    std::size_t line_no = 1, start = 0;
    for (std::size_t i = 0; i <= body.size(); ++i) {
        if (i == body.size() || body[i] == '\n') {
            std::string text = body.substr(start, i - start);
            if (!text.empty() && text.back() == '\r')
                text.pop_back();
            if (i < body.size() || !text.empty())
                corpus.push_back({std::move(text), path.filename().string() + ":" + std::to_string(line_no)});
            start = i + 1;
            ++line_no;
        }
    }
    return corpus;
}

/// Sample `count` genes from the corpus. Records shorter than min_cut
/// characters are skipped. Selection is uniform without replacement while
/// eligible records last, with replacement otherwise.
inline GeneSet sample_genes(const Corpus& corpus, std::int64_t count, std::uint64_t seed,
                            std::int64_t min_cut = 20, std::int64_t max_cut = 100) {
    if (corpus.empty())
        throw input_error("sample_genes: corpus is empty");
    if (count <= 0)
        throw input_error("sample_genes: count must be positive, got " + std::to_string(count));
    if (min_cut < 1 || min_cut > max_cut)
        throw input_error("sample_genes: need 1 <= min_cut <= max_cut, got [" +
                          std::to_string(min_cut) + ", " + std::to_string(max_cut) + "]");

    struct Eligible {
        std::size_t index;
        std::int64_t cp_len;
    };
    std::vector<Eligible> eligible;
    std::int64_t longest = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto len = static_cast<std::int64_t>(cp_count(corpus[i].text));
        longest = std::max(longest, len);
        if (len >= min_cut)
            eligible.push_back({i, len});
    }
    if (eligible.empty())
        throw input_error("sample_genes: no record reaches min_cut=" + std::to_string(min_cut) +
                          " characters (longest record has " + std::to_string(longest) + ")");

    const bool without_replacement = static_cast<std::size_t>(count) <= eligible.size();
    if (without_replacement) {
        // Rank eligible records by a keyed hash: a uniform permutation that is
        // a pure function of (seed, record index).
        std::sort(eligible.begin(), eligible.end(), [&](const Eligible& a, const Eligible& b) {
            const auto ka = RngStream::keyed(seed, std::string_view("record"), static_cast<std::uint64_t>(a.index)).next();
            const auto kb = RngStream::keyed(seed, std::string_view("record"), static_cast<std::uint64_t>(b.index)).next();
            return ka != kb ? ka < kb : a.index < b.index;
        });
    }

    GeneSet out;
    out.rng_seed = seed;
    out.name = "genes-" + std::to_string(count) + "-s" + std::to_string(seed);
    out.genes.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        const Eligible& pick =
            without_replacement
                ? eligible[static_cast<std::size_t>(k)]
                : eligible[RngStream::keyed(seed, std::string_view("record"), static_cast<std::uint64_t>(k))
                               .below(eligible.size())];
        const CorpusRecord& rec = corpus[pick.index];
        const std::int64_t hi = std::min(max_cut, pick.cp_len);
        const std::int64_t cut =
            min_cut + static_cast<std::int64_t>(
                          RngStream::keyed(seed, std::string_view("cut"), static_cast<std::uint64_t>(k))
                              .below(static_cast<std::uint64_t>(hi - min_cut + 1)));
        Gene g;
        char idbuf[24];
        std::snprintf(idbuf, sizeof(idbuf), "g%05lld", static_cast<long long>(k));
        g.id = idbuf;
        g.context = std::string(cp_prefix(rec.text, static_cast<std::size_t>(cut)));
        g.source = rec.source;
        g.cut_index = cut;
        out.genes.push_back(std::move(g));
    }
    std::set<std::string_view> seen;
    for (const auto& g : out.genes)
        if (!seen.insert(g.context).second)
            ++out.duplicate_contexts;
    return out;
}

/// Wrap every context as prefix + context + suffix. Applying a template twice
/// duplicates the markers; that is string concatenation, not a bug.
inline GeneSet apply_template(const GeneSet& genes, const std::string& prefix, const std::string& suffix) {
    if (genes.genes.empty())
        throw input_error("apply_template: gene set is empty");
    GeneSet out = genes;
    for (auto& g : out.genes)
        g.context = prefix + g.context + suffix;
    out.tmpl = GeneTemplate{prefix, suffix};
    if (!(prefix.empty() && suffix.empty()))
        out.name += "+template(" + prefix + "|" + suffix + ")";
    return out;
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* field, std::size_t line_no) {
    const auto it = obj.find(field);
    if (it == obj.end())
        throw parse_error("line " + std::to_string(line_no) + ": missing field '" + field + "'");
    return *it;
}

} // namespace detail

inline std::string genes_to_string(const GeneSet& set) {
    nlohmann::json header{{"record", "geneset"},
                          {"version", 1},
                          {"name", set.name},
                          {"rng_seed", set.rng_seed},
                          {"duplicate_contexts", set.duplicate_contexts}};
    if (set.tmpl)
        header["template"] = {{"prefix", set.tmpl->prefix}, {"suffix", set.tmpl->suffix}};
    std::string out = header.dump();
    out += '\n';
    for (const auto& g : set.genes) {
        out += nlohmann::json{{"id", g.id}, {"context", g.context}, {"source", g.source}, {"cut_index", g.cut_index}}
                   .dump();
        out += '\n';
    }
    return out;
}

inline void save_genes(const GeneSet& set, const std::filesystem::path& path) {
    atomic_write_file(path, genes_to_string(set));
}

inline GeneSet genes_from_string(const std::string& body) {
    GeneSet set;
    std::set<std::string> ids, contexts;
    std::istringstream in(body);
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!saw_header && line_no == 1 && obj.contains("record") && obj["record"] == "geneset") {
            saw_header = true;
            set.name = obj.value("name", std::string());
            set.rng_seed = obj.value("rng_seed", std::uint64_t{0});
            set.duplicate_contexts = obj.value("duplicate_contexts", std::uint64_t{0});
            if (obj.contains("template") && !obj["template"].is_null())
                set.tmpl = GeneTemplate{obj["template"].value("prefix", std::string()),
                                        obj["template"].value("suffix", std::string())};
            continue;
        }
        Gene g;
        try {
            g.id = detail::require_field(obj, "id", line_no).get<std::string>();
            g.context = detail::require_field(obj, "context", line_no).get<std::string>();
            g.source = detail::require_field(obj, "source", line_no).get<std::string>();
            g.cut_index = detail::require_field(obj, "cut_index", line_no).get<std::int64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (g.context.empty())
            throw parse_error("line " + std::to_string(line_no) + ": empty context");
        if (!ids.insert(g.id).second)
            throw parse_error("line " + std::to_string(line_no) + ": duplicate gene id '" + g.id + "'");
        if (!contexts.insert(g.context).second && !saw_header)
            ++set.duplicate_contexts;
        set.genes.push_back(std::move(g));
    }
    return set;
}

inline GeneSet load_genes(const std::filesystem::path& path) {
    return genes_from_string(read_text_file(path));
}

} // namespace lmphylo
