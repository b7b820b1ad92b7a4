// Synthetic model populations with known ancestry.
//
// A SyntheticModel is a table of categorical distributions (one per gene
// slot) over an abstract allele vocabulary. A gene context maps to a slot by
// stable hash, so synthetic models answer arbitrary gene sets through the
// same probing path as real models. Sampling is keyed by
// (model seed, slot, draw index): deterministic, order-free, parallel-safe.
//
// Vocabulary entries are 4-character codes with hierarchical shared
// prefixes (first character common to all, later characters refining), and
// completions append 4 per-draw noise characters. Truncating alleles early
// therefore merges codes, truncating late splits them by noise; matrix
// contrast peaks at an interior allele length, which the contrast sweep
// relies on.
//
// Descent: mutate() resamples each gene slot from the root prior with the
// edge's mutation probability and copies it otherwise. build_family() walks
// a lineage spec and returns the roster plus the ground-truth tree, giving
// every reconstruction claim an offline oracle.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmphylo/errors.hpp"
#include "lmphylo/genome.hpp"
#include "lmphylo/tree.hpp"
#include "lmphylo/util/rng.hpp"

namespace lmphylo {

/// 4-character vocabulary code for entry `index`. First character is shared
/// by the whole vocabulary; the remaining three are coarse-to-fine base-B
/// digits, so nearby indices share prefixes.
inline std::string vocab_code(std::size_t index, std::size_t vocab_size) {
    if (vocab_size < 2)
        throw input_error("vocab_code: vocabulary needs at least 2 entries");
    if (index >= vocab_size)
        throw input_error("vocab_code: index out of range");
    std::size_t base = 2;
    while (base * base * base < vocab_size)
        ++base;
    if (base > 26)
        throw input_error("vocab_code: vocabulary too large (max 17576)");
    std::string code = "a___";
    code[1] = static_cast<char>('a' + (index / (base * base)) % base);
    code[2] = static_cast<char>('a' + (index / base) % base);
    code[3] = static_cast<char>('a' + index % base);
    return code;
}

struct SyntheticModel {
    std::string id;
    std::string family;
    std::size_t vocab_size = 0;
    double concentration = 1.0; // root prior, reused when mutation resamples
    std::uint64_t seed = 0;     // drives draw and noise streams
    std::vector<std::vector<double>> gene_dist; // gene slots x vocab, rows sum to 1
    std::string lineage_parent; // empty at the root
    double mutation_rate = 0.0; // rate used when this model was created

    std::size_t gene_count() const { return gene_dist.size(); }

    std::size_t slot_for(std::string_view context) const {
        return static_cast<std::size_t>(stable_hash64(context) % gene_count());
    }

    /// Vocabulary index drawn for (context, draw_index); inverse-CDF over the
    /// slot's distribution with a keyed uniform.
    std::size_t sample_index(std::string_view context, std::uint64_t draw_index) const {
        const std::size_t slot = slot_for(context);
        const double u = RngStream::keyed(seed, std::string_view("draw"),
                                          static_cast<std::uint64_t>(slot), draw_index)
                             .uniform();
        const auto& dist = gene_dist[slot];
        double cum = 0.0;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            cum += dist[i];
            if (u < cum)
                return i;
        }
        return dist.size() - 1; // u landed in rounding slack
    }

    /// Completion text: the 4-character vocabulary code plus 4 noise
    /// characters unique to this (slot, draw).
    std::string sample_completion(std::string_view context, std::uint64_t draw_index) const {
        const std::size_t slot = slot_for(context);
        std::string out = vocab_code(sample_index(context, draw_index), vocab_size);
        auto noise = RngStream::keyed(seed, std::string_view("noise"),
                                      static_cast<std::uint64_t>(slot), draw_index);
        for (int i = 0; i < 4; ++i)
            out += static_cast<char>('a' + noise.below(26));
        return out;
    }

    void check_distributions() const {
        for (const auto& row : gene_dist) {
            double sum = 0.0;
            for (const double p : row) {
                if (p < 0.0)
                    throw numeric_error("synthetic model " + id + ": negative probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw numeric_error("synthetic model " + id + ": distribution sums to " +
                                    std::to_string(sum));
        }
    }
};

/// Root model: every gene slot drawn from a symmetric Dirichlet.
inline SyntheticModel spawn_root(std::size_t vocab_size, std::size_t gene_count,
                                 double concentration, std::uint64_t seed) {
    if (vocab_size < 2)
        throw input_error("spawn_root: vocab_size must be at least 2");
    if (gene_count < 1)
        throw input_error("spawn_root: gene_count must be positive");
    if (!(concentration > 0.0))
        throw input_error("spawn_root: concentration must be positive");
    SyntheticModel m;
    m.id = "root-s" + std::to_string(seed);
    m.vocab_size = vocab_size;
    m.concentration = concentration;
    m.seed = seed;
    m.gene_dist.reserve(gene_count);
    for (std::size_t g = 0; g < gene_count; ++g) {
        auto rng = RngStream::keyed(seed, std::string_view("rootdist"), static_cast<std::uint64_t>(g));
        m.gene_dist.push_back(rng.dirichlet(vocab_size, concentration));
    }
    return m;
}

/// Child model: each gene slot is resampled from the root prior with
/// probability `rate`, copied from the parent otherwise. The child samples
/// with its own seed, so even unmutated genes yield independent draws.
inline SyntheticModel mutate(const SyntheticModel& parent, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0))
        throw input_error("mutate: rate must lie in [0,1], got " + std::to_string(rate));
    SyntheticModel child = parent;
    child.id = parent.id + "+m" + std::to_string(seed);
    child.lineage_parent = parent.id;
    child.mutation_rate = rate;
    child.seed = seed;
    for (std::size_t g = 0; g < parent.gene_dist.size(); ++g) {
        const double u =
            RngStream::keyed(seed, std::string_view("mutgate"), static_cast<std::uint64_t>(g)).uniform();
        if (u < rate) {
            auto rng = RngStream::keyed(seed, std::string_view("mutdist"), static_cast<std::uint64_t>(g));
            child.gene_dist[g] = rng.dirichlet(parent.vocab_size, parent.concentration);
        }
    }
    return child;
}

// ---- lineages ---------------------------------------------------------------

struct LineageNode {
    std::string id;
    std::string family;
    double rate = 0.0; // mutation rate of the edge from the parent; unused at the root
    std::vector<LineageNode> children;
};

struct LineageSpec {
    std::size_t vocab_size = 16;
    std::size_t gene_count = 4096;
    double concentration = 0.25;
    bool include_internal = false; // export ancestors as roster members too
    LineageNode root;
};

struct FamilyBuild {
    std::vector<SyntheticModel> roster; // depth-first order
    PhyloTree truth;                    // unrooted ground-truth topology over roster ids
};

/// Instantiate a lineage: spawn the root, mutate along every edge, collect
/// leaf models (and ancestors when include_internal). The ground-truth tree
/// carries the lineage topology with edge length = mutation rate; exported
/// ancestors hang off their node as zero-length pendant leaves.
inline FamilyBuild build_family(const LineageSpec& spec, std::uint64_t seed) {
    if (spec.root.id.empty())
        throw input_error("build_family: lineage root needs an id");
    {
        std::set<std::string> ids;
        std::vector<const LineageNode*> stack{&spec.root};
        while (!stack.empty()) {
            const auto* node = stack.back();
            stack.pop_back();
            if (!ids.insert(node->id).second)
                throw input_error("build_family: duplicate lineage id '" + node->id + "'");
            for (const auto& c : node->children)
                stack.push_back(&c);
        }
    }

    FamilyBuild out;
    std::uint64_t ordinal = 0;

    const std::function<void(const LineageNode&, const SyntheticModel*, std::size_t)> walk =
        [&](const LineageNode& node, const SyntheticModel* parent, std::size_t attach) {
            const std::uint64_t node_seed = mix64(seed ^ mix64(ordinal++ + 0x51ED2701ull));
            SyntheticModel model =
                parent == nullptr
                    ? spawn_root(spec.vocab_size, spec.gene_count, spec.concentration, node_seed)
                    : mutate(*parent, node.rate, node_seed);
            model.id = node.id;
            model.family = node.family.empty() ? node.id : node.family;

            const std::size_t here = out.truth.nodes.size();
            out.truth.nodes.push_back(node.children.empty() ? PhyloTree::Node{node.id}
                                                            : PhyloTree::Node{});
            if (parent != nullptr)
                out.truth.edges.push_back({attach, here, node.rate});

            if (node.children.empty() || spec.include_internal) {
                if (!node.children.empty()) {
                    // ancestor exported: pendant leaf at its internal node
                    const std::size_t pendant = out.truth.nodes.size();
                    out.truth.nodes.push_back({node.id});
                    out.truth.edges.push_back({here, pendant, 0.0});
                }
                out.roster.push_back(model);
            }

            for (const auto& child : node.children)
                walk(child, &model, here);
        };
    walk(spec.root, nullptr, 0);

    detail::contract_degree2(out.truth);
    return out;
}

/// Robinson-Foulds distance: bipartitions present in exactly one tree.
inline std::int64_t rf_distance(const PhyloTree& t1, const PhyloTree& t2) {
    auto l1 = t1.leaf_labels();
    auto l2 = t2.leaf_labels();
    std::sort(l1.begin(), l1.end());
    std::sort(l2.begin(), l2.end());
    if (l1 != l2) {
        std::string msg = "rf_distance: trees have different leaf sets:";
        for (const auto& x : l1)
            if (!std::binary_search(l2.begin(), l2.end(), x))
                msg += " -" + x;
        for (const auto& x : l2)
            if (!std::binary_search(l1.begin(), l1.end(), x))
                msg += " +" + x;
        throw input_error(msg);
    }
    const auto b1 = nontrivial_bipartitions(t1);
    const auto b2 = nontrivial_bipartitions(t2);
    std::int64_t diff = 0;
    for (const auto& b : b1)
        if (!b2.count(b))
            ++diff;
    for (const auto& b : b2)
        if (!b1.count(b))
            ++diff;
    return diff;
}

/// Deterministic filler corpus: pseudo-random lowercase words, one record
/// per index, each at least `chars` characters.
inline Corpus synthetic_corpus(std::size_t records, std::size_t chars, std::uint64_t seed) {
    Corpus out;
    out.reserve(records);
    for (std::size_t k = 0; k < records; ++k) {
        auto rng = RngStream::keyed(seed, std::string_view("corpus"), static_cast<std::uint64_t>(k));
        std::string text;
        while (text.size() < chars) {
            if (!text.empty())
                text += ' ';
            const std::size_t len = 3 + rng.below(6);
            for (std::size_t i = 0; i < len; ++i)
                text += static_cast<char>('a' + rng.below(26));
        }
        out.push_back({std::move(text), "synth:" + std::to_string(k)});
    }
    return out;
}

// ---- lineage spec & model files ----------------------------------------------

namespace detail {

inline LineageNode lineage_node_from_json(const nlohmann::json& obj) {
    LineageNode node;
    node.id = obj.at("id").get<std::string>();
    node.family = obj.value("family", std::string());
    node.rate = obj.value("rate", 0.0);
    if (obj.contains("children"))
        for (const auto& c : obj["children"])
            node.children.push_back(lineage_node_from_json(c));
    return node;
}

inline nlohmann::json lineage_node_to_json(const LineageNode& node) {
    nlohmann::json obj{{"id", node.id}, {"family", node.family}, {"rate", node.rate}};
    if (!node.children.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& c : node.children)
            arr.push_back(lineage_node_to_json(c));
        obj["children"] = std::move(arr);
    }
    return obj;
}

} // namespace detail

inline LineageSpec lineage_spec_from_string(const std::string& body,
                                            const std::string& origin = "lineage spec") {
    try {
        const auto obj = nlohmann::json::parse(body);
        LineageSpec spec;
        spec.vocab_size = obj.value("vocab_size", std::size_t{16});
        spec.gene_count = obj.value("gene_count", std::size_t{4096});
        spec.concentration = obj.value("concentration", 0.25);
        spec.include_internal = obj.value("include_internal", false);
        spec.root = detail::lineage_node_from_json(obj.at("tree"));
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(origin + ": " + e.what());
    }
}

inline LineageSpec load_lineage_spec(const std::filesystem::path& path) {
    return lineage_spec_from_string(read_text_file(path), path.string());
}

inline std::string lineage_spec_to_string(const LineageSpec& spec) {
    return nlohmann::json{{"vocab_size", spec.vocab_size},
                          {"gene_count", spec.gene_count},
                          {"concentration", spec.concentration},
                          {"include_internal", spec.include_internal},
                          {"tree", detail::lineage_node_to_json(spec.root)}}
        .dump(2);
}

inline std::string synthetic_models_to_string(const std::vector<SyntheticModel>& models) {
    std::string out = nlohmann::json{{"record", "synthetic-models"}, {"version", 1}}.dump();
    out += '\n';
    for (const auto& m : models) {
        out += nlohmann::json{{"id", m.id},
                              {"family", m.family},
                              {"vocab_size", m.vocab_size},
                              {"concentration", m.concentration},
                              {"seed", m.seed},
                              {"lineage_parent", m.lineage_parent},
                              {"mutation_rate", m.mutation_rate},
                              {"gene_dist", m.gene_dist}}
                   .dump();
        out += '\n';
    }
    return out;
}

inline void save_synthetic_models(const std::vector<SyntheticModel>& models,
                                  const std::filesystem::path& path) {
    atomic_write_file(path, synthetic_models_to_string(models));
}

inline std::vector<SyntheticModel> synthetic_models_from_string(const std::string& body,
                                                                const std::string& origin) {
    std::vector<SyntheticModel> models;
    std::istringstream in(body);
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            if (!saw_header) {
                if (!obj.contains("record") || obj["record"] != "synthetic-models")
                    throw parse_error(origin + ": missing synthetic-models header");
                if (obj.value("version", std::int64_t{-1}) != 1)
                    throw parse_error(origin + ": unsupported synthetic-models version");
                saw_header = true;
                continue;
            }
            SyntheticModel m;
            m.id = obj.at("id").get<std::string>();
            m.family = obj.value("family", std::string());
            m.vocab_size = obj.at("vocab_size").get<std::size_t>();
            m.concentration = obj.value("concentration", 1.0);
            m.seed = obj.at("seed").get<std::uint64_t>();
            m.lineage_parent = obj.value("lineage_parent", std::string());
            m.mutation_rate = obj.value("mutation_rate", 0.0);
            m.gene_dist = obj.at("gene_dist").get<std::vector<std::vector<double>>>();
            m.check_distributions();
            models.push_back(std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return models;
}

inline std::vector<SyntheticModel> load_synthetic_models(const std::filesystem::path& path) {
    return synthetic_models_from_string(read_text_file(path), path.string());
}

} // namespace lmphylo
