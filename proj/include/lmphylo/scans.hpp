// Hyperparameter scans: how gene-set size G and probe count N move the
// similarity matrix.
//
// For each grid cell (G,N) the variability scan samples `replicates`
// pairwise-disjoint gene sets from the corpus, probes every model N times
// per gene, builds the replicate similarity matrices and reports
// v = mean(sqrt(V^2)) with V^2 the elementwise biased variance (1/R, exactly
// as the replicate formula is written). The oracle-deviation scan measures
// the same spread around a fixed high-precision matrix built from an
// independent gene set; scan gene sets must be disjoint from the oracle's.
//
// Scans never touch probe caches: every matrix is built from fresh draws.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "lmphylo/errors.hpp"
#include "lmphylo/genome.hpp"
#include "lmphylo/phylo_core.hpp"
#include "lmphylo/providers.hpp"

namespace lmphylo {

using ProberFactory = std::function<std::unique_ptr<Prober>(const ModelSpec&)>;

inline ProberFactory default_prober_factory(const ProbeOptions& opts = {}) {
    return [opts](const ModelSpec& spec) { return make_prober(spec, opts); };
}

struct ScanOptions {
    std::int64_t min_cut = 20;
    std::int64_t max_cut = 100;
    int parallelism = 1;
};

/// Probe every model on one gene set and assemble the similarity matrix.
inline SimilarityMatrix similarity_for_genes(const std::vector<ModelSpec>& models,
                                             const GeneSet& genes, std::int64_t probes,
                                             const ProberFactory& factory, int parallelism = 1) {
    if (models.size() < 2)
        throw input_error("similarity_for_genes: need at least 2 models");
    std::vector<PopulationProfile> profiles;
    profiles.reserve(models.size());
    for (const auto& spec : models) {
        const auto prober = factory(spec);
        profiles.push_back(
            collect_profile(*prober, spec, genes, probes, parallelism).profile);
    }
    return similarity_matrix(profiles);
}

namespace detail {

inline std::size_t eligible_records(const Corpus& corpus, std::int64_t min_cut) {
    std::size_t n = 0;
    for (const auto& rec : corpus)
        if (static_cast<std::int64_t>(cp_count(rec.text)) >= min_cut)
            ++n;
    return n;
}

/// `replicates` pairwise-disjoint gene sets of size G, sampled together
/// without replacement and then split.
inline std::vector<GeneSet> disjoint_gene_sets(const Corpus& corpus, std::int64_t genes_per_set,
                                               std::int64_t replicates, std::uint64_t seed,
                                               const ScanOptions& opts) {
    const std::int64_t need = genes_per_set * replicates;
    const std::size_t eligible = eligible_records(corpus, opts.min_cut);
    if (eligible < static_cast<std::size_t>(need))
        throw input_error("scan: corpus has " + std::to_string(eligible) +
                          " usable records but G=" + std::to_string(genes_per_set) + " x " +
                          std::to_string(replicates) + " replicates needs " + std::to_string(need) +
                          " disjoint genes");
    const GeneSet all = sample_genes(corpus, need, seed, opts.min_cut, opts.max_cut);
    std::vector<GeneSet> out;
    out.reserve(static_cast<std::size_t>(replicates));
    for (std::int64_t r = 0; r < replicates; ++r) {
        GeneSet set;
        set.name = all.name + "-rep" + std::to_string(r);
        set.rng_seed = all.rng_seed;
        set.genes.assign(all.genes.begin() + r * genes_per_set,
                         all.genes.begin() + (r + 1) * genes_per_set);
        out.push_back(std::move(set));
    }
    return out;
}

} // namespace detail

/// Replicate-spread scan over the (G, N) grid.
inline VarianceReport variability_scan(const std::vector<ModelSpec>& models, const Corpus& corpus,
                                       const std::vector<GridPoint>& grid, std::int64_t replicates,
                                       std::uint64_t seed, const ProberFactory& factory,
                                       const ScanOptions& opts = {}) {
    if (replicates < 2)
        throw input_error("variability_scan: need at least 2 replicates");
    VarianceReport report;
    report.kind = "variability";
    report.replicates = replicates;
    for (const auto& cell : grid) {
        if (cell.genes < 1 || cell.probes < 1)
            throw input_error("variability_scan: grid cell must have positive G and N");
        const auto gene_sets = detail::disjoint_gene_sets(
            corpus, cell.genes, replicates,
            mix64(seed ^ mix64(static_cast<std::uint64_t>(cell.genes) * 0x10001ull +
                               static_cast<std::uint64_t>(cell.probes))),
            opts);
        std::vector<SimilarityMatrix> matrices;
        matrices.reserve(gene_sets.size());
        for (const auto& genes : gene_sets)
            matrices.push_back(
                similarity_for_genes(models, genes, cell.probes, factory, opts.parallelism));
        report.grid[cell] = variability_of(matrices);
    }
    return report;
}

/// Deviation-from-oracle scan at fixed oracle (G', N'). The oracle gene
/// sources are excluded up front; any sampled overlap is an input error.
inline VarianceReport oracle_deviation_scan(const std::vector<ModelSpec>& models,
                                            const Corpus& corpus,
                                            const std::vector<GridPoint>& grid,
                                            const SimilarityMatrix& oracle,
                                            const GeneSet& oracle_genes, GridPoint oracle_params,
                                            std::int64_t replicates, std::uint64_t seed,
                                            const ProberFactory& factory,
                                            const ScanOptions& opts = {}) {
    if (replicates < 1)
        throw input_error("oracle_deviation_scan: need at least 1 replicate");
    std::vector<std::string> roster_ids;
    for (const auto& m : models)
        roster_ids.push_back(m.id);
    if (oracle.model_ids != roster_ids)
        throw input_error("oracle_deviation_scan: oracle matrix roster does not match the models");

    std::set<std::string> oracle_sources;
    for (const auto& g : oracle_genes.genes)
        oracle_sources.insert(g.source);

    VarianceReport report;
    report.kind = "oracle-deviation";
    report.replicates = replicates;
    report.oracle_params = oracle_params;
    for (const auto& cell : grid) {
        const auto gene_sets = detail::disjoint_gene_sets(
            corpus, cell.genes, replicates,
            mix64(seed ^ mix64(static_cast<std::uint64_t>(cell.genes) * 0x20003ull +
                               static_cast<std::uint64_t>(cell.probes))),
            opts);
        for (const auto& set : gene_sets)
            for (const auto& g : set.genes)
                if (oracle_sources.count(g.source))
                    throw input_error("oracle_deviation_scan: scan gene " + g.id + " (" + g.source +
                                      ") overlaps the oracle gene set; remove oracle records from "
                                      "the scan corpus first");
        std::vector<SimilarityMatrix> matrices;
        matrices.reserve(gene_sets.size());
        for (const auto& genes : gene_sets)
            matrices.push_back(
                similarity_for_genes(models, genes, cell.probes, factory, opts.parallelism));
        report.grid[cell] = oracle_deviation_of(matrices, oracle);
    }
    return report;
}

/// Drop every record whose source backs a gene in `genes`; used to carve a
/// scan corpus that is disjoint from an oracle gene set.
inline Corpus remove_sources(const Corpus& corpus, const GeneSet& genes) {
    std::set<std::string> sources;
    for (const auto& g : genes.genes)
        sources.insert(g.source);
    Corpus out;
    for (const auto& rec : corpus)
        if (!sources.count(rec.source))
            out.push_back(rec);
    return out;
}

} // namespace lmphylo
