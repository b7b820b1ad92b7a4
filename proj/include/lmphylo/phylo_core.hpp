// Population-genetic similarity between models.
//
// Similarity between two populations is the normalized inner product of
// their per-gene allele-frequency vectors:
//
//     S(P1,P2) = sum_g sum_a P1(a|g) P2(a|g)
//              / sqrt( (sum_g sum_a P1(a|g)^2) (sum_g sum_a P2(a|g)^2) )
//
// with the gene sums inside the square roots. S is bounded in [0,1] by
// Cauchy-Schwarz with S(P,P) = 1, and distances are D = -log S, mapping
// S = 0 to +infinity (a recorded finite cap substitutes for consumers that
// need finite entries).
//
// Also here: RMS contrast of a similarity matrix (standard deviation of the
// off-diagonal entries) and the replicate-variability statistics v and v'
// computed over sets of similarity matrices.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lmphylo/errors.hpp"
#include "lmphylo/population.hpp"
#include "lmphylo/util/fs.hpp"
#include "lmphylo/util/num.hpp"

namespace lmphylo {

struct SimilarityMatrix {
    std::vector<std::string> model_ids;
    std::vector<double> values; // row-major n x n, symmetric, diagonal 1

    std::size_t size() const { return model_ids.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * size() + j]; }

    std::size_t index_of(const std::string& id) const {
        for (std::size_t i = 0; i < model_ids.size(); ++i)
            if (model_ids[i] == id)
                return i;
        throw input_error("unknown model '" + id + "' in similarity matrix");
    }
};

struct DistanceMatrix {
    std::vector<std::string> model_ids;
    std::vector<double> values; // entries may be +infinity
    double finite_cap = 1.0;    // substitute for +infinity where finiteness is required

    std::size_t size() const { return model_ids.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * size() + j]; }
};

namespace detail {

/// Per-gene allele frequencies: count / (N - failures). Throws when a gene
/// has no usable probes.
inline std::vector<std::map<AlleleKey, double>> frequencies(const PopulationProfile& p) {
    std::vector<std::map<AlleleKey, double>> freq(p.per_gene.size());
    for (std::size_t g = 0; g < p.per_gene.size(); ++g) {
        const std::int64_t usable = p.per_gene[g].successes();
        if (usable <= 0)
            throw input_error("profile " + p.model_id + ": gene " + p.gene_ids[g] +
                              " has zero usable probes");
        for (const auto& [key, n] : p.per_gene[g].counts)
            freq[g][key] = static_cast<double>(n) / static_cast<double>(usable);
    }
    return freq;
}

inline void require_same_genes(const PopulationProfile& a, const PopulationProfile& b) {
    if (a.gene_ids != b.gene_ids) {
        std::set<std::string> sa(a.gene_ids.begin(), a.gene_ids.end());
        std::set<std::string> sb(b.gene_ids.begin(), b.gene_ids.end());
        std::string diff;
        for (const auto& id : sa)
            if (!sb.count(id))
                diff += " -" + id;
        for (const auto& id : sb)
            if (!sa.count(id))
                diff += " +" + id;
        if (diff.empty())
            diff = " (same ids, different order)";
        throw input_error("profiles " + a.model_id + " and " + b.model_id +
                          " disagree on gene sets:" + diff);
    }
    if (!a.gene_fingerprint.empty() && !b.gene_fingerprint.empty() &&
        a.gene_fingerprint != b.gene_fingerprint)
        throw input_error("profiles " + a.model_id + " and " + b.model_id +
                          " carry the same gene ids but different gene contents");
    if (a.template_tag != b.template_tag)
        throw input_error("profiles " + a.model_id + " and " + b.model_id +
                          " were collected under different templates ('" + a.template_tag +
                          "' vs '" + b.template_tag + "')");
}

} // namespace detail

/// Nei-style similarity of two population profiles, in [0,1].
inline double nei_similarity(const PopulationProfile& a, const PopulationProfile& b) {
    detail::require_same_genes(a, b);
    const auto fa = detail::frequencies(a);
    const auto fb = detail::frequencies(b);
    double cross = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (std::size_t g = 0; g < fa.size(); ++g) {
        for (const auto& [key, pa] : fa[g]) {
            norm_a += pa * pa;
            const auto it = fb[g].find(key);
            if (it != fb[g].end())
                cross += pa * it->second;
        }
        for (const auto& [key, pb] : fb[g])
            norm_b += pb * pb;
    }
    if (cross == norm_a && norm_a == norm_b)
        return 1.0; // identical frequency vectors, exact by construction
    const double s = cross / std::sqrt(norm_a * norm_b);
    return std::clamp(s, 0.0, 1.0);
}

/// Pairwise similarity over a roster of profiles sharing one gene set.
inline SimilarityMatrix similarity_matrix(const std::vector<PopulationProfile>& profiles) {
    if (profiles.size() < 2)
        throw input_error("similarity_matrix: need at least 2 profiles, got " +
                          std::to_string(profiles.size()));
    const std::size_t n = profiles.size();
    SimilarityMatrix s;
    s.model_ids.reserve(n);
    for (const auto& p : profiles)
        s.model_ids.push_back(p.model_id);
    s.values.assign(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double v;
            try {
                v = nei_similarity(profiles[i], profiles[j]);
            } catch (const input_error& e) {
                throw input_error("similarity_matrix: pair (" + profiles[i].model_id + ", " +
                                  profiles[j].model_id + "): " + e.what());
            }
            s.at(i, j) = v;
            s.at(j, i) = v;
        }
    }
    return s;
}

/// D = -log S elementwise; S = 0 becomes +infinity and finite_cap records
/// 1.05 x the largest finite entry for consumers that require finite input.
inline DistanceMatrix distance_matrix(const SimilarityMatrix& s) {
    DistanceMatrix d;
    d.model_ids = s.model_ids;
    d.values.resize(s.values.size());
    double max_finite = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const double v = s.values[i];
        double dist;
        if (v <= 0.0)
            dist = std::numeric_limits<double>::infinity();
        else {
            dist = -std::log(v);
            if (dist == 0.0)
                dist = 0.0; // normalize -0 from -log(1)
            max_finite = std::max(max_finite, dist);
        }
        d.values[i] = dist;
    }
    d.finite_cap = max_finite > 0.0 ? 1.05 * max_finite : 1.0;
    return d;
}

/// Standard deviation of the off-diagonal entries (population convention).
inline double rms_contrast(const SimilarityMatrix& s) {
    const std::size_t n = s.size();
    if (n < 2)
        throw input_error("rms_contrast: need at least a 2x2 matrix");
    double mean = 0.0;
    const double cells = static_cast<double>(n * (n - 1));
    bool constant = true;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                mean += s.at(i, j);
                constant = constant && s.at(i, j) == s.at(0, 1);
            }
    if (constant)
        return 0.0;
    mean /= cells;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                const double dev = s.at(i, j) - mean;
                var += dev * dev;
            }
    return std::sqrt(var / cells);
}

// ---- replicate statistics ---------------------------------------------------

struct VarianceCell {
    double v = 0.0;  // mean over matrix cells of the per-cell spread
    double se = 0.0; // standard error of that mean over the cells
};

/// Variability over replicate similarity matrices: the elementwise biased
/// variance V^2 = (1/R) sum_i (S_i - mean)^2, reported as the mean of
/// sqrt(V^2) over all matrix cells (diagonal included; it contributes zeros).
inline VarianceCell variability_of(const std::vector<SimilarityMatrix>& replicates) {
    if (replicates.size() < 2)
        throw input_error("variability_of: need at least 2 replicate matrices");
    const std::size_t cells = replicates.front().values.size();
    for (const auto& m : replicates)
        if (m.values.size() != cells || m.model_ids != replicates.front().model_ids)
            throw input_error("variability_of: replicate matrices disagree on shape or roster");
    const double r = static_cast<double>(replicates.size());
    std::vector<double> spread(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        double mean = 0.0;
        for (const auto& m : replicates)
            mean += m.values[c];
        mean /= r;
        double var = 0.0;
        for (const auto& m : replicates) {
            const double dev = m.values[c] - mean;
            var += dev * dev;
        }
        spread[c] = std::sqrt(var / r);
    }
    VarianceCell out;
    for (const double x : spread)
        out.v += x;
    out.v /= static_cast<double>(cells);
    double var = 0.0;
    for (const double x : spread)
        var += (x - out.v) * (x - out.v);
    out.se = std::sqrt(var / static_cast<double>(cells)) / std::sqrt(static_cast<double>(cells));
    return out;
}

/// Deviation of replicate matrices around a fixed high-precision matrix:
/// V'^2 = (1/R) sum_i (S_i - S_oracle)^2, reported like variability_of.
inline VarianceCell oracle_deviation_of(const std::vector<SimilarityMatrix>& replicates,
                                        const SimilarityMatrix& oracle) {
    if (replicates.empty())
        throw input_error("oracle_deviation_of: need at least 1 replicate matrix");
    const std::size_t cells = oracle.values.size();
    for (const auto& m : replicates)
        if (m.values.size() != cells || m.model_ids != oracle.model_ids)
            throw input_error("oracle_deviation_of: replicate and oracle matrices disagree");
    const double r = static_cast<double>(replicates.size());
    VarianceCell out;
    std::vector<double> spread(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        double sq = 0.0;
        for (const auto& m : replicates) {
            const double dev = m.values[c] - oracle.values[c];
            sq += dev * dev;
        }
        spread[c] = std::sqrt(sq / r);
    }
    for (const double x : spread)
        out.v += x;
    out.v /= static_cast<double>(cells);
    double var = 0.0;
    for (const double x : spread)
        var += (x - out.v) * (x - out.v);
    out.se = std::sqrt(var / static_cast<double>(cells)) / std::sqrt(static_cast<double>(cells));
    return out;
}

struct GridPoint {
    std::int64_t genes = 0;  // G
    std::int64_t probes = 0; // N

    auto operator<=>(const GridPoint&) const = default;
};

struct VarianceReport {
    std::map<GridPoint, VarianceCell> grid;
    std::int64_t replicates = 8;
    std::string kind;                          // "variability" or "oracle-deviation"
    GridPoint oracle_params{0, 0};             // (G', N') for oracle-deviation scans
};

inline std::string variance_report_to_string(const VarianceReport& r) {
    std::string out;
    nlohmann::json header{{"record", "variance-report"},
                          {"version", 1},
                          {"kind", r.kind},
                          {"replicates", r.replicates}};
    if (r.oracle_params.genes > 0)
        header["oracle"] = {{"G", r.oracle_params.genes}, {"N", r.oracle_params.probes}};
    out += header.dump();
    out += '\n';
    for (const auto& [gp, cell] : r.grid) {
        out += nlohmann::json{{"G", gp.genes}, {"N", gp.probes}, {"v", cell.v}, {"se", cell.se}}.dump();
        out += '\n';
    }
    return out;
}

inline void save_variance_report(const VarianceReport& r, const std::filesystem::path& path) {
    atomic_write_file(path, variance_report_to_string(r));
}

inline VarianceReport variance_report_from_string(const std::string& body,
                                                  const std::string& origin = "variance report") {
    VarianceReport r;
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
                if (!obj.contains("record") || obj["record"] != "variance-report")
                    throw parse_error(origin + ": missing header record");
                r.kind = obj.value("kind", std::string());
                r.replicates = obj.value("replicates", std::int64_t{8});
                if (obj.contains("oracle"))
                    r.oracle_params = {obj["oracle"].value("G", std::int64_t{0}),
                                       obj["oracle"].value("N", std::int64_t{0})};
                saw_header = true;
                continue;
            }
            r.grid[{obj.at("G").get<std::int64_t>(), obj.at("N").get<std::int64_t>()}] =
                {obj.at("v").get<double>(), obj.value("se", 0.0)};
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return r;
}

// ---- matrix files -----------------------------------------------------------
// Header row of model ids, then n rows of decimal values, tab-separated.
// +infinity is the literal "inf". Values print shortest-round-trip, so a
// save/load cycle is bit-exact.

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

template <typename M>
std::string matrix_to_string(const M& m) {
    std::string out;
    for (std::size_t i = 0; i < m.model_ids.size(); ++i) {
        if (m.model_ids[i].find('\t') != std::string::npos)
            throw input_error("model id '" + m.model_ids[i] + "' contains a tab");
        out += (i ? "\t" : "") + m.model_ids[i];
    }
    out += '\n';
    const std::size_t n = m.model_ids.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            out += (j ? "\t" : "") + fmt_double(m.values[i * n + j]);
        out += '\n';
    }
    return out;
}

inline void parse_matrix_body(const std::string& body, const std::string& origin,
                              std::vector<std::string>& ids, std::vector<double>& values) {
    std::istringstream in(body);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw parse_error(origin + ": missing header row of model ids");
    ids = split_tabs(line);
    const std::size_t n = ids.size();
    values.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw parse_error(origin + ": expected " + std::to_string(n) + " value rows, got " +
                              std::to_string(i));
        const auto cells = split_tabs(line);
        if (cells.size() != n)
            throw parse_error(origin + ": row " + std::to_string(i + 1) + " has " +
                              std::to_string(cells.size()) + " values, expected " + std::to_string(n));
        for (std::size_t j = 0; j < n; ++j)
            values[i * n + j] = parse_double(cells[j], "matrix entry");
    }
}

} // namespace detail

inline void save_matrix(const SimilarityMatrix& m, const std::filesystem::path& path) {
    atomic_write_file(path, detail::matrix_to_string(m));
}

inline void save_matrix(const DistanceMatrix& m, const std::filesystem::path& path) {
    atomic_write_file(path, detail::matrix_to_string(m));
}

inline SimilarityMatrix load_similarity(const std::filesystem::path& path) {
    SimilarityMatrix m;
    detail::parse_matrix_body(read_text_file(path), path.string(), m.model_ids, m.values);
    return m;
}

/// finite_cap is not stored; it is recomputed as 1.05 x the largest finite
/// entry, matching what distance_matrix would have produced.
inline DistanceMatrix load_distance(const std::filesystem::path& path) {
    DistanceMatrix m;
    detail::parse_matrix_body(read_text_file(path), path.string(), m.model_ids, m.values);
    double max_finite = 0.0;
    for (const double v : m.values)
        if (std::isfinite(v))
            max_finite = std::max(max_finite, v);
    m.finite_cap = max_finite > 0.0 ? 1.05 * max_finite : 1.0;
    return m;
}

} // namespace lmphylo
