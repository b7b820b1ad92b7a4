#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "lmphylo/phylo_core.hpp"
#include "lmphylo/util/rng.hpp"

using namespace lmphylo;
using testutil::make_profile;

namespace {

// Independent reference: explicit triple loop over genes, the union of
// alleles per gene, and both profiles, with no shared code path.
double nei_reference(const PopulationProfile& a, const PopulationProfile& b) {
    double cross = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t g = 0; g < a.gene_ids.size(); ++g) {
        std::set<AlleleKey> alleles;
        for (const auto& [key, n] : a.per_gene[g].counts)
            alleles.insert(key);
        for (const auto& [key, n] : b.per_gene[g].counts)
            alleles.insert(key);
        const double ta = static_cast<double>(a.per_gene[g].successes());
        const double tb = static_cast<double>(b.per_gene[g].successes());
        for (const auto& key : alleles) {
            const auto ia = a.per_gene[g].counts.find(key);
            const auto ib = b.per_gene[g].counts.find(key);
            const double pa = ia == a.per_gene[g].counts.end() ? 0.0 : static_cast<double>(ia->second) / ta;
            const double pb = ib == b.per_gene[g].counts.end() ? 0.0 : static_cast<double>(ib->second) / tb;
            cross += pa * pb;
            na += pa * pa;
            nb += pb * pb;
        }
    }
    return cross / std::sqrt(na * nb);
}

PopulationProfile random_profile(RngStream& rng, const std::string& id, std::size_t genes,
                                 std::size_t max_alleles) {
    std::vector<std::map<std::string, std::int64_t>> counts(genes);
    for (auto& gene : counts) {
        const auto n_alleles = 1 + rng.below(max_alleles);
        for (std::uint64_t a = 0; a < n_alleles; ++a)
            gene["al" + std::to_string(rng.below(2 * max_alleles))] += 1 + static_cast<std::int64_t>(rng.below(20));
    }
    return make_profile(id, counts);
}

} // namespace

TEST_CASE("nei similarity: hand-computed two-allele case") {
    const auto p1 = make_profile("p1", {{{"x", 2}}});
    const auto p2 = make_profile("p2", {{{"x", 1}, {"y", 1}}});
    // 0.5 / sqrt(1 * 0.5), hand-derived and cross-checked by the reference
    CHECK(nei_similarity(p1, p2) == Catch::Approx(0.7071067811865476).epsilon(1e-15));
    CHECK(nei_reference(p1, p2) == Catch::Approx(0.7071067811865476).epsilon(1e-15));
}

TEST_CASE("nei similarity: identical profiles give exactly 1") {
    auto rng = RngStream::keyed(5, std::string_view("nei-self"));
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = random_profile(rng, "m", 1 + rng.below(8), 6);
        CHECK(nei_similarity(p, p) == 1.0);
    }
}

TEST_CASE("nei similarity: disjoint supports give 0") {
    const auto p1 = make_profile("p1", {{{"aa", 1}}, {{"bb", 2}}});
    const auto p2 = make_profile("p2", {{{"cc", 1}}, {{"dd", 2}}});
    CHECK(nei_similarity(p1, p2) == 0.0);
}

TEST_CASE("nei similarity matches the brute-force reference") {
    auto rng = RngStream::keyed(99, std::string_view("nei-prop"));
    for (int trial = 0; trial < 1000; ++trial) {
        const auto genes = 1 + rng.below(8);
        auto a = random_profile(rng, "a", genes, 6);
        auto b = random_profile(rng, "b", genes, 6);
        const double got = nei_similarity(a, b);
        const double want = nei_reference(a, b);
        REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-12));
        REQUIRE((got >= 0.0 && got <= 1.0));
        // symmetry
        REQUIRE_THAT(nei_similarity(b, a), Catch::Matchers::WithinAbs(got, 1e-15));
    }
}

TEST_CASE("nei similarity: failures shrink the denominator, not the support") {
    // 3 successes + 1 failure: frequencies divide by 3
    auto a = make_profile("a", {{{"x", 2}, {"y", 1}}}, 1);
    auto b = make_profile("b", {{{"x", 3}}});
    const double expect = (2.0 / 3.0) / std::sqrt((4.0 / 9.0 + 1.0 / 9.0) * 1.0);
    CHECK_THAT(nei_similarity(a, b), Catch::Matchers::WithinAbs(expect, 1e-15));
}

TEST_CASE("nei similarity is invariant under gene reordering") {
    auto rng = RngStream::keyed(123, std::string_view("nei-perm"));
    auto a = random_profile(rng, "a", 6, 4);
    auto b = random_profile(rng, "b", 6, 4);
    const double before = nei_similarity(a, b);
    // rotate both profiles' genes the same way
    auto rotate = [](PopulationProfile p) {
        std::rotate(p.gene_ids.begin(), p.gene_ids.begin() + 2, p.gene_ids.end());
        std::rotate(p.per_gene.begin(), p.per_gene.begin() + 2, p.per_gene.end());
        return p;
    };
    CHECK_THAT(nei_similarity(rotate(a), rotate(b)), Catch::Matchers::WithinAbs(before, 1e-15));
}

TEST_CASE("nei similarity error paths") {
    SECTION("mismatched gene sets list the symmetric difference") {
        auto a = make_profile("a", {{{"x", 1}}, {{"y", 1}}});
        auto b = make_profile("b", {{{"x", 1}}, {{"y", 1}}});
        b.gene_ids[1] = "gZ";
        CHECK_THROWS_WITH(nei_similarity(a, b), Catch::Matchers::ContainsSubstring("-g1") &&
                                                    Catch::Matchers::ContainsSubstring("+gZ"));
    }
    SECTION("gene with zero usable probes is named") {
        auto a = make_profile("a", {{{"x", 1}}});
        auto b = make_profile("b", {{}});
        b.gene_ids = a.gene_ids;
        b.per_gene[0].failures = 4;
        CHECK_THROWS_WITH(nei_similarity(a, b), Catch::Matchers::ContainsSubstring("g0"));
    }
    SECTION("template mismatch is rejected") {
        auto a = make_profile("a", {{{"x", 1}}});
        auto b = make_profile("b", {{{"x", 1}}});
        b.template_tag = "User:[GENE]";
        CHECK_THROWS_AS(nei_similarity(a, b), input_error);
    }
}

TEST_CASE("similarity_matrix assembles rows in roster order") {
    const auto p1 = make_profile("p1", {{{"x", 2}}});
    const auto p2 = make_profile("p2", {{{"x", 1}, {"y", 1}}});

    SECTION("identical profiles give the all-ones matrix") {
        auto twin = p1;
        twin.model_id = "p1b";
        const auto s = similarity_matrix({p1, twin});
        CHECK(s.values == std::vector<double>{1.0, 1.0, 1.0, 1.0});
    }
    SECTION("hand case lands off-diagonal") {
        const auto s = similarity_matrix({p1, p2});
        CHECK(s.at(0, 0) == 1.0);
        CHECK_THAT(s.at(0, 1), Catch::Matchers::WithinAbs(0.7071067811865476, 1e-15));
        CHECK(s.at(0, 1) == s.at(1, 0));
    }
    SECTION("permuting the roster permutes rows and columns") {
        const auto p3 = make_profile("p3", {{{"y", 1}}});
        const auto s = similarity_matrix({p1, p2, p3});
        const auto t = similarity_matrix({p3, p1, p2});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(s.at(i, j) == t.at((i + 1) % 3, (j + 1) % 3));
    }
    SECTION("errors name the offending pair") {
        auto bad = p2;
        bad.gene_ids[0] = "other";
        CHECK_THROWS_WITH(similarity_matrix({p1, bad}),
                          Catch::Matchers::ContainsSubstring("p1") &&
                              Catch::Matchers::ContainsSubstring("p2"));
    }
    SECTION("fewer than two profiles rejected") {
        CHECK_THROWS_AS(similarity_matrix({p1}), input_error);
    }
}

TEST_CASE("distance matrix is elementwise -log") {
    SimilarityMatrix s;
    s.model_ids = {"a", "b", "c"};
    s.values = {1.0, 0.7071067811865476, 0.0,
                0.7071067811865476, 1.0, 0.5,
                0.0, 0.5, 1.0};
    const auto d = distance_matrix(s);
    CHECK(d.at(0, 0) == 0.0);
    CHECK(!std::signbit(d.at(0, 0)));
    // log oracle: -log(1/sqrt(2)) = ln(2)/2
    CHECK_THAT(d.at(0, 1), Catch::Matchers::WithinAbs(std::log(2.0) / 2.0, 1e-15));
    CHECK(std::isinf(d.at(0, 2)));
    CHECK(d.at(0, 2) > 0);
    CHECK_THAT(d.finite_cap, Catch::Matchers::WithinRel(1.05 * (-std::log(0.5)), 1e-12));
}

TEST_CASE("exp(-D) reconstructs S wherever finite") {
    auto rng = RngStream::keyed(17, std::string_view("dual"));
    for (int trial = 0; trial < 200; ++trial) {
        SimilarityMatrix s;
        s.model_ids = {"a", "b", "c", "d"};
        s.values.assign(16, 1.0);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) {
                const double v = rng.below(10) == 0 ? 0.0 : rng.uniform();
                s.at(i, j) = v;
                s.at(j, i) = v;
            }
        const auto d = distance_matrix(s);
        for (std::size_t c = 0; c < 16; ++c) {
            if (std::isinf(d.values[c]))
                CHECK(s.values[c] == 0.0);
            else
                CHECK_THAT(std::exp(-d.values[c]), Catch::Matchers::WithinAbs(s.values[c], 1e-12));
        }
    }
}

TEST_CASE("rms contrast") {
    SECTION("equal off-diagonals give zero") {
        SimilarityMatrix s;
        s.model_ids = {"a", "b", "c"};
        s.values = {1, 0.4, 0.4, 0.4, 1, 0.4, 0.4, 0.4, 1};
        CHECK(rms_contrast(s) == 0.0);
    }
    SECTION("hand-computed population standard deviation") {
        // pair values {0.2, 0.2, 0.8, 0.8, 0.2, 0.8}: mean 0.5, SD 0.3
        // (four models give exactly six unordered pairs)
        SimilarityMatrix s;
        s.model_ids = {"a", "b", "c", "d"};
        s.values = {1.0, 0.2, 0.8, 0.2,
                    0.2, 1.0, 0.8, 0.8,
                    0.8, 0.8, 1.0, 0.2,
                    0.2, 0.8, 0.2, 1.0};
        CHECK_THAT(rms_contrast(s), Catch::Matchers::WithinAbs(0.3, 1e-15));
    }
    SECTION("invariant under simultaneous permutation") {
        auto rng = RngStream::keyed(31, std::string_view("contrast"));
        SimilarityMatrix s;
        s.model_ids = {"a", "b", "c", "d"};
        s.values.assign(16, 1.0);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) {
                const double v = rng.uniform();
                s.at(i, j) = v;
                s.at(j, i) = v;
            }
        SimilarityMatrix p; // rotate labels by one
        p.model_ids = {"d", "a", "b", "c"};
        p.values.assign(16, 0.0);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                p.at(i, j) = s.at((i + 3) % 4, (j + 3) % 4);
        CHECK_THAT(rms_contrast(p), Catch::Matchers::WithinAbs(rms_contrast(s), 1e-15));
    }
    SECTION("1x1 rejected") {
        SimilarityMatrix s;
        s.model_ids = {"a"};
        s.values = {1.0};
        CHECK_THROWS_AS(rms_contrast(s), input_error);
    }
}

TEST_CASE("variability over replicate matrices") {
    const auto mat = [](double off) {
        SimilarityMatrix s;
        s.model_ids = {"a", "b"};
        s.values = {1.0, off, off, 1.0};
        return s;
    };

    SECTION("identical replicates give zero") {
        const auto cell = variability_of({mat(0.6), mat(0.6), mat(0.6)});
        CHECK(cell.v == 0.0);
        CHECK(cell.se == 0.0);
    }
    SECTION("two replicates: closed form |a-b|/2 per off-diagonal cell") {
        const double a = 0.9, b = 0.5;
        const auto cell = variability_of({mat(a), mat(b)});
        // per-cell spread: diagonal cells 0, off-diagonal cells |a-b|/2;
        // mean over the 4 cells = |a-b|/4
        CHECK_THAT(cell.v, Catch::Matchers::WithinAbs(std::abs(a - b) / 4.0, 1e-15));
    }
    SECTION("replicate shape mismatch rejected") {
        SimilarityMatrix other;
        other.model_ids = {"a", "z"};
        other.values = {1.0, 0.5, 0.5, 1.0};
        CHECK_THROWS_AS(variability_of({mat(0.5), other}), input_error);
    }
}

TEST_CASE("oracle deviation over replicate matrices") {
    const auto mat = [](double off) {
        SimilarityMatrix s;
        s.model_ids = {"a", "b"};
        s.values = {1.0, off, off, 1.0};
        return s;
    };

    SECTION("replicas equal to the oracle give zero") {
        CHECK(oracle_deviation_of({mat(0.7), mat(0.7)}, mat(0.7)).v == 0.0);
    }
    SECTION("single replicate: mean absolute elementwise difference") {
        // S off-diag 0.5 vs oracle 0.9: two cells at |0.4|, two diagonal zeros
        const auto cell = oracle_deviation_of({mat(0.5)}, mat(0.9));
        CHECK_THAT(cell.v, Catch::Matchers::WithinAbs(0.4 * 2.0 / 4.0, 1e-15));
    }
}

TEST_CASE("matrix files round-trip bit-exactly") {
    testutil::TempDir dir("matrix");
    SimilarityMatrix s;
    s.model_ids = {"alpha", "beta", "gamma"};
    s.values = {1.0, 0.123456789012345678, 0.0,
                0.123456789012345678, 1.0, 1.0 / 3.0,
                0.0, 1.0 / 3.0, 1.0};
    const auto spath = dir / "s.tsv";
    save_matrix(s, spath);
    const auto s2 = load_similarity(spath);
    CHECK(s2.model_ids == s.model_ids);
    CHECK(s2.values == s.values);

    const auto d = distance_matrix(s);
    const auto dpath = dir / "d.tsv";
    save_matrix(d, dpath);
    const auto d2 = load_distance(dpath);
    CHECK(d2.values == d.values);
    CHECK(d2.finite_cap == d.finite_cap);
    CHECK(read_text_file(dpath).find("inf") != std::string::npos);

    SECTION("ragged rows rejected") {
        atomic_write_file(dir / "bad.tsv", "a\tb\n1\t0.5\n0.5\n");
        CHECK_THROWS_AS(load_similarity(dir / "bad.tsv"), parse_error);
    }
}

TEST_CASE("variance reports round-trip") {
    testutil::TempDir dir("vreport");
    VarianceReport r;
    r.kind = "oracle-deviation";
    r.replicates = 8;
    r.oracle_params = {512, 128};
    r.grid[{16, 8}] = {0.125, 0.01};
    r.grid[{128, 32}] = {0.03125, 0.002};
    const auto path = dir / "report.jsonl";
    save_variance_report(r, path);
    const auto r2 = variance_report_from_string(read_text_file(path));
    CHECK(r2.kind == r.kind);
    CHECK(r2.replicates == r.replicates);
    CHECK(r2.oracle_params == r.oracle_params);
    REQUIRE(r2.grid.size() == 2);
    CHECK(r2.grid.at({16, 8}).v == 0.125);
    CHECK(r2.grid.at({128, 32}).se == 0.002);
}
