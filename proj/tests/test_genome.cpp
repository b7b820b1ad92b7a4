#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lmphylo/genome.hpp"
#include "lmphylo/util/unicode.hpp"

using namespace lmphylo;

namespace {

Corpus filler_corpus(std::size_t records, std::size_t chars) {
    Corpus corpus;
    for (std::size_t k = 0; k < records; ++k) {
        std::string text;
        while (text.size() < chars)
            text += static_cast<char>('a' + (text.size() * 7 + k) % 26);
        corpus.push_back({text, "rec:" + std::to_string(k)});
    }
    return corpus;
}

} // namespace

TEST_CASE("sample_genes cuts at the drawn index") {
    Corpus corpus{{std::string(120, 'x'), "rec:0"}};
    const auto set = sample_genes(corpus, 1, 7, 20, 20); // pin the cut to the lower bound
    REQUIRE(set.genes.size() == 1);
    CHECK(set.genes[0].context == std::string(20, 'x'));
    CHECK(set.genes[0].cut_index == 20);
    CHECK(set.genes[0].source == "rec:0");
}

TEST_CASE("sample_genes counts characters, not bytes") {
    // five-character cuts on CJK text; each char is 3 bytes in UTF-8
    Corpus corpus{{"春眠不觉晓处处闻啼鸟夜来风雨声花落知多少", "poem:1"},
                  {"床前明月光疑是地上霜举头望明月低头思故乡", "poem:2"}};
    const auto set = sample_genes(corpus, 2, 3, 5, 5);
    for (const auto& g : set.genes) {
        CHECK(cp_count(g.context) == 5);
        CHECK(g.context.size() == 15);
        CHECK(g.cut_index == 5);
    }
}

TEST_CASE("sample_genes is deterministic") {
    const auto corpus = filler_corpus(50, 150);
    const auto a = sample_genes(corpus, 20, 42);
    const auto b = sample_genes(corpus, 20, 42);
    CHECK(a == b);
    CHECK(genes_to_string(a) == genes_to_string(b));
    const auto c = sample_genes(corpus, 20, 43);
    CHECK(a.genes != c.genes);
}

TEST_CASE("sample_genes respects length bounds and prefix property") {
    const auto corpus = filler_corpus(40, 60); // some records shorter than max_cut
    const auto set = sample_genes(corpus, 200, 11, 20, 100); // with replacement
    REQUIRE(set.genes.size() == 200);
    for (const auto& g : set.genes) {
        const auto len = static_cast<std::int64_t>(cp_count(g.context));
        CHECK(len >= 20);
        CHECK(len <= 100);
        CHECK(len == g.cut_index);
        // context is a prefix of some corpus record
        bool is_prefix = false;
        for (const auto& rec : corpus)
            if (rec.text.rfind(g.context, 0) == 0) {
                is_prefix = true;
                break;
            }
        CHECK(is_prefix);
    }
}

TEST_CASE("sample_genes without replacement picks distinct records") {
    const auto corpus = filler_corpus(64, 150);
    const auto set = sample_genes(corpus, 64, 9);
    std::set<std::string> sources;
    for (const auto& g : set.genes)
        sources.insert(g.source);
    CHECK(sources.size() == 64);
}

TEST_CASE("sample_genes error paths") {
    CHECK_THROWS_AS(sample_genes({}, 4, 1), input_error);
    const auto corpus = filler_corpus(5, 150);
    CHECK_THROWS_AS(sample_genes(corpus, 0, 1), input_error);
    CHECK_THROWS_AS(sample_genes(corpus, -3, 1), input_error);
    Corpus shorty{{"tiny", "rec:0"}};
    CHECK_THROWS_WITH(sample_genes(shorty, 1, 1, 20, 100),
                      Catch::Matchers::ContainsSubstring("min_cut=20") &&
                          Catch::Matchers::ContainsSubstring("4"));
}

TEST_CASE("records shorter than min_cut are skipped, not padded") {
    Corpus corpus{{"abc", "rec:0"}, {std::string(150, 'q'), "rec:1"}};
    const auto set = sample_genes(corpus, 10, 5, 20, 100);
    for (const auto& g : set.genes)
        CHECK(g.source == "rec:1");
}

TEST_CASE("duplicate contexts are kept but counted") {
    Corpus corpus{{std::string(30, 'z'), "rec:0"}, {std::string(30, 'z'), "rec:1"}};
    const auto set = sample_genes(corpus, 2, 1, 30, 30); // both cut to the same text
    REQUIRE(set.genes.size() == 2);
    CHECK(set.genes[0].context == set.genes[1].context);
    CHECK(set.duplicate_contexts == 1);
}

TEST_CASE("apply_template wraps contexts") {
    GeneSet set;
    set.name = "t";
    set.genes.push_back({"g0", "2+2=", "src", 4});

    SECTION("identity template") {
        const auto out = apply_template(set, "", "");
        CHECK(out.genes == set.genes);
    }
    SECTION("chat wrapping") {
        const auto out = apply_template(set, "User:", "\n Assistant:");
        CHECK(out.genes[0].context == "User:2+2=\n Assistant:");
        CHECK(out.genes[0].id == "g0");
        REQUIRE(out.tmpl.has_value());
        CHECK(out.name != set.name);
    }
    SECTION("double application duplicates markers") {
        const auto once = apply_template(set, "<", ">");
        const auto twice = apply_template(once, "<", ">");
        // oracle: plain string concatenation
        CHECK(twice.genes[0].context == "<" + ("<" + set.genes[0].context + ">") + ">");
    }
    SECTION("empty set rejected") {
        GeneSet empty;
        CHECK_THROWS_AS(apply_template(empty, "a", "b"), input_error);
    }
}

TEST_CASE("gene sets round-trip through files") {
    testutil::TempDir dir("genome");
    GeneSet set;
    set.name = "round";
    set.rng_seed = 99;
    set.genes.push_back({"g0", "line one\nline two", "src:1", 17});
    set.genes.push_back({"g1", "汉字文本，带标点。", "src:2", 9});
    set.genes.push_back({"g2", "  leading and trailing  ", "src:3", 24});
    set.tmpl = GeneTemplate{"pre ", " post"};

    const auto path = dir / "genes.jsonl";
    save_genes(set, path);
    const auto loaded = load_genes(path);
    CHECK(loaded == set);

    // saving the loaded set reproduces the bytes
    save_genes(loaded, dir / "genes2.jsonl");
    CHECK(read_text_file(path) == read_text_file(dir / "genes2.jsonl"));
}

TEST_CASE("gene file parse errors carry positions and field names") {
    testutil::TempDir dir("genome-err");
    const auto path = dir / "bad.jsonl";

    SECTION("missing field") {
        atomic_write_file(path, R"({"id":"g0","context":"abc","cut_index":3})" "\n");
        CHECK_THROWS_WITH(load_genes(path), Catch::Matchers::ContainsSubstring("source"));
    }
    SECTION("malformed line numbered") {
        atomic_write_file(path,
                          R"({"id":"g0","context":"abc","source":"s","cut_index":3})" "\n"
                          "{oops\n");
        CHECK_THROWS_WITH(load_genes(path), Catch::Matchers::ContainsSubstring("line 2"));
    }
    SECTION("duplicate ids rejected") {
        atomic_write_file(path,
                          R"({"id":"g0","context":"abc","source":"s","cut_index":3})" "\n"
                          R"({"id":"g0","context":"def","source":"s","cut_index":3})" "\n");
        CHECK_THROWS_AS(load_genes(path), parse_error);
    }
}

TEST_CASE("gene set round-trip holds for randomized content") {
    auto rng = lmphylo::RngStream::keyed(2024, std::string_view("genome-prop"));
    for (int trial = 0; trial < 25; ++trial) {
        GeneSet set;
        set.name = "prop";
        set.rng_seed = rng.next();
        const auto n = 1 + rng.below(12);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string context;
            const auto len = 1 + rng.below(40);
            for (std::uint64_t c = 0; c < len; ++c) {
                const auto pick = rng.below(24);
                if (pick < 16)
                    context += static_cast<char>('a' + pick);
                else if (pick < 19)
                    context += "宇";
                else if (pick < 21)
                    context += '\n';
                else if (pick == 21)
                    context += '\t';
                else if (pick == 22)
                    context += '"';
                else
                    context += '\\';
            }
            set.genes.push_back({"g" + std::to_string(i), context, "src",
                                 static_cast<std::int64_t>(lmphylo::cp_count(context))});
        }
        const auto loaded = genes_from_string(genes_to_string(set));
        REQUIRE(loaded == set);
    }
}

TEST_CASE("load_corpus numbers lines and strips carriage returns") {
    testutil::TempDir dir("corpus");
    const auto path = dir / "corpus.txt";
    atomic_write_file(path, "first record\r\nsecond record\n\nfourth record");
    const auto corpus = load_corpus(path);
    REQUIRE(corpus.size() == 4);
    CHECK(corpus[0].text == "first record");
    CHECK(corpus[0].source == "corpus.txt:1");
    CHECK(corpus[2].text.empty());
    CHECK(corpus[3].source == "corpus.txt:4");
}
