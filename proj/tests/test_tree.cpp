#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <regex>

#include "lmphylo/tree.hpp"
#include "tree_gen.hpp"

using namespace lmphylo;

namespace {

DistanceMatrix make_distance(const std::vector<std::string>& ids, const std::vector<double>& upper) {
    DistanceMatrix d;
    d.model_ids = ids;
    const std::size_t n = ids.size();
    d.values.assign(n * n, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            d.values[i * n + j] = upper[k];
            d.values[j * n + i] = upper[k];
            ++k;
        }
    double mx = 0.0;
    for (const double v : d.values)
        if (std::isfinite(v))
            mx = std::max(mx, v);
    d.finite_cap = mx > 0 ? 1.05 * mx : 1.0;
    return d;
}

double leaf_path(const PhyloTree& t, const std::string& a, const std::string& b) {
    std::size_t ia = t.nodes.size(), ib = t.nodes.size();
    for (std::size_t v = 0; v < t.nodes.size(); ++v) {
        if (t.nodes[v].label == a)
            ia = v;
        if (t.nodes[v].label == b)
            ib = v;
    }
    REQUIRE(ia < t.nodes.size());
    REQUIRE(ib < t.nodes.size());
    return t.path_length(ia, ib);
}

// Independent Newick oracle: a second, simpler parser that only extracts
// the leaf set and pairwise path lengths.
struct MiniNode {
    std::string label;
    double length = 0.0;
    std::vector<MiniNode> children;
};

MiniNode mini_parse(const std::string& text, std::size_t& pos) {
    MiniNode node;
    if (text[pos] == '(') {
        ++pos;
        for (;;) {
            node.children.push_back(mini_parse(text, pos));
            if (text[pos] == ',') {
                ++pos;
                continue;
            }
            break;
        }
        ++pos; // ')'
    }
    while (pos < text.size() && std::string("(),:;").find(text[pos]) == std::string::npos)
        node.label += text[pos++];
    if (pos < text.size() && text[pos] == ':') {
        ++pos;
        std::string num;
        while (pos < text.size() && std::string("(),:;").find(text[pos]) == std::string::npos)
            num += text[pos++];
        node.length = std::stod(num);
    }
    return node;
}

/// All pairwise leaf distances of a MiniNode tree: pairs from different
/// children of a node meet exactly at that node's depth.
std::map<std::pair<std::string, std::string>, double> mini_pairwise(const MiniNode& root) {
    std::map<std::pair<std::string, std::string>, double> out;
    const std::function<std::map<std::string, double>(const MiniNode&, double)> walk =
        [&](const MiniNode& node, double depth) {
            std::map<std::string, double> below;
            if (node.children.empty())
                below[node.label] = depth;
            std::vector<std::map<std::string, double>> per_child;
            for (const auto& c : node.children)
                per_child.push_back(walk(c, depth + c.length));
            for (std::size_t i = 0; i < per_child.size(); ++i)
                for (std::size_t j = i + 1; j < per_child.size(); ++j)
                    for (const auto& [la, da] : per_child[i])
                        for (const auto& [lb, db] : per_child[j]) {
                            auto key = la < lb ? std::make_pair(la, lb) : std::make_pair(lb, la);
                            out[key] = da + db - 2.0 * depth;
                        }
            for (const auto& m : per_child)
                for (const auto& [label, d] : m)
                    below[label] = d;
            return below;
        };
    walk(root, 0.0);
    return out;
}

} // namespace

TEST_CASE("nj: three leaves use the three-point formulas") {
    const auto d = make_distance({"A", "B", "C"}, {2, 3, 3});
    const auto tree = nj_tree(d);
    REQUIRE(tree.nodes.size() == 4);
    CHECK_THAT(leaf_path(tree, "A", "B"), Catch::Matchers::WithinAbs(2.0, 1e-12));
    CHECK(to_newick(tree) == "(A:1,B:1,C:2);");
}

TEST_CASE("nj: four-leaf additive matrix is recovered exactly") {
    // tree: A and B join at X, C and D join at Y, X-Y edge 1
    // A:1, B:2, C:3, D:4
    const auto d = make_distance({"A", "B", "C", "D"}, {3, 5, 6, 6, 7, 7});
    const auto tree = nj_tree(d);

    // split AB|CD present
    const auto splits = nontrivial_bipartitions(tree);
    REQUIRE(splits.size() == 1);
    CHECK(splits.count({"C", "D"}) == 1);

    // all five branch lengths come back via path-length reconstruction
    CHECK_THAT(leaf_path(tree, "A", "B"), Catch::Matchers::WithinAbs(3.0, 1e-12));
    CHECK_THAT(leaf_path(tree, "A", "C"), Catch::Matchers::WithinAbs(5.0, 1e-12));
    CHECK_THAT(leaf_path(tree, "A", "D"), Catch::Matchers::WithinAbs(6.0, 1e-12));
    CHECK_THAT(leaf_path(tree, "B", "C"), Catch::Matchers::WithinAbs(6.0, 1e-12));
    CHECK_THAT(leaf_path(tree, "B", "D"), Catch::Matchers::WithinAbs(7.0, 1e-12));
    CHECK_THAT(leaf_path(tree, "C", "D"), Catch::Matchers::WithinAbs(7.0, 1e-12));
}

TEST_CASE("nj: equal distances resolve deterministically") {
    const auto d = make_distance({"A", "B", "C", "D", "E"}, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
    const auto t1 = nj_tree(d);
    const auto t2 = nj_tree(d);
    CHECK(to_newick(t1) == to_newick(t2));
    for (const auto& e : t1.edges)
        CHECK(e.length >= 0.0);
}

TEST_CASE("nj: negative branch clamps preserve the joined pair's distance") {
    // first join is (A,C) with l_A = -1 before clamping
    const auto d = make_distance({"A", "B", "C", "D"}, {2, 2, 2, 2, 2, 10});
    const auto tree = nj_tree(d);
    for (const auto& e : tree.edges)
        CHECK(e.length >= 0.0);
    CHECK_THAT(leaf_path(tree, "A", "C"), Catch::Matchers::WithinAbs(2.0, 1e-12));
}

TEST_CASE("nj: infinite entries use finite_cap and warn") {
    auto d = make_distance({"A", "B", "C"}, {1.0, std::numeric_limits<double>::infinity(), 1.5});
    d.finite_cap = 1.05 * 1.5;
    std::vector<std::string> warnings;
    const auto tree = nj_tree(d, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK_THAT(warnings[0], Catch::Matchers::ContainsSubstring("finite_cap"));
    CHECK_THAT(leaf_path(tree, "A", "C"), Catch::Matchers::WithinAbs(d.finite_cap, 1e-12));
}

TEST_CASE("nj: input validation") {
    CHECK_THROWS_AS(nj_tree(make_distance({"A", "B"}, {1})), input_error);
    auto d = make_distance({"A", "B", "C"}, {1, 1, 1});
    d.values[1] = 0.9; // break symmetry
    CHECK_THROWS_AS(nj_tree(d), input_error);
    auto d2 = make_distance({"A", "B", "C"}, {1, 1, 1});
    d2.values[0] = 0.1; // nonzero diagonal
    CHECK_THROWS_AS(nj_tree(d2), input_error);
}

TEST_CASE("nj: recovers random additive trees") {
    auto rng = RngStream::keyed(404, std::string_view("nj-prop"));
    for (int trial = 0; trial < 40; ++trial) {
        const auto truth = testutil::random_additive_tree(rng, 4 + rng.below(9));
        const auto d = testutil::tree_distances(truth);
        const auto rebuilt = nj_tree(d);
        CHECK(nontrivial_bipartitions(rebuilt) == nontrivial_bipartitions(truth));
        const std::size_t n = d.size();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                REQUIRE_THAT(leaf_path(rebuilt, d.model_ids[i], d.model_ids[j]),
                             Catch::Matchers::WithinAbs(d.at(i, j), 1e-9));
    }
}

TEST_CASE("newick quoting") {
    PhyloTree t;
    t.nodes = {{"plain"}, {"with(paren"}, {"with space"}, {}};
    t.edges = {{3, 0, 1.0}, {3, 1, 2.0}, {3, 2, 0.5}};
    const auto text = to_newick(t);
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("'with(paren'"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("'with space'"));
    const auto back = parse_newick(text);
    auto labels = back.leaf_labels();
    std::sort(labels.begin(), labels.end());
    CHECK(labels == std::vector<std::string>{"plain", "with space", "with(paren"});
}

TEST_CASE("newick round trip preserves leaf set and path lengths") {
    auto rng = RngStream::keyed(777, std::string_view("newick-prop"));
    for (int trial = 0; trial < 25; ++trial) {
        const auto tree = testutil::random_additive_tree(rng, 4 + rng.below(8));
        const auto text = to_newick(tree);

        // library parser reproduces the tree up to internal naming
        const auto back = parse_newick(text);
        auto l1 = tree.leaf_labels();
        auto l2 = back.leaf_labels();
        std::sort(l1.begin(), l1.end());
        std::sort(l2.begin(), l2.end());
        REQUIRE(l1 == l2);
        for (std::size_t i = 0; i < l1.size(); ++i)
            for (std::size_t j = i + 1; j < l1.size(); ++j)
                REQUIRE_THAT(leaf_path(back, l1[i], l1[j]),
                             Catch::Matchers::WithinAbs(leaf_path(tree, l1[i], l1[j]), 1e-9));

        // independent mini-parser agrees on pairwise distances
        std::size_t pos = 0;
        const auto mini = mini_parse(text, pos);
        for (const auto& [pair, dist] : mini_pairwise(mini))
            REQUIRE_THAT(dist, Catch::Matchers::WithinAbs(leaf_path(tree, pair.first, pair.second), 1e-9));
    }
}

TEST_CASE("newick output is deterministic") {
    const auto d = make_distance({"A", "B", "C", "D"}, {3, 5, 6, 6, 7, 7});
    CHECK(to_newick(nj_tree(d)) == to_newick(nj_tree(d)));
}

TEST_CASE("svg: labels, colors, proportionality") {
    const auto d = make_distance({"A", "B", "C"}, {2, 3, 3});
    const auto tree = nj_tree(d);

    RenderOptions opts;
    opts.leaf_family = {{"A", "f1"}, {"B", "f1"}, {"C", "f2"}};
    opts.family_color = {{"f1", "#ff0000"}, {"f2", "#0000ff"}};
    const auto svg = render_svg(tree, opts);

    SECTION("exactly three leaf text elements") {
        std::size_t count = 0, pos = 0;
        while ((pos = svg.find("<text", pos)) != std::string::npos) {
            ++count;
            ++pos;
        }
        CHECK(count == 3);
        CHECK_THAT(svg, Catch::Matchers::ContainsSubstring(">A</text>"));
    }
    SECTION("two families color strokes") {
        CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("#ff0000"));
        CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("#0000ff"));
    }
    SECTION("deterministic") {
        CHECK(render_svg(tree, opts) == svg);
    }
    SECTION("doubling branch lengths preserves drawn ratios") {
        auto extract_lengths = [](const std::string& doc) {
            std::vector<double> lengths;
            const std::regex line_re("<line x1=\"([^\"]+)\" y1=\"([^\"]+)\" x2=\"([^\"]+)\" y2=\"([^\"]+)\"");
            for (auto it = std::sregex_iterator(doc.begin(), doc.end(), line_re);
                 it != std::sregex_iterator(); ++it) {
                const double dx = std::stod((*it)[3]) - std::stod((*it)[1]);
                const double dy = std::stod((*it)[4]) - std::stod((*it)[2]);
                lengths.push_back(std::hypot(dx, dy));
            }
            return lengths;
        };
        auto doubled = tree;
        for (auto& e : doubled.edges)
            e.length *= 2.0;
        const auto base_lens = extract_lengths(svg);
        const auto doubled_lens = extract_lengths(render_svg(doubled, opts));
        REQUIRE(base_lens.size() == doubled_lens.size());
        REQUIRE(base_lens.size() >= 3);
        // fit-to-canvas normalizes the global factor: segments must match 1:1
        for (std::size_t i = 0; i < base_lens.size(); ++i)
            if (base_lens[i] > 1e-9)
                CHECK_THAT(doubled_lens[i] / base_lens[i],
                           Catch::Matchers::WithinAbs(doubled_lens[0] / base_lens[0], 1e-6));
    }
    SECTION("rectangular layout renders and keeps labels") {
        RenderOptions rect = opts;
        rect.layout = TreeLayout::rectangular;
        const auto rect_svg = render_svg(tree, rect);
        CHECK_THAT(rect_svg, Catch::Matchers::ContainsSubstring(">C</text>"));
        CHECK_THAT(rect_svg, Catch::Matchers::ContainsSubstring("#ff0000"));
    }
}

TEST_CASE("svg: leaf ink distance tracks tree path length in radial layout") {
    // compare drawn straight-line polyline length along the tree path
    auto rng = RngStream::keyed(31337, std::string_view("svg-ink"));
    const auto tree = testutil::random_additive_tree(rng, 6);
    RenderOptions opts;
    const auto svg = render_svg(tree, opts);
    // total drawn ink equals scale * total branch length: segment lengths are
    // proportional to branch lengths edge by edge
    const std::regex line_re("<line x1=\"([^\"]+)\" y1=\"([^\"]+)\" x2=\"([^\"]+)\" y2=\"([^\"]+)\"");
    std::vector<double> drawn;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line_re); it != std::sregex_iterator();
         ++it)
        drawn.push_back(std::hypot(std::stod((*it)[3]) - std::stod((*it)[1]),
                                   std::stod((*it)[4]) - std::stod((*it)[2])));
    REQUIRE(drawn.size() == tree.edges.size());
    double total_drawn = 0.0, total_len = 0.0;
    for (const double v : drawn)
        total_drawn += v;
    for (const auto& e : tree.edges)
        total_len += e.length;
    const double scale = total_drawn / total_len;
    // per-edge proportionality with a shared scale factor (edge emit order is
    // a DFS from the root, matching adjacency construction order)
    std::size_t k = 0;
    struct Frame { std::size_t v, parent; };
    const auto adj = tree.adjacency();
    std::size_t root = 0;
    for (std::size_t v = 0; v < tree.nodes.size(); ++v)
        if (!tree.is_leaf(v))
            root = v;
    std::vector<Frame> stack{{root, tree.nodes.size()}};
    while (!stack.empty()) {
        const auto [v, parent] = stack.back();
        stack.pop_back();
        for (const auto& [w, len] : adj[v]) {
            if (w == parent)
                continue;
            REQUIRE_THAT(drawn[k], Catch::Matchers::WithinAbs(scale * len, 1e-6));
            ++k;
            stack.push_back({w, v});
        }
    }
}
