// Unrooted phylogenetic trees from distance matrices.
//
// Neighbor-Joining: iteratively join the pair (i,j) minimizing
//     Q(i,j) = (m-2) d(i,j) - sum_k d(i,k) - sum_k d(j,k)
// with branch lengths
//     l_i = d(i,j)/2 + (sum_k d(i,k) - sum_k d(j,k)) / (2(m-2)),   l_j = d(i,j) - l_i
// and reduced distances d(u,k) = (d(i,k) + d(j,k) - d(i,j)) / 2. The loop
// stops at three clusters, which are joined through a central node by the
// three-point formulas, giving the conventional trifurcating unrooted tree.
//
// Determinism: Q ties break lexicographically on the current working index
// pair, so identical input yields byte-identical Newick output. Negative
// branch lengths are clamped to zero with the deficit moved to the sibling
// branch, preserving the pair sum. Infinite distances are replaced by the
// matrix's finite_cap, with a warning.
//
// For an additive input matrix the reconstruction is exact: leaf-to-leaf
// path lengths reproduce the matrix.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lmphylo/errors.hpp"
#include "lmphylo/phylo_core.hpp"
#include "lmphylo/util/num.hpp"

namespace lmphylo {

struct PhyloTree {
    struct Node {
        std::string label; // empty for internal nodes
    };
    struct Edge {
        std::size_t a = 0, b = 0;
        double length = 0.0;
    };

    std::vector<Node> nodes;
    std::vector<Edge> edges;

    bool is_leaf(std::size_t v) const { return !nodes[v].label.empty(); }

    std::vector<std::size_t> leaves() const {
        std::vector<std::size_t> out;
        for (std::size_t v = 0; v < nodes.size(); ++v)
            if (is_leaf(v))
                out.push_back(v);
        return out;
    }

    std::vector<std::string> leaf_labels() const {
        std::vector<std::string> out;
        for (const auto v : leaves())
            out.push_back(nodes[v].label);
        return out;
    }

    /// adjacency[v] = list of (neighbor, edge length)
    std::vector<std::vector<std::pair<std::size_t, double>>> adjacency() const {
        std::vector<std::vector<std::pair<std::size_t, double>>> adj(nodes.size());
        for (const auto& e : edges) {
            adj[e.a].push_back({e.b, e.length});
            adj[e.b].push_back({e.a, e.length});
        }
        return adj;
    }

    /// Sum of edge lengths along the unique path between two nodes.
    double path_length(std::size_t from, std::size_t to) const {
        const auto adj = adjacency();
        std::vector<double> dist(nodes.size(), -1.0);
        std::vector<std::size_t> stack{from};
        dist[from] = 0.0;
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (const auto& [w, len] : adj[v])
                if (dist[w] < 0.0) {
                    dist[w] = dist[v] + len;
                    stack.push_back(w);
                }
        }
        if (dist[to] < 0.0)
            throw input_error("path_length: nodes are not connected");
        return dist[to];
    }

    void validate() const {
        if (nodes.empty())
            throw input_error("tree has no nodes");
        if (edges.size() + 1 != nodes.size())
            throw input_error("tree is not a tree: " + std::to_string(nodes.size()) + " nodes, " +
                              std::to_string(edges.size()) + " edges");
        const auto adj = adjacency();
        std::vector<char> seen(nodes.size(), 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t reached = 1;
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (const auto& [w, len] : adj[v]) {
                (void)len;
                if (!seen[w]) {
                    seen[w] = 1;
                    ++reached;
                    stack.push_back(w);
                }
            }
        }
        if (reached != nodes.size())
            throw input_error("tree is disconnected");
        for (const auto& e : edges)
            if (e.length < 0.0)
                throw input_error("tree has a negative edge length");
    }
};

/// Neighbor-Joining over a symmetric distance matrix with zero diagonal.
/// Infinite entries are replaced by finite_cap (warning appended if a sink is
/// given). Requires n >= 3.
inline PhyloTree nj_tree(const DistanceMatrix& input, std::vector<std::string>* warnings = nullptr) {
    const std::size_t n = input.size();
    if (n < 3)
        throw input_error("nj_tree: need at least 3 models, got " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (input.at(i, i) != 0.0)
            throw input_error("nj_tree: nonzero diagonal at " + input.model_ids[i]);
        for (std::size_t j = i + 1; j < n; ++j)
            if (input.at(i, j) != input.at(j, i))
                throw input_error("nj_tree: matrix is not symmetric at (" + input.model_ids[i] +
                                  ", " + input.model_ids[j] + ")");
    }

    std::vector<std::vector<double>> d(n, std::vector<double>(n));
    std::size_t replaced = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = input.at(i, j);
            if (std::isinf(v)) {
                v = input.finite_cap;
                ++replaced;
            }
            d[i][j] = v;
        }
    if (replaced && warnings)
        warnings->push_back("nj_tree: replaced " + std::to_string(replaced / 2) +
                            " infinite distances with finite_cap=" + fmt_double(input.finite_cap));

    PhyloTree tree;
    for (const auto& id : input.model_ids)
        tree.nodes.push_back({id});
    std::vector<std::size_t> node_of(n); // tree node backing working row
    for (std::size_t i = 0; i < n; ++i)
        node_of[i] = i;

    // Clamp a joined pair: negatives go to zero, deficit moves to the sibling
    // so l_i + l_j is preserved (when the sum itself is non-negative).
    const auto clamp_pair = [](double& li, double& lj) {
        if (li < 0.0) {
            lj += li;
            li = 0.0;
        }
        if (lj < 0.0) {
            li = std::max(0.0, li + lj);
            lj = 0.0;
        }
    };

    std::size_t m = n;
    while (m > 3) {
        std::vector<double> rowsum(m, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                rowsum[i] += d[i][j];

        std::size_t bi = 0, bj = 1;
        double best_q = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) {
                const double q = static_cast<double>(m - 2) * d[i][j] - rowsum[i] - rowsum[j];
                if (q < best_q) { // strict: first lexicographic (i,j) wins ties
                    best_q = q;
                    bi = i;
                    bj = j;
                }
            }

        const double dij = d[bi][bj];
        double li = 0.5 * dij + (rowsum[bi] - rowsum[bj]) / (2.0 * static_cast<double>(m - 2));
        double lj = dij - li;
        clamp_pair(li, lj);

        const std::size_t u = tree.nodes.size();
        tree.nodes.push_back({});
        tree.edges.push_back({u, node_of[bi], li});
        tree.edges.push_back({u, node_of[bj], lj});

        // new cluster takes row bi; row bj is erased preserving order
        std::vector<double> du(m);
        for (std::size_t k = 0; k < m; ++k)
            du[k] = 0.5 * (d[bi][k] + d[bj][k] - dij);
        du[bi] = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            d[bi][k] = du[k];
            d[k][bi] = du[k];
        }
        node_of[bi] = u;
        for (std::size_t k = 0; k < m; ++k)
            d[k].erase(d[k].begin() + static_cast<std::ptrdiff_t>(bj));
        d.erase(d.begin() + static_cast<std::ptrdiff_t>(bj));
        node_of.erase(node_of.begin() + static_cast<std::ptrdiff_t>(bj));
        --m;
    }

    // three-point join through a central node
    const double l0 = 0.5 * (d[0][1] + d[0][2] - d[1][2]);
    const double l1 = 0.5 * (d[0][1] + d[1][2] - d[0][2]);
    const double l2 = 0.5 * (d[0][2] + d[1][2] - d[0][1]);
    const std::size_t center = tree.nodes.size();
    tree.nodes.push_back({});
    tree.edges.push_back({center, node_of[0], std::max(0.0, l0)});
    tree.edges.push_back({center, node_of[1], std::max(0.0, l1)});
    tree.edges.push_back({center, node_of[2], std::max(0.0, l2)});
    return tree;
}

// ---- Newick -----------------------------------------------------------------

namespace detail {

inline bool newick_needs_quotes(const std::string& label) {
    if (label.empty())
        return true;
    return label.find_first_of(" \t\n()[]{}:;,'\"") != std::string::npos;
}

inline std::string newick_label(const std::string& label) {
    if (!newick_needs_quotes(label))
        return label;
    std::string out = "'";
    for (const char c : label) {
        out += c;
        if (c == '\'')
            out += '\''; // quotes double inside quoted labels
    }
    out += '\'';
    return out;
}

inline void newick_subtree(const PhyloTree& tree,
                           const std::vector<std::vector<std::pair<std::size_t, double>>>& adj,
                           std::size_t v, std::size_t parent, std::string& out) {
    std::vector<std::pair<std::size_t, double>> children;
    for (const auto& [w, len] : adj[v])
        if (w != parent)
            children.push_back({w, len});
    std::sort(children.begin(), children.end());
    if (!children.empty()) {
        out += '(';
        for (std::size_t i = 0; i < children.size(); ++i) {
            if (i)
                out += ',';
            newick_subtree(tree, adj, children[i].first, v, out);
            out += ':';
            out += fmt_double(children[i].second);
        }
        out += ')';
    }
    if (tree.is_leaf(v))
        out += newick_label(tree.nodes[v].label);
}

} // namespace detail

/// Newick text, unrooted convention: printed from the highest-index internal
/// node (NJ's central trifurcation), trailing semicolon, no newline.
inline std::string to_newick(const PhyloTree& tree) {
    std::size_t root = 0;
    for (std::size_t v = 0; v < tree.nodes.size(); ++v)
        if (!tree.is_leaf(v))
            root = v;
    const auto adj = tree.adjacency();
    std::string out;
    detail::newick_subtree(tree, adj, root, tree.nodes.size(), out);
    out += ';';
    return out;
}

namespace detail {

struct NewickParser {
    std::string_view text;
    std::size_t pos = 0;
    PhyloTree tree;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
    }
    char peek() {
        skip_ws();
        if (pos >= text.size())
            throw parse_error("newick: unexpected end of input");
        return text[pos];
    }
    void expect(char c) {
        if (peek() != c)
            throw parse_error(std::string("newick: expected '") + c + "' at position " +
                              std::to_string(pos));
        ++pos;
    }

    std::string label() {
        skip_ws();
        std::string out;
        if (pos < text.size() && text[pos] == '\'') {
            ++pos;
            for (;;) {
                if (pos >= text.size())
                    throw parse_error("newick: unterminated quoted label");
                if (text[pos] == '\'') {
                    if (pos + 1 < text.size() && text[pos + 1] == '\'') {
                        out += '\'';
                        pos += 2;
                    } else {
                        ++pos;
                        break;
                    }
                } else
                    out += text[pos++];
            }
            return out;
        }
        while (pos < text.size() && std::string_view("()[]{},:;'\"").find(text[pos]) == std::string_view::npos &&
               !std::isspace(static_cast<unsigned char>(text[pos])))
            out += text[pos++];
        return out;
    }

    double branch_length() {
        skip_ws();
        if (pos < text.size() && text[pos] == ':') {
            ++pos;
            skip_ws();
            std::size_t start = pos;
            while (pos < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[pos])) ||
                    std::string_view("+-.eEinf").find(text[pos]) != std::string_view::npos))
                ++pos;
            return parse_double(text.substr(start, pos - start), "branch length");
        }
        return 0.0;
    }

    // returns (node index, incoming branch length)
    std::pair<std::size_t, double> subtree() {
        if (peek() == '(') {
            ++pos;
            const std::size_t v = tree.nodes.size();
            tree.nodes.push_back({});
            for (;;) {
                auto [child, len] = subtree();
                tree.edges.push_back({v, child, len});
                if (peek() == ',') {
                    ++pos;
                    continue;
                }
                break;
            }
            expect(')');
            label(); // internal labels are parsed and dropped
            return {v, branch_length()};
        }
        const std::string name = label();
        if (name.empty())
            throw parse_error("newick: empty leaf label at position " + std::to_string(pos));
        const std::size_t v = tree.nodes.size();
        tree.nodes.push_back({name});
        return {v, branch_length()};
    }
};

/// Contract internal nodes of degree 2, merging their incident edges.
/// Rooted-file conventions and single-child lineage chains reduce to proper
/// unrooted topology this way.
inline void contract_degree2(PhyloTree& t) {
    for (;;) {
        auto adj = t.adjacency();
        std::size_t victim = t.nodes.size();
        for (std::size_t v = 0; v < t.nodes.size(); ++v)
            if (!t.is_leaf(v) && adj[v].size() == 2) {
                victim = v;
                break;
            }
        if (victim == t.nodes.size())
            break;
        const auto [a, la] = adj[victim][0];
        const auto [b, lb] = adj[victim][1];
        std::vector<PhyloTree::Edge> kept;
        for (const auto& e : t.edges)
            if (e.a != victim && e.b != victim)
                kept.push_back(e);
        kept.push_back({a, b, la + lb});
        // drop the node, remapping indices above it
        t.nodes.erase(t.nodes.begin() + static_cast<std::ptrdiff_t>(victim));
        for (auto& e : kept) {
            if (e.a > victim) --e.a;
            if (e.b > victim) --e.b;
        }
        t.edges = std::move(kept);
    }
}

} // namespace detail

/// Parse Newick text. Degree-2 internal nodes (rooted-file convention) are
/// contracted so the result is a proper unrooted tree.
inline PhyloTree parse_newick(std::string_view text) {
    detail::NewickParser p{text};
    auto [root, len] = p.subtree();
    (void)root;
    (void)len;
    p.skip_ws();
    if (p.pos >= p.text.size() || p.text[p.pos] != ';')
        throw parse_error("newick: missing trailing semicolon");
    detail::contract_degree2(p.tree);
    p.tree.validate();
    return p.tree;
}

// ---- bipartitions -----------------------------------------------------------

/// Nontrivial bipartitions induced by internal edges: each is the sorted set
/// of leaf labels on the side away from the lexicographically smallest leaf.
inline std::set<std::vector<std::string>> nontrivial_bipartitions(const PhyloTree& tree) {
    const auto adj = tree.adjacency();
    const auto leaf_ids = tree.leaves();
    if (leaf_ids.empty())
        return {};
    std::string anchor = tree.nodes[leaf_ids[0]].label;
    for (const auto v : leaf_ids)
        anchor = std::min(anchor, tree.nodes[v].label);

    std::set<std::vector<std::string>> out;
    for (const auto& e : tree.edges) {
        // leaves on the 'b' side of edge (a,b)
        std::vector<std::string> side;
        std::vector<std::size_t> stack{e.b};
        std::set<std::size_t> seen{e.a, e.b};
        if (tree.is_leaf(e.b))
            side.push_back(tree.nodes[e.b].label);
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (const auto& [w, len] : adj[v]) {
                (void)len;
                if (seen.insert(w).second) {
                    if (tree.is_leaf(w))
                        side.push_back(tree.nodes[w].label);
                    stack.push_back(w);
                }
            }
        }
        const std::size_t total = leaf_ids.size();
        if (side.size() < 2 || total - side.size() < 2)
            continue;
        if (std::find(side.begin(), side.end(), anchor) != side.end()) {
            // flip to the side not containing the anchor
            std::set<std::string> in_side(side.begin(), side.end());
            side.clear();
            for (const auto v : leaf_ids)
                if (!in_side.count(tree.nodes[v].label))
                    side.push_back(tree.nodes[v].label);
        }
        std::sort(side.begin(), side.end());
        out.insert(std::move(side));
    }
    return out;
}

// ---- SVG rendering ----------------------------------------------------------

enum class TreeLayout { radial, rectangular };

struct RenderOptions {
    TreeLayout layout = TreeLayout::radial;
    std::map<std::string, std::string> leaf_family; // leaf label -> family
    std::map<std::string, std::string> family_color;
    std::string default_color = "#555555";
    double width = 960.0;
    double height = 720.0;
    double margin = 60.0;
    double stroke_width = 1.5;
    double font_size = 11.0;
};

namespace detail {

struct LayoutPoint {
    double x = 0.0, y = 0.0;
};

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

/// Self-contained SVG. Radial layout is the equal-angle algorithm: each
/// subtree gets an angular wedge proportional to its leaf count, and every
/// edge is drawn as a straight segment whose length is proportional to its
/// branch length, so leaf-to-leaf ink length tracks tree path length.
inline std::string render_svg(const PhyloTree& tree, const RenderOptions& opts = {}) {
    tree.validate();
    const auto adj = tree.adjacency();
    const std::size_t n_nodes = tree.nodes.size();

    std::size_t root = 0;
    for (std::size_t v = 0; v < n_nodes; ++v)
        if (!tree.is_leaf(v))
            root = v;

    // leaves under each node as seen from the chosen root
    std::vector<std::size_t> leaf_count(n_nodes, 0);
    {
        struct Frame { std::size_t v, parent; bool entered; };
        std::vector<Frame> stack{{root, n_nodes, false}};
        while (!stack.empty()) {
            auto [v, parent, entered] = stack.back();
            stack.pop_back();
            if (!entered) {
                stack.push_back({v, parent, true});
                for (const auto& [w, len] : adj[v]) {
                    (void)len;
                    if (w != parent)
                        stack.push_back({w, v, false});
                }
            } else {
                if (tree.is_leaf(v))
                    leaf_count[v] = 1;
                else
                    for (const auto& [w, len] : adj[v]) {
                        (void)len;
                        if (w != parent)
                            leaf_count[v] += leaf_count[w];
                    }
            }
        }
    }
    const double total_leaves = static_cast<double>(leaf_count[root]);

    std::vector<detail::LayoutPoint> pos(n_nodes);
    std::vector<double> leaf_angle(n_nodes, 0.0);

    if (opts.layout == TreeLayout::radial) {
        struct Frame { std::size_t v, parent; double lo, hi; };
        std::vector<Frame> stack{{root, n_nodes, 0.0, 2.0 * 3.14159265358979323846}};
        while (!stack.empty()) {
            const auto [v, parent, lo, hi] = stack.back();
            stack.pop_back();
            double cursor = lo;
            for (const auto& [w, len] : adj[v]) {
                if (w == parent)
                    continue;
                const double span = (hi - lo) * static_cast<double>(leaf_count[w]) / total_leaves;
                const double theta = cursor + span / 2.0;
                pos[w].x = pos[v].x + len * std::cos(theta);
                pos[w].y = pos[v].y + len * std::sin(theta);
                leaf_angle[w] = theta;
                stack.push_back({w, v, cursor, cursor + span});
                cursor += span;
            }
        }
    } else {
        // rectangular phylogram: x = path length from root, y = leaf order
        std::size_t next_leaf = 0;
        struct Frame { std::size_t v, parent; double x; bool entered; };
        std::vector<Frame> stack{{root, n_nodes, 0.0, false}};
        while (!stack.empty()) {
            auto [v, parent, x, entered] = stack.back();
            stack.pop_back();
            if (!entered) {
                pos[v].x = x;
                if (tree.is_leaf(v)) {
                    pos[v].y = static_cast<double>(next_leaf++);
                    continue;
                }
                stack.push_back({v, parent, x, true});
                // push in reverse so lower-index children are laid out first
                std::vector<std::pair<std::size_t, double>> children;
                for (const auto& [w, len] : adj[v])
                    if (w != parent)
                        children.push_back({w, len});
                std::sort(children.begin(), children.end());
                for (auto it = children.rbegin(); it != children.rend(); ++it)
                    stack.push_back({it->first, v, x + it->second, false});
            } else {
                double sum = 0.0;
                std::size_t cnt = 0;
                for (const auto& [w, len] : adj[v]) {
                    (void)len;
                    if (w != parent) {
                        sum += pos[w].y;
                        ++cnt;
                    }
                }
                pos[v].y = cnt ? sum / static_cast<double>(cnt) : 0.0;
            }
        }
    }

    // fit to canvas
    double min_x = pos[0].x, max_x = pos[0].x, min_y = pos[0].y, max_y = pos[0].y;
    for (const auto& p : pos) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double span_x = max_x - min_x, span_y = max_y - min_y;
    const double usable_w = opts.width - 2.0 * opts.margin;
    const double usable_h = opts.height - 2.0 * opts.margin;
    double scale = std::numeric_limits<double>::infinity();
    if (span_x > 0.0)
        scale = usable_w / span_x;
    if (span_y > 0.0)
        scale = std::min(scale, usable_h / span_y);
    if (!std::isfinite(scale))
        scale = 1.0;
    const auto tx = [&](double x) { return opts.margin + (x - min_x) * scale; };
    const auto ty = [&](double y) { return opts.margin + (y - min_y) * scale; };

    // family of the subtree hanging below each node (empty = mixed)
    std::vector<std::string> subtree_family(n_nodes);
    std::vector<char> family_known(n_nodes, 0);
    {
        struct Frame { std::size_t v, parent; bool entered; };
        std::vector<Frame> stack{{root, n_nodes, false}};
        while (!stack.empty()) {
            auto [v, parent, entered] = stack.back();
            stack.pop_back();
            if (!entered) {
                stack.push_back({v, parent, true});
                for (const auto& [w, len] : adj[v]) {
                    (void)len;
                    if (w != parent)
                        stack.push_back({w, v, false});
                }
            } else if (tree.is_leaf(v)) {
                const auto it = opts.leaf_family.find(tree.nodes[v].label);
                subtree_family[v] = it != opts.leaf_family.end() ? it->second : std::string();
                family_known[v] = 1;
            } else {
                bool first = true, uniform = true;
                std::string fam;
                for (const auto& [w, len] : adj[v]) {
                    (void)len;
                    if (w == parent)
                        continue;
                    if (!family_known[w])
                        uniform = false;
                    else if (first) {
                        fam = subtree_family[w];
                        first = false;
                    } else if (subtree_family[w] != fam)
                        uniform = false;
                }
                family_known[v] = uniform && !first;
                subtree_family[v] = family_known[v] ? fam : std::string();
            }
        }
    }

    const auto edge_color = [&](std::size_t child) -> std::string {
        if (!family_known[child] || subtree_family[child].empty())
            return opts.default_color;
        const auto it = opts.family_color.find(subtree_family[child]);
        return it != opts.family_color.end() ? it->second : opts.default_color;
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           fmt_double(opts.width) + "\" height=\"" + fmt_double(opts.height) + "\" viewBox=\"0 0 " +
           fmt_double(opts.width) + " " + fmt_double(opts.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // edges, child-side coloring relative to the drawing root
    struct Frame { std::size_t v, parent; };
    std::vector<Frame> stack{{root, n_nodes}};
    while (!stack.empty()) {
        const auto [v, parent] = stack.back();
        stack.pop_back();
        for (const auto& [w, len] : adj[v]) {
            (void)len;
            if (w == parent)
                continue;
            if (opts.layout == TreeLayout::radial) {
                svg += "<line x1=\"" + fmt_double(tx(pos[v].x)) + "\" y1=\"" + fmt_double(ty(pos[v].y)) +
                       "\" x2=\"" + fmt_double(tx(pos[w].x)) + "\" y2=\"" + fmt_double(ty(pos[w].y)) +
                       "\" stroke=\"" + edge_color(w) + "\" stroke-width=\"" +
                       fmt_double(opts.stroke_width) + "\"/>\n";
            } else {
                // vertical connector at the parent's x, then horizontal run
                svg += "<line x1=\"" + fmt_double(tx(pos[v].x)) + "\" y1=\"" + fmt_double(ty(pos[v].y)) +
                       "\" x2=\"" + fmt_double(tx(pos[v].x)) + "\" y2=\"" + fmt_double(ty(pos[w].y)) +
                       "\" stroke=\"" + opts.default_color + "\" stroke-width=\"" +
                       fmt_double(opts.stroke_width) + "\"/>\n";
                svg += "<line x1=\"" + fmt_double(tx(pos[v].x)) + "\" y1=\"" + fmt_double(ty(pos[w].y)) +
                       "\" x2=\"" + fmt_double(tx(pos[w].x)) + "\" y2=\"" + fmt_double(ty(pos[w].y)) +
                       "\" stroke=\"" + edge_color(w) + "\" stroke-width=\"" +
                       fmt_double(opts.stroke_width) + "\"/>\n";
            }
            stack.push_back({w, v});
        }
    }

    // leaf labels
    for (const auto v : tree.leaves()) {
        double x = tx(pos[v].x), y = ty(pos[v].y);
        std::string anchor = "start";
        if (opts.layout == TreeLayout::radial) {
            const double c = std::cos(leaf_angle[v]);
            x += 4.0 * c;
            y += 4.0 * std::sin(leaf_angle[v]) + opts.font_size * 0.35;
            if (c < -0.1)
                anchor = "end";
        } else {
            x += 4.0;
            y += opts.font_size * 0.35;
        }
        svg += "<text x=\"" + fmt_double(x) + "\" y=\"" + fmt_double(y) + "\" font-size=\"" +
               fmt_double(opts.font_size) + "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
               "\">" + detail::svg_escape(tree.nodes[v].label) + "</text>\n";
    }

    svg += "</svg>\n";
    return svg;
}

} // namespace lmphylo
