#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "contagion_lens/errors.hpp"
#include "contagion_lens/graph.hpp"

using namespace clens;

namespace {

Graph from(std::size_t n, std::vector<Edge> edges) { return Graph::from_edges(n, edges); }

bool connected(const Graph& g) {
    if (g.n_nodes() == 0)
        return true;
    std::vector<char> seen(g.n_nodes(), 0);
    std::vector<NodeId> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        for (auto u : g.neighbours(v))
            if (!seen[u]) {
                seen[u] = 1;
                ++count;
                stack.push_back(u);
            }
    }
    return count == g.n_nodes();
}

} // namespace

TEST_CASE("from_edges drops self-loops and duplicates") {
    std::vector<Edge> e{{0, 1}, {1, 0}, {1, 1}, {2, 1}};
    Graph::BuildStats st;
    auto g = Graph::from_edges(3, e, &st);
    CHECK(g.n_edges() == 2);
    CHECK(st.self_loops == 1);
    CHECK(st.duplicates == 1);
    CHECK(g.has_edge(1, 2));
    CHECK(g.edges().front() == Edge{0, 1});
}

TEST_CASE("ER giant component has mean degree near 4") {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto g = generate(ErSpec{1000, 0.004}, seed);
        CHECK(connected(g));
        CHECK(std::abs(g.mean_degree() - 4.0) <= 0.4);
        sum += g.mean_degree();
    }
    CHECK(sum / 20.0 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("generators are deterministic per seed") {
    CHECK(generate(BaSpec{500, 2}, 3).edges() == generate(BaSpec{500, 2}, 3).edges());
    CHECK(generate(WsSpec{500, 4, 0.1}, 3).edges() == generate(WsSpec{500, 4, 0.1}, 3).edges());
    CHECK(generate(ErSpec{500, 0.01}, 3).edges() != generate(ErSpec{500, 0.01}, 4).edges());
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(validate(ErSpec{100, 1.5}), ParameterError);
    CHECK_THROWS_AS(validate(WsSpec{100, 3, 0.1}), ParameterError);
    CHECK_THROWS_AS(validate(BaSpec{2, 3}), ParameterError);
}

TEST_CASE("star ensemble with degree forced to one") {
    auto g = generate(StarEnsembleSpec{5, 1, 1.0}, 1);
    CHECK(g.n_nodes() == 10);
    CHECK(g.n_edges() == 5);
}

TEST_CASE("truncated binomial mean matches closed form and sampling") {
    const double n = 1000, p = 0.004;
    const double closed = n * p / (1.0 - std::pow(1.0 - p, n));
    CHECK(closed == doctest::Approx(4.0735).epsilon(1e-3));
    CHECK(truncated_binomial_mean(1000, 0.004) == doctest::Approx(closed).epsilon(1e-9));
    Rng rng = make_rng(7, {});
    double sum = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        auto k = sample_truncated_binomial(1000, 0.004, rng);
        REQUIRE(k >= 1);
        sum += static_cast<double>(k);
    }
    CHECK(std::abs(sum / draws - closed) < 0.03);

    auto pmf = truncated_binomial_pmf(1000, 0.004, 60);
    CHECK(pmf[0] == 0.0);
    double total = 0.0;
    for (double w : pmf)
        total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("largest connected component") {
    auto tri = from(3, {{0, 1}, {1, 2}, {0, 2}});
    CHECK(largest_connected_component(tri).graph.edges() == tri.edges());

    auto mixed = from(5, {{0, 1}, {2, 3}, {3, 4}, {2, 4}});
    auto c = largest_connected_component(mixed);
    CHECK(c.graph.n_nodes() == 3);
    CHECK(c.original_id == std::vector<NodeId>{2, 3, 4});

    // Two triangles; the one holding node 0 wins.
    auto tie = from(6, {{1, 2}, {2, 3}, {1, 3}, {0, 4}, {4, 5}, {0, 5}});
    auto t = largest_connected_component(tie);
    CHECK(t.original_id == std::vector<NodeId>{0, 4, 5});
}

TEST_CASE("degree-biased subsample") {
    auto g = generate(BaSpec{2000, 2}, 5);
    auto one = degree_biased_subsample(g, 1, 9);
    CHECK(one.graph.n_nodes() == 1);
    CHECK(one.graph.n_edges() == 0);

    auto s = degree_biased_subsample(g, 300, 9);
    CHECK(s.graph.n_nodes() == 300);
    CHECK(connected(s.graph));
    for (const auto& [u, v] : s.graph.edges())
        CHECK(g.has_edge(s.original_id[u], s.original_id[v]));

    auto tree = from(6, {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {4, 5}});
    auto whole = degree_biased_subsample(tree, 6, 2);
    CHECK(whole.graph.n_edges() == 5);
    CHECK(std::set<NodeId>(whole.original_id.begin(), whole.original_id.end()).size() == 6);
}

TEST_CASE("edge list parsing") {
    std::istringstream path("0 1\n1 2\n");
    auto p = parse_edge_list(path, "path");
    CHECK(p.graph.n_nodes() == 3);
    CHECK(p.graph.n_edges() == 2);

    std::istringstream dup("# header\n0 1\n1 0\n1 1\n");
    auto d = parse_edge_list(dup, "dup");
    CHECK(d.graph.n_edges() == 1);
    CHECK(d.duplicates == 1);
    CHECK(d.self_loops == 1);

    std::istringstream labels("alice bob\nbob carol\n");
    auto l = parse_edge_list(labels, "labels");
    CHECK(l.labels == std::vector<std::string>{"alice", "bob", "carol"});

    std::istringstream bad("0 1\n2\n");
    CHECK_THROWS_AS(parse_edge_list(bad, "bad"), ParseError);
}
