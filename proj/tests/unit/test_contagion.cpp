#include <doctest.h>

#include <memory>
#include <sstream>

#include "contagion_lens/contagion.hpp"
#include "contagion_lens/errors.hpp"

using namespace clens;

namespace {

std::shared_ptr<const Graph> shared(std::size_t n, std::vector<Edge> e) {
    return std::make_shared<const Graph>(Graph::from_edges(n, e));
}

std::vector<NodeAssignment> all_complex(std::size_t n, double phi) {
    return std::vector<NodeAssignment>(n, NodeAssignment::complex(phi));
}

/// First seed in [1, 1000) whose cascade starts at `node`.
std::uint64_t seed_starting_at(const std::shared_ptr<const Graph>& g, NodeId node) {
    for (std::uint64_t s = 1; s < 1000; ++s)
        if (simulate_network(g, all_complex(g->n_nodes(), 1.0), 0.0, 1.0, 0, s).seed_node == node)
            return s;
    FAIL("no seed found");
    return 0;
}

} // namespace

TEST_CASE("threshold rule is strict") {
    CHECK_FALSE(threshold_reached(2, 4, 0.5));
    CHECK(threshold_reached(3, 4, 0.5));
    CHECK(threshold_reached(1, 10, 0.09));
    CHECK_FALSE(threshold_reached(7, 10, 0.7));
    CHECK(threshold_reached(8, 10, 0.7));
    CHECK(required_infected(10, 0.7) == 8);
    CHECK(required_infected(4, 0.1) == 1);
    CHECK(required_infected(3, 1.0) == 4);
    CHECK(threshold_level(10, 0.7) == 7.0);
}

TEST_CASE("assignments expose only their own parameter") {
    auto s = NodeAssignment::simple(0.3);
    CHECK(s.beta() == 0.3);
    CHECK_THROWS_AS(s.phi(), ConfigError);
    CHECK_THROWS_AS(NodeAssignment::simple(1.5), ParameterError);
}

TEST_CASE("r = 1 saturates in one step") {
    auto g = std::make_shared<const Graph>(generate(ErSpec{200, 0.03}, 2));
    auto c = simulate_network(g, all_complex(g->n_nodes(), 0.5), 1.0, 1.0, 100, 4);
    for (NodeId v = 0; v < g->n_nodes(); ++v) {
        if (v == c.seed_node) {
            CHECK(c.nodes[v].adoption_time == 0);
            CHECK_FALSE(c.nodes[v].fired);
            continue;
        }
        CHECK(c.nodes[v].adoption_time == 1);
        CHECK(c.nodes[v].fired == Mechanism::St);
    }
    auto curve = epidemic_curve(c);
    REQUIRE(curve.size() == 2);
    CHECK(curve[0] == std::pair<Step, std::size_t>{0, 1});
    CHECK(curve[1] == std::pair<Step, std::size_t>{1, g->n_nodes()});
}

TEST_CASE("seed-only cascade stays at one adopter") {
    auto g = shared(3, {{0, 1}, {1, 2}});
    auto c = simulate_network(g, all_complex(3, 1.0), 0.0, 1.0, 20, 1);
    CHECK(c.n_adopters() == 1);
    for (auto [t, n] : epidemic_curve(c))
        CHECK(n == 1);
    CHECK_FALSE(c.complete);
}

TEST_CASE("complex path adopts on strict majority") {
    auto g = shared(3, {{0, 1}, {1, 2}});
    auto c = simulate_network(g, all_complex(3, 0.4), 0.0, 1.0, 20, seed_starting_at(g, 1));
    REQUIRE(c.seed_node == 1);
    CHECK(c.nodes[0].adoption_time == 1);
    CHECK(c.nodes[2].adoption_time == 1);
    CHECK(c.nodes[0].fired == Mechanism::Cx);

    // The centre needs more than half its two neighbours.
    auto c2 = simulate_network(g, all_complex(3, 0.5), 0.0, 1.0, 20, seed_starting_at(g, 0));
    CHECK_FALSE(c2.nodes[1].adoption_time);
}

TEST_CASE("cascades are reproducible and monotone") {
    auto g = std::make_shared<const Graph>(generate(ErSpec{1000, 0.004}, 1));
    std::vector<NodeAssignment> a;
    for (NodeId v = 0; v < g->n_nodes(); ++v)
        a.push_back(v % 2 ? NodeAssignment::simple(0.3) : NodeAssignment::complex(0.3));
    auto c1 = simulate_network(g, a, 0.005, 1.0, 100000, 8);
    auto c2 = simulate_network(g, a, 0.005, 1.0, 100000, 8);
    CHECK(c1.infected_per_step == c2.infected_per_step);
    CHECK(c1.n_adopters() == g->n_nodes());
    for (std::size_t t = 1; t < c1.infected_per_step.size(); ++t)
        CHECK(c1.infected_per_step[t] >= c1.infected_per_step[t - 1]);
    for (NodeId v = 0; v < g->n_nodes(); ++v)
        if (c1.nodes[v].fired)
            CHECK((c1.nodes[v].fired == Mechanism::St || c1.nodes[v].fired == a[v].mechanism()));
}

TEST_CASE("stop fraction ends the run early") {
    auto g = std::make_shared<const Graph>(generate(ErSpec{500, 0.01}, 1));
    auto c = simulate_network(g, all_complex(g->n_nodes(), 0.2), 0.01, 0.5, 100000, 3);
    CHECK(c.n_adopters() >= 250);
    CHECK(c.n_adopters() < 500);
}

TEST_CASE("star egos follow their mechanism") {
    Rng rng = make_rng(3, {});
    for (int i = 0; i < 2000; ++i) {
        auto s = simulate_star(1, NodeAssignment::simple(1.0), 0.05, 10000, rng);
        REQUIRE(s.neighbour_times[0]);
        CHECK(s.ego_adoption == *s.neighbour_times[0] + 1);
        CHECK(s.fired == Mechanism::Sm);
    }
    for (int i = 0; i < 2000; ++i) {
        auto s = simulate_star(5, NodeAssignment::complex(0.5), 0.05, 10000, rng);
        std::vector<Step> times;
        for (auto t : s.neighbour_times)
            if (t)
                times.push_back(*t);
        std::sort(times.begin(), times.end());
        REQUIRE(times.size() >= 3);
        CHECK(s.ego_adoption == times[2] + 1);
        CHECK(s.fired == Mechanism::Cx);
    }
}

TEST_CASE("cascade JSONL round trip") {
    auto g = std::make_shared<const Graph>(generate(ErSpec{300, 0.02}, 1));
    std::vector<NodeAssignment> a;
    for (NodeId v = 0; v < g->n_nodes(); ++v)
        a.push_back(v % 3 ? NodeAssignment::simple(0.5) : NodeAssignment::complex(0.3));
    auto c = simulate_network(g, a, 0.01, 1.0, 1000, 5);
    std::stringstream buf;
    write_cascade_jsonl(c, buf);
    auto back = read_cascade_jsonl(buf, g, "buf");
    CHECK(back.seed_node == c.seed_node);
    CHECK(back.infected_per_step == c.infected_per_step);
    for (NodeId v = 0; v < g->n_nodes(); ++v) {
        CHECK(back.nodes[v].adoption_time == c.nodes[v].adoption_time);
        CHECK(back.nodes[v].fired == c.nodes[v].fired);
        CHECK(back.assignments[v].mechanism() == a[v].mechanism());
    }
}
