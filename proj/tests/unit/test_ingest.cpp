#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "contagion_lens/errors.hpp"
#include "contagion_lens/forest.hpp"
#include "contagion_lens/ingest.hpp"
#include "contagion_lens/tempnet.hpp"

using namespace clens;

namespace {

FollowGraph follow_of(const std::string& text) {
    std::istringstream in(text);
    return parse_follow_graph(in, "follow");
}

Corpus corpus_of(const std::string& text, const FollowGraph& f) {
    std::istringstream in(text);
    return parse_corpus(in, "corpus", default_hashtags(), f);
}

std::string rec(const std::string& actor, double ts, const std::string& tag = "") {
    std::string h = tag.empty() ? "[]" : "[\"" + tag + "\"]";
    std::ostringstream s;
    s.precision(17);
    s << "{\"actor\":\"" << actor << "\",\"ts\":" << ts << ",\"hashtags\":" << h << "}\n";
    return s.str();
}

} // namespace

TEST_CASE("hashtag variants") {
    const auto& tags = default_hashtags();
    CHECK(tags.size() == 9);
    CHECK(tags.count("#giletjaune") == 1);
    CHECK(tags.count("#GJ") == 1);
    CHECK(tags.count("#gj") == 0);
}

TEST_CASE("three followees then the ego") {
    auto f = follow_of("ego a\nego b\nego c\n# comment\n");
    auto c = corpus_of(rec("a", 100, "#GiletsJaunes") + rec("b", 200, "#giletjaune") + rec("c", 300, "#GJ") +
                           rec("ego", 400, "#GiletsJaunes") + rec("stranger", 10, "#GJ"),
                       f);
    CHECK(c.n_records == 5);
    CHECK(c.unknown_actors == 1);
    auto obs = build_observations(c);
    REQUIRE(obs.size() == 1);
    auto x = extract(obs[0]);
    CHECK(x[kInfectedNeighbours] == 3.0);
    CHECK(x[kSumStimuli] == 3.0);
    CHECK(obs[0].clock == Clock::EventTime);
}

TEST_CASE("egos without adoption are excluded") {
    auto f = follow_of("ego a\nother a\n");
    auto c = corpus_of(rec("a", 100, "#GJ") + rec("ego", 200, "#GJ") + rec("other", 300), f);
    auto obs = build_observations(c);
    REQUIRE(obs.size() == 1);
    CHECK(c.streams[obs[0].ego].ego == "ego");
}

TEST_CASE("malformed corpus lines report their location") {
    auto f = follow_of("ego a\n");
    try {
        corpus_of(rec("a", 1) + "{not json\n", f);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(follow_of("lonely\n"), ParseError);
}

TEST_CASE("log-normal fit recovers its parameters") {
    std::mt19937_64 gen(3);
    std::lognormal_distribution<double> law(-2.0, 0.5);
    std::vector<double> x(10000);
    for (auto& v : x)
        v = law(gen);
    auto fit = fit_lognormal(x);
    CHECK(std::abs(fit.mu + 2.0) < 0.1);
    CHECK(std::abs(fit.sigma - 0.5) < 0.1);
    CHECK(fit.n == 10000);
    CHECK(fit.quantile(0.5) == doctest::Approx(std::exp(fit.mu)).epsilon(1e-9));
}

TEST_CASE("filtering keeps the lowest share of each distribution") {
    auto m = reference_param_model();
    m.filter_quantile = 1.0;
    CHECK(m.phi_at(1.0) == doctest::Approx(m.phi_samples.back()));
    m.filter_quantile = 0.4;
    const double narrow = m.phi_at(1.0), narrow_beta = m.beta_at(5, 1.0);
    m.filter_quantile = 0.8;
    CHECK(narrow <= m.phi_at(1.0));
    CHECK(narrow_beta <= m.beta_at(5, 1.0));

    Rng rng = make_rng(2, {});
    for (int i = 0; i < 2000; ++i) {
        const double b = m.sample_beta(7, rng);
        CHECK(b > 0.0);
        CHECK(b <= 1.0);
        const double p = m.sample_phi(rng, 0.2, 0.4);
        CHECK(p >= m.phi_at(0.8 * 0.2));
        CHECK(p <= m.phi_at(0.8 * 0.4));
    }
}

TEST_CASE("fitting from observations") {
    std::vector<EgoObservation> obs;
    for (int i = 0; i < 40; ++i) {
        EventTimeAccumulator acc(3);
        acc.post(0, true);
        acc.post(1, false);
        acc.post(0, true);
        acc.post(0, true);
        acc.post(2, true);
        obs.push_back(acc.finish(static_cast<std::uint64_t>(i)));
    }
    auto m = fit_param_model(obs, 1.0);
    REQUIRE(m.beta_by_class.size() == 1);
    CHECK(m.beta_by_class.begin()->first == degree_class(3));
    CHECK(std::exp(m.beta_by_class.begin()->second.mu) == doctest::Approx(0.25));
    CHECK_FALSE(m.activity_means.empty());

    auto back = param_model_from_json(to_json(m), "mem");
    CHECK(back.phi_samples == m.phi_samples);
    CHECK(back.filter_quantile == m.filter_quantile);
}

TEST_CASE("decile indices") {
    std::vector<double> v;
    for (int i = 0; i < 100; ++i)
        v.push_back(i);
    auto d = decile_index(v);
    CHECK(d.front() == 0);
    CHECK(d[10] == 1);
    CHECK(d.back() == 9);
    std::vector<double> same(7, 0.3);
    for (auto i : decile_index(same))
        CHECK(i == 0);
}

TEST_CASE("identical observations fill one decile cell") {
    Dataset d;
    Rng rng = make_rng(1, {});
    for (std::size_t i = 0; i < 90; ++i) {
        FeatureVector x{};
        for (auto& v : x)
            v = uniform01(rng);
        d.add(x, static_cast<Mechanism>(i % 3), i + 1);
    }
    ForestConfig fc;
    fc.n_trees = 5;
    fc.criterion = Criterion::Gini;
    auto model = train(d, fc);

    EventTimeAccumulator acc(2);
    acc.post(0, true);
    acc.post(1, true);
    std::vector<EgoObservation> obs(25, acc.finish(0));
    auto cls = classify_corpus(model, obs);
    CHECK(cls.rows.size() == 25);
    std::size_t populated = 0, total = 0;
    for (const auto& row : cls.deciles)
        for (const auto& cell : row) {
            populated += cell.n() > 0;
            total += cell.n();
        }
    CHECK(populated == 1);
    CHECK(total == 25);
    CHECK(cls.forest_counts[0] + cls.forest_counts[1] + cls.forest_counts[2] == 25);

    std::ostringstream table;
    write_counts_table(cls, table);
    CHECK(table.str().rfind(",Sm,Cx,St\nRandom forest,", 0) == 0);
}

TEST_CASE("fixture corpus reproduces the cascade") {
    auto g = std::make_shared<const Graph>(generate(BaSpec{300, 2}, 1));
    auto model = reference_param_model();
    auto act = assign_activities(*g, model.activity_table(8), 0.1, 2);
    Rng rng = make_rng(3, {});
    std::vector<NodeAssignment> a;
    for (NodeId v = 0; v < g->n_nodes(); ++v)
        a.push_back(bernoulli(rng, 0.5) ? NodeAssignment::simple(model.sample_beta(g->degree(v), rng))
                                        : NodeAssignment::complex(model.sample_phi(rng)));
    auto c = simulate_activity_driven(g, act, a, {}, 4);

    std::stringstream corpus, follow;
    write_fixture_corpus(c, corpus, follow);
    auto f = parse_follow_graph(follow, "follow");
    auto parsed = parse_corpus(corpus, "corpus", default_hashtags(), f);
    auto from_corpus = build_observations(parsed);
    auto direct = observations_from_temporal(c);

    std::map<NodeId, FeatureVector> expected;
    for (const auto& o : direct)
        expected[static_cast<NodeId>(o.ego)] = extract(o);
    std::size_t matched = 0;
    for (const auto& o : from_corpus) {
        auto v = fixture_node(parsed.streams[o.ego].ego);
        REQUIRE(v);
        if (!expected.count(*v) || !o.classifiable())
            continue;
        const auto got = extract(o);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(expected[*v][i]).epsilon(1e-12));
        ++matched;
    }
    CHECK(matched > 50);
    CHECK(fixture_node("u12") == NodeId{12});
    CHECK_FALSE(fixture_node("bob"));
}
