#include <doctest.h>

#include <cmath>
#include <vector>

#include "contagion_lens/contagion.hpp"
#include "contagion_lens/errors.hpp"
#include "contagion_lens/likelihood.hpp"
#include "contagion_lens/log.hpp"

using namespace clens;

namespace {

EgoObservation star_obs(Step ta, const std::vector<std::optional<Step>>& times, Mechanism label = Mechanism::Sm) {
    EgoObservation o;
    o.adoption_time = ta;
    o.true_label = label;
    Step first = -1;
    for (auto t : times) {
        NeighbourView nv;
        if (t && *t < ta) {
            nv.infection_time = t;
            nv.stimuli = ta - *t;
            first = first < 0 ? *t : std::min(first, *t);
        }
        o.neighbours.push_back(nv);
    }
    o.susceptible_steps = ta;
    o.exposure_steps = first < 0 ? 0 : ta - first;
    return o;
}

/// Direct evaluation of the closed-form accuracy on a k-star.
double formula(std::size_t k, double beta, double phi, double r) {
    const auto m = static_cast<std::size_t>(std::floor(phi * static_cast<double>(k) + 1e-12)) + 1;
    auto b = [&](double n) { return 1.0 - std::pow(1.0 - beta, n); };
    auto p = [&](double n) { return 1.0 - std::pow(1.0 - r, static_cast<double>(k) - n); };
    double prod = 1.0;
    for (std::size_t n = 1; n < m; ++n) {
        const double pn = p(static_cast<double>(n)), bn = b(static_cast<double>(n));
        prod *= (pn - pn * bn) / (bn + pn - pn * bn);
    }
    return 1.0 - 0.5 * prod * b(static_cast<double>(m));
}

} // namespace

TEST_CASE("single step probabilities") {
    const ModelParams p{0.3, 0.5, 0.005};
    CHECK(step_loglik(Transition::Stay, 2, 4, Scenario::SimpleBySimple, p, false) == doctest::Approx(std::log(0.49)));
    CHECK(step_loglik(Transition::Adopt, 2, 4, Scenario::SimpleBySimple, p, true) ==
          doctest::Approx(std::log(0.50745)));
    CHECK(step_loglik(Transition::Adopt, 2, 4, Scenario::ComplexByComplex, p, false) == kNegInf);
    CHECK(step_loglik(Transition::Adopt, 3, 4, Scenario::ComplexByComplex, p, false) == 0.0);
    CHECK(step_loglik(Transition::Stay, 3, 4, Scenario::ComplexByComplex, p, true) == kNegInf);
    CHECK(step_loglik(Transition::Adopt, 2, 4, Scenario::SimpleBySpontaneous, p, true) ==
          doctest::Approx(std::log(0.005 * 0.49)));
    CHECK(step_loglik(Transition::Adopt, 2, 4, Scenario::ComplexBySpontaneous, p, true) ==
          doctest::Approx(std::log(0.005)));
    CHECK(step_loglik(Transition::Infected, 2, 4, Scenario::SimpleBySimple, p, true) == 0.0);
    CHECK_THROWS_AS(step_loglik(Transition::Stay, 1, 4, Scenario::SimpleBySimple, ModelParams{std::nullopt, 0.5, 0.0},
                                false),
                    ConfigError);
}

TEST_CASE("trajectory log-likelihoods") {
    SUBCASE("one step simple adoption") {
        auto o = star_obs(1, {0});
        CHECK(trajectory_loglik(o, Scenario::SimpleBySimple, {0.5, std::nullopt, 0.0}, false) ==
              doctest::Approx(std::log(0.5)));
    }
    SUBCASE("complex two-star") {
        const double r = 0.005;
        auto o = star_obs(10, {3, 9});
        CHECK(trajectory_loglik(o, Scenario::ComplexByComplex, {std::nullopt, 0.5, r}, true) ==
              doctest::Approx(9.0 * std::log1p(-r)));
    }
    SUBCASE("staying past the threshold rules out complex contagion") {
        auto o = star_obs(11, {3, 9});
        CHECK(trajectory_loglik(o, Scenario::ComplexByComplex, {std::nullopt, 0.5, 0.005}, true) == kNegInf);
    }
}

TEST_CASE("trajectory equals the naive per-step sum") {
    Rng rng = make_rng(4, {});
    const ModelParams p{0.3, 0.4, 0.01};
    for (int i = 0; i < 300; ++i) {
        const std::size_t k = 1 + static_cast<std::size_t>(uniform01(rng) * 8);
        std::vector<std::optional<Step>> times;
        for (std::size_t j = 0; j < k; ++j)
            times.push_back(bernoulli(rng, 0.7) ? std::optional<Step>(static_cast<Step>(uniform01(rng) * 30))
                                                : std::nullopt);
        auto o = star_obs(31, times);
        const auto n = infected_counts(o);
        for (auto s : {Scenario::SimpleBySimple, Scenario::SimpleBySpontaneous, Scenario::ComplexByComplex,
                       Scenario::ComplexBySpontaneous}) {
            double naive = 0.0;
            for (std::size_t t = 0; t < n.size(); ++t)
                naive += step_loglik(t + 1 < n.size() ? Transition::Stay : Transition::Adopt, n[t], k, s, p, true);
            const double fast = trajectory_loglik(o, s, p, true);
            if (std::isinf(naive))
                CHECK(fast == naive);
            else
                CHECK(fast == doctest::Approx(naive).epsilon(1e-12));
        }
    }
}

TEST_CASE("decisions break ties by class priority") {
    CHECK(decide({-1.0, -1.0, -1.0}, 3).predicted == Mechanism::Sm);
    CHECK(decide({-2.0, -1.0, -1.0}, 3).predicted == Mechanism::Cx);
    CHECK(decide({-2.0, -3.0, -1.0}, 3).predicted == Mechanism::St);
    CHECK(decide({-2.0, -3.0, -1.0}, 2).predicted == Mechanism::Sm);
    auto only = decide({kNegInf, -1.0, kNegInf}, 3);
    CHECK(only.predicted == Mechanism::Cx);
    CHECK(std::isinf(only.margin));
}

TEST_CASE("complex egos are always recognised with known parameters") {
    Rng rng = make_rng(9, {});
    for (double phi : {0.1, 0.3, 0.5, 0.7, 0.9})
        for (double beta : {0.1, 0.9}) {
            for (int i = 0; i < 300; ++i) {
                const std::size_t k = 1 + static_cast<std::size_t>(uniform01(rng) * 9);
                auto s = simulate_star(k, NodeAssignment::complex(phi), 0.05, 10000, rng);
                auto obs = observation_from_star(s);
                REQUIRE(obs);
                CHECK(classify_known(*obs, {beta, phi, 0.0}, 2).predicted == Mechanism::Cx);
            }
        }
}

TEST_CASE("parameter estimates") {
    auto toy = star_obs(7, {2, 5, std::nullopt});
    auto e = estimate_params(toy);
    REQUIRE(e.beta_hat);
    CHECK(*e.beta_hat == doctest::Approx(1.0 / 7.0));
    CHECK(e.phi_hat == doctest::Approx(2.0 / 3.0));

    auto five = star_obs(6, {1, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
    CHECK(*estimate_params(five).beta_hat == doctest::Approx(0.2));
    CHECK(estimate_params(five).phi_hat == doctest::Approx(0.2));

    auto single = star_obs(1, {0, std::nullopt});
    CHECK(*estimate_params(single).beta_hat == 1.0);
    CHECK_FALSE(estimate_params(star_obs(3, {std::nullopt})).beta_hat);

    CHECK(effective_phi(0.5, 4) == doctest::Approx(0.375));
}

TEST_CASE("spontaneous rate estimates") {
    EgoObservation o;
    o.neighbours.resize(1);
    o.susceptible_steps = 10;
    o.exposure_steps = 4;
    o.true_label = Mechanism::St;
    std::vector<EgoObservation> one{o};
    CHECK(estimate_r(one).literal == doctest::Approx(0.4));

    // No transmission possible: every adoption is spontaneous.
    auto g = std::make_shared<const Graph>(generate(ErSpec{1000, 0.004}, 5));
    std::vector<NodeAssignment> inert(g->n_nodes(), NodeAssignment::complex(1.0));
    auto c = simulate_network(g, inert, 0.1, 1.0, 100000, 6);
    std::vector<EgoObservation> obs;
    for (NodeId v = 0; v < g->n_nodes(); ++v)
        if (auto x = observation_from_cascade(c, v))
            obs.push_back(*x);
    auto r = estimate_r(obs);
    CHECK(std::abs(r.alternative - 0.1) < 0.01);
}

TEST_CASE("estimated-parameter classification rejects late complex adoptions") {
    auto late = star_obs(9, {2, 3});
    auto res = classify_unknown(late, 0.01);
    CHECK(res.predicted != Mechanism::Cx);
    CHECK(res.loglik[index_of(Mechanism::Cx)] == kNegInf);
}

TEST_CASE("analytic accuracy") {
    CHECK(analytic_accuracy(4, 0.9, 0.1, 0.05) == doctest::Approx(0.55));
    CHECK(analytic_accuracy(4, 1.0, 0.1, 0.05) == doctest::Approx(0.5));
    CHECK(analytic_accuracy(4, 0.5, 0.5, 0.05) == doctest::Approx(formula(4, 0.5, 0.5, 0.05)).epsilon(1e-12));
    // Frozen from the oracle.
    CHECK(analytic_accuracy(4, 0.5, 0.5, 0.05) == doctest::Approx(0.998281).epsilon(1e-6));
    for (std::size_t k : {1, 2, 5, 9})
        for (double beta : {0.1, 0.5, 0.9})
            for (double phi : {0.1, 0.3, 0.7})
                CHECK(analytic_accuracy(k, beta, phi, 0.05) == doctest::Approx(formula(k, beta, phi, 0.05)));

    int warnings = 0;
    set_warning_sink([&](const std::string&) { ++warnings; });
    CHECK(analytic_accuracy(3, 0.5, 1.0, 0.05) == 1.0);
    set_warning_sink(nullptr);
    CHECK(warnings == 1);
}

TEST_CASE("analytic accuracy agrees with star simulation") {
    Rng rng = make_rng(11, {});
    const int reps = 100000;
    int wrong = 0;
    for (int i = 0; i < reps; ++i) {
        auto s = simulate_star(4, NodeAssignment::simple(0.5), 0.05, 100000, rng);
        auto obs = observation_from_star(s);
        REQUIRE(obs);
        wrong += classify_known(*obs, {0.5, 0.5, 0.0}, 2).predicted != Mechanism::Sm;
    }
    const double simulated = 1.0 - 0.5 * wrong / reps;
    CHECK(std::abs(simulated - analytic_accuracy(4, 0.5, 0.5, 0.05)) < 0.01);
}

TEST_CASE("ensemble analytic accuracy averages over the degree law") {
    StarEnsembleSpec law{1, 1000, 0.004};
    const auto w = truncated_binomial_pmf(1000, 0.004, 80);
    double expected = 0.0, z = 0.0;
    for (std::size_t k = 1; k < w.size(); ++k) {
        expected += w[k] * formula(k, 0.3, 0.5, 0.05);
        z += w[k];
    }
    CHECK(analytic_accuracy(law, 0.3, 0.5, 0.05) == doctest::Approx(expected / z).epsilon(1e-9));
}
