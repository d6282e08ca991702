#include "contagion_lens/contagion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "contagion_lens/errors.hpp"

namespace clens {

std::optional<Mechanism> parse_mechanism(std::string_view s) noexcept {
    for (auto m : kMechanisms)
        if (to_string(m) == s)
            return m;
    return std::nullopt;
}

NodeAssignment NodeAssignment::simple(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0))
        throw ParameterError("beta must lie in [0,1]");
    return {Mechanism::Sm, beta};
}

NodeAssignment NodeAssignment::complex(double phi) {
    if (!(phi >= 0.0 && phi <= 1.0))
        throw ParameterError("phi must lie in [0,1]");
    return {Mechanism::Cx, phi};
}

double NodeAssignment::beta() const {
    if (mechanism_ != Mechanism::Sm)
        throw ConfigError("beta requested from a complex-contagion assignment");
    return parameter_;
}

double NodeAssignment::phi() const {
    if (mechanism_ != Mechanism::Cx)
        throw ConfigError("phi requested from a simple-contagion assignment");
    return parameter_;
}

double threshold_level(std::size_t k, double phi) noexcept {
    double level = phi * static_cast<double>(k);
    double nearest = std::round(level);
    if (std::abs(level - nearest) < 1e-9)
        level = nearest;
    return level;
}

bool threshold_reached(std::size_t n_inf, std::size_t k, double phi) noexcept {
    return static_cast<double>(n_inf) - threshold_level(k, phi) > 0.0;
}

std::size_t required_infected(std::size_t k, double phi) noexcept {
    double level = threshold_level(k, phi);
    return static_cast<std::size_t>(std::floor(level)) + 1;
}

CascadeRecord simulate_network(std::shared_ptr<const Graph> g, std::vector<NodeAssignment> assignments,
                               double r, double stop_fraction, Step t_max, std::uint64_t seed) {
    if (!g || g->n_nodes() == 0)
        throw ConfigError("simulate_network: empty graph");
    const std::size_t n = g->n_nodes();
    if (assignments.size() != n)
        throw ConfigError("simulate_network: assignments cover " + std::to_string(assignments.size()) +
                          " of " + std::to_string(n) + " nodes");
    if (!(r >= 0.0 && r <= 1.0))
        throw ParameterError("simulate_network: r must lie in [0,1]");
    if (!(stop_fraction > 0.0 && stop_fraction <= 1.0))
        throw ParameterError("simulate_network: stop_fraction must lie in (0,1]");
    if (t_max < 0)
        throw ParameterError("simulate_network: t_max must be >= 0");

    Rng rng{seed};
    CascadeRecord c;
    c.graph = g;
    c.assignments = std::move(assignments);
    c.r = r;
    c.rng_seed = seed;
    c.nodes.assign(n, {});

    // log(1 - beta) per Sm node; stay probability is exp(n_inf * log_stay).
    std::vector<double> log_stay(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (c.assignments[i].mechanism() == Mechanism::Sm)
            log_stay[i] = std::log1p(-c.assignments[i].beta());

    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    c.seed_node = static_cast<NodeId>(pick(rng));
    std::vector<std::uint32_t> n_inf(n, 0);
    std::vector<NodeId> susceptible;
    susceptible.reserve(n);
    for (NodeId v = 0; v < n; ++v)
        if (v != c.seed_node)
            susceptible.push_back(v);
    c.nodes[c.seed_node].adoption_time = 0;
    for (NodeId w : g->neighbours(c.seed_node))
        ++n_inf[w];

    const auto target = static_cast<std::size_t>(std::ceil(stop_fraction * static_cast<double>(n) - 1e-9));
    std::size_t infected = 1;
    c.infected_per_step.push_back(infected);

    std::vector<std::pair<NodeId, Mechanism>> fresh;
    Step t = 0;
    while (infected < target && t < t_max) {
        fresh.clear();
        for (NodeId v : susceptible) {
            if (bernoulli(rng, r)) {
                fresh.emplace_back(v, Mechanism::St);
                continue;
            }
            const auto& a = c.assignments[v];
            if (a.mechanism() == Mechanism::Sm) {
                if (n_inf[v] > 0 && uniform01(rng) >= std::exp(n_inf[v] * log_stay[v]))
                    fresh.emplace_back(v, Mechanism::Sm);
            } else if (threshold_reached(n_inf[v], g->degree(v), a.phi())) {
                fresh.emplace_back(v, Mechanism::Cx);
            }
        }
        ++t;
        for (auto [v, m] : fresh) {
            c.nodes[v].adoption_time = t;
            c.nodes[v].fired = m;
            for (NodeId w : g->neighbours(v))
                ++n_inf[w];
        }
        if (!fresh.empty())
            std::erase_if(susceptible, [&](NodeId v) { return c.nodes[v].adoption_time.has_value(); });
        infected += fresh.size();
        c.infected_per_step.push_back(infected);
    }
    c.horizon = t;
    c.complete = infected >= target;
    return c;
}

StarCascade simulate_star(std::size_t k, const NodeAssignment& ego, double r_nb, Step horizon, Rng& rng) {
    if (!(r_nb > 0.0 && r_nb <= 1.0))
        throw ParameterError("simulate_star: r_nb must lie in (0,1]");
    if (horizon < 1)
        throw ParameterError("simulate_star: horizon must be >= 1");
    StarCascade s{ego, {}, std::nullopt, std::nullopt, horizon};
    s.neighbour_times.resize(k);
    std::vector<Step> sorted;
    sorted.reserve(k);
    std::geometric_distribution<Step> wait(r_nb);
    for (auto& t : s.neighbour_times) {
        Step tj = 1 + wait(rng);
        if (tj <= horizon) {
            t = tj;
            sorted.push_back(tj);
        }
    }
    std::sort(sorted.begin(), sorted.end());

    const bool simple = ego.mechanism() == Mechanism::Sm;
    const double log_stay = simple ? std::log1p(-ego.beta()) : 0.0;
    std::size_t n_inf = 0;
    for (Step t = 0; t < horizon; ++t) {
        while (n_inf < sorted.size() && sorted[n_inf] <= t)
            ++n_inf;
        bool adopt;
        if (simple)
            adopt = n_inf > 0 && uniform01(rng) >= std::exp(static_cast<double>(n_inf) * log_stay);
        else
            adopt = threshold_reached(n_inf, k, ego.phi());
        if (adopt) {
            s.ego_adoption = t + 1;
            s.fired = ego.mechanism();
            break;
        }
        // Neighbour set is final and the ego did not move: nothing changes.
        if (n_inf == sorted.size() && (!simple || n_inf == 0))
            break;
    }
    return s;
}

std::vector<StarCascade> simulate_star_ensemble(const StarEnsembleSpec& degree_law,
                                                std::span<const NodeAssignment> ego_grid, double r_nb,
                                                Step horizon, std::size_t n_egos_per_cell, std::uint64_t seed) {
    validate(ModelSpec{degree_law});
    std::vector<StarCascade> out;
    out.reserve(ego_grid.size() * n_egos_per_cell);
    for (std::size_t cell = 0; cell < ego_grid.size(); ++cell)
        for (std::size_t e = 0; e < n_egos_per_cell; ++e) {
            Rng rng = make_rng(seed, {cell, e});
            std::size_t k = sample_truncated_binomial(degree_law.trials, degree_law.p, rng);
            out.push_back(simulate_star(k, ego_grid[cell], r_nb, horizon, rng));
        }
    return out;
}

std::vector<std::pair<Step, std::size_t>> epidemic_curve(const CascadeRecord& c) {
    std::vector<std::pair<Step, std::size_t>> curve;
    curve.reserve(c.infected_per_step.size());
    for (std::size_t t = 0; t < c.infected_per_step.size(); ++t)
        curve.emplace_back(static_cast<Step>(t), c.infected_per_step[t]);
    return curve;
}

void write_cascade_jsonl(const CascadeRecord& c, std::ostream& out) {
    nlohmann::json header{{"graph", c.graph_ref},
                          {"n_nodes", c.nodes.size()},
                          {"r", c.r},
                          {"seed", c.rng_seed},
                          {"seed_node", c.seed_node},
                          {"horizon", c.horizon},
                          {"complete", c.complete}};
    out << header.dump() << '\n';
    for (std::size_t v = 0; v < c.nodes.size(); ++v) {
        const auto& node = c.nodes[v];
        const auto& a = c.assignments[v];
        nlohmann::json line{{"node", v},
                            {"time", node.adoption_time ? nlohmann::json(*node.adoption_time) : nlohmann::json()},
                            {"fired", node.fired ? nlohmann::json(std::string(to_string(*node.fired)))
                                                 : nlohmann::json()},
                            {"assigned", std::string(to_string(a.mechanism()))},
                            {"parameter", a.parameter()}};
        out << line.dump() << '\n';
    }
}

CascadeRecord read_cascade_jsonl(std::istream& in, std::shared_ptr<const Graph> g, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    auto parse = [&](const std::string& text) {
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
    };
    if (!std::getline(in, line))
        throw ParseError(source, 1, "missing header line");
    ++lineno;
    auto header = parse(line);
    CascadeRecord c;
    c.graph = std::move(g);
    try {
        c.graph_ref = header.at("graph").get<std::string>();
        c.r = header.at("r").get<double>();
        c.rng_seed = header.at("seed").get<std::uint64_t>();
        c.seed_node = header.at("seed_node").get<NodeId>();
        c.horizon = header.at("horizon").get<Step>();
        c.complete = header.at("complete").get<bool>();
        auto n = header.at("n_nodes").get<std::size_t>();
        if (c.graph && c.graph->n_nodes() != n)
            throw ParseError(source, lineno, "graph size does not match header");
        c.nodes.assign(n, {});
        c.assignments.assign(n, NodeAssignment::simple(0.0));
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty())
                continue;
            auto rec = parse(line);
            auto v = rec.at("node").get<std::size_t>();
            if (v >= n)
                throw ParseError(source, lineno, "node id out of range");
            if (!rec.at("time").is_null())
                c.nodes[v].adoption_time = rec["time"].get<Step>();
            if (!rec.at("fired").is_null())
                c.nodes[v].fired = parse_mechanism(rec["fired"].get<std::string>());
            auto assigned = parse_mechanism(rec.at("assigned").get<std::string>());
            double p = rec.at("parameter").get<double>();
            if (assigned == Mechanism::Sm)
                c.assignments[v] = NodeAssignment::simple(p);
            else if (assigned == Mechanism::Cx)
                c.assignments[v] = NodeAssignment::complex(p);
            else
                throw ParseError(source, lineno, "assigned must be Sm or Cx");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(source, lineno, e.what());
    }
    c.infected_per_step.assign(static_cast<std::size_t>(c.horizon) + 1, 0);
    for (const auto& node : c.nodes)
        if (node.adoption_time && *node.adoption_time <= c.horizon)
            ++c.infected_per_step[static_cast<std::size_t>(*node.adoption_time)];
    for (std::size_t t = 1; t < c.infected_per_step.size(); ++t)
        c.infected_per_step[t] += c.infected_per_step[t - 1];
    return c;
}

} // namespace clens
